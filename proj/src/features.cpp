#include "emonet/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>

namespace emonet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool missing(double v) { return std::isnan(v); }

// Euclidean distance over mutually observed coordinates, rescaled by the
// observed fraction so sparse rows are not spuriously close.
double row_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double sum = 0.0;
  int observed = 0;
  for (Eigen::Index f = 0; f < a.size(); ++f) {
    if (!missing(a[f]) && !missing(b[f])) {
      double d = a[f] - b[f];
      sum += d * d;
      observed += 1;
    }
  }
  if (observed == 0) return std::numeric_limits<double>::infinity();
  return std::sqrt(sum * static_cast<double>(a.size()) / observed);
}

}  // namespace

const Matrix& FeaturePanel::labels(const std::string& target) const {
  if (target == "stress") return stress;
  if (target == "happiness") return happiness;
  throw Error("unknown target '" + target + "'");
}

FeaturePanel read_feature_csv(std::istream& features, std::istream& labels) {
  std::string line;
  if (!std::getline(features, line)) throw Error("empty feature csv");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "user_id" || header[1] != "date") {
    throw Error("feature csv: expected header user_id,date,<features>");
  }
  FeaturePanel p;
  p.feature_names.assign(header.begin() + 2, header.end());

  struct Row {
    std::string user, date;
    std::vector<double> vals;
  };
  std::vector<Row> rows;
  std::set<std::string> user_set;
  std::set<std::string> day_set;
  int lineno = 1;
  while (std::getline(features, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    const std::string where = "feature csv line " + std::to_string(lineno);
    if (fields.size() != header.size()) throw Error(where + ": field count mismatch");
    Row r;
    r.user = fields[0];
    r.date = fields[1];
    for (std::size_t i = 2; i < fields.size(); ++i) {
      r.vals.push_back(fields[i].empty() ? kNaN : parse_double(fields[i], where));
    }
    user_set.insert(r.user);
    day_set.insert(r.date);
    rows.push_back(std::move(r));
  }
  p.users.assign(user_set.begin(), user_set.end());
  p.days.assign(day_set.begin(), day_set.end());
  std::map<std::string, int> uidx, didx;
  for (int i = 0; i < p.n_users(); ++i) uidx[p.users[i]] = i;
  for (int i = 0; i < p.n_days(); ++i) didx[p.days[i]] = i;
  p.values.assign(p.n_users(),
                  Matrix::Constant(p.n_days(), p.n_features(), kNaN));
  for (const auto& r : rows) {
    Matrix& m = p.values[uidx[r.user]];
    for (int f = 0; f < p.n_features(); ++f) m(didx[r.date], f) = r.vals[f];
  }

  p.stress = Matrix::Constant(p.n_users(), p.n_days(), kNaN);
  p.happiness = Matrix::Constant(p.n_users(), p.n_days(), kNaN);
  if (!std::getline(labels, line)) throw Error("empty label csv");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "user_id,date,stress,happiness") {
    throw Error("label csv: expected header user_id,date,stress,happiness");
  }
  lineno = 1;
  while (std::getline(labels, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    const std::string where = "label csv line " + std::to_string(lineno);
    if (fields.size() != 4) throw Error(where + ": expected 4 fields");
    auto u = uidx.find(fields[0]);
    auto d = didx.find(fields[1]);
    if (u == uidx.end() || d == didx.end()) continue;  // label without features
    if (!fields[2].empty()) p.stress(u->second, d->second) = parse_double(fields[2], where);
    if (!fields[3].empty()) p.happiness(u->second, d->second) = parse_double(fields[3], where);
  }
  return p;
}

void write_feature_csv(const FeaturePanel& p, std::ostream& out) {
  out << "user_id,date";
  for (const auto& f : p.feature_names) out << ',' << f;
  out << '\n';
  for (int u = 0; u < p.n_users(); ++u) {
    for (int d = 0; d < p.n_days(); ++d) {
      out << p.users[u] << ',' << p.days[d];
      for (int f = 0; f < p.n_features(); ++f) {
        out << ',';
        if (!missing(p.values[u](d, f))) out << format_double(p.values[u](d, f));
      }
      out << '\n';
    }
  }
}

void write_label_csv(const FeaturePanel& p, std::ostream& out) {
  out << "user_id,date,stress,happiness\n";
  for (int u = 0; u < p.n_users(); ++u) {
    for (int d = 0; d < p.n_days(); ++d) {
      out << p.users[u] << ',' << p.days[d] << ',';
      if (!missing(p.stress(u, d))) out << format_double(p.stress(u, d));
      out << ',';
      if (!missing(p.happiness(u, d))) out << format_double(p.happiness(u, d));
      out << '\n';
    }
  }
}

DropSparseResult drop_sparse_features(const FeaturePanel& panel) {
  const long total = static_cast<long>(panel.n_users()) * panel.n_days();
  if (total == 0) throw Error("drop_sparse_features: empty panel");
  DropSparseResult out;
  std::vector<int> keep;
  for (int f = 0; f < panel.n_features(); ++f) {
    long miss = 0;
    for (const auto& m : panel.values) {
      for (int d = 0; d < m.rows(); ++d) miss += missing(m(d, f)) ? 1 : 0;
    }
    if (2 * miss > total) {
      out.dropped.push_back(panel.feature_names[f]);
    } else {
      keep.push_back(f);
    }
  }
  if (keep.empty()) throw Error("drop_sparse_features: all features dropped");
  out.panel = panel;
  out.panel.feature_names.clear();
  for (int f : keep) out.panel.feature_names.push_back(panel.feature_names[f]);
  for (int u = 0; u < panel.n_users(); ++u) {
    Matrix m(panel.n_days(), static_cast<int>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) m.col(i) = panel.values[u].col(keep[i]);
    out.panel.values[u] = std::move(m);
  }
  return out;
}

namespace {

// One k-NN pass over a pool of rows; fills what it can, leaves the rest.
void impute_pool(std::vector<Eigen::Ref<Matrix>> pool, int k) {
  std::vector<Eigen::RowVectorXd> rows;
  for (auto& m : pool) {
    for (Eigen::Index d = 0; d < m.rows(); ++d) rows.push_back(m.row(d));
  }
  const int n = static_cast<int>(rows.size());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> fills;  // flat row, feature
  std::vector<double> fill_values;
  int flat = 0;
  for (auto& m : pool) {
    for (Eigen::Index d = 0; d < m.rows(); ++d, ++flat) {
      for (Eigen::Index f = 0; f < m.cols(); ++f) {
        if (!missing(m(d, f))) continue;
        // Distance to every other row with feature f observed.
        std::vector<std::pair<double, int>> cand;
        for (int r = 0; r < n; ++r) {
          if (r == flat || missing(rows[r][f])) continue;
          double dist = row_distance(rows[flat], rows[r]);
          if (std::isfinite(dist)) cand.emplace_back(dist, r);
        }
        if (cand.empty()) continue;
        int kk = std::min<int>(k, static_cast<int>(cand.size()));
        std::partial_sort(cand.begin(), cand.begin() + kk, cand.end());
        double sum = 0.0;
        for (int i = 0; i < kk; ++i) sum += rows[cand[i].second][f];
        fills.emplace_back(flat, f);
        fill_values.push_back(sum / kk);
      }
    }
  }
  // Apply after the pass so fills never feed other fills.
  for (std::size_t i = 0; i < fills.size(); ++i) {
    auto [r, f] = fills[i];
    Eigen::Index off = 0;
    for (auto& m : pool) {
      if (r < off + m.rows()) {
        m(r - off, f) = fill_values[i];
        break;
      }
      off += m.rows();
    }
  }
}

}  // namespace

FeaturePanel knn_impute(const FeaturePanel& panel, int k) {
  if (k < 1) throw Error("knn_impute: k must be >= 1");
  FeaturePanel out = panel;
  for (auto& m : out.values) {
    impute_pool({Eigen::Ref<Matrix>(m)}, k);  // stage 1: per user
  }
  std::vector<Eigen::Ref<Matrix>> all;
  for (auto& m : out.values) all.emplace_back(m);
  impute_pool(all, k);  // stage 2: global pool
  for (const auto& m : out.values) {
    if (m.hasNaN()) throw Error("knn_impute: values still missing after global stage");
  }
  return out;
}

OutlierResult remove_outliers(const FeaturePanel& panel, double z_threshold) {
  if (!(z_threshold > 0.0)) throw Error("remove_outliers: threshold must be positive");
  const int nf = panel.n_features();
  std::vector<double> mean(nf, 0.0), sd(nf, 0.0);
  std::vector<long> count(nf, 0);
  for (const auto& m : panel.values) {
    for (Eigen::Index d = 0; d < m.rows(); ++d) {
      for (int f = 0; f < nf; ++f) {
        if (!missing(m(d, f))) {
          mean[f] += m(d, f);
          count[f] += 1;
        }
      }
    }
  }
  for (int f = 0; f < nf; ++f) {
    if (count[f] > 0) mean[f] /= count[f];
  }
  for (const auto& m : panel.values) {
    for (Eigen::Index d = 0; d < m.rows(); ++d) {
      for (int f = 0; f < nf; ++f) {
        if (!missing(m(d, f))) {
          double c = m(d, f) - mean[f];
          sd[f] += c * c;
        }
      }
    }
  }
  for (int f = 0; f < nf; ++f) {
    sd[f] = count[f] > 0 ? std::sqrt(sd[f] / count[f]) : 0.0;
  }
  OutlierResult out;
  out.panel = panel;
  for (int u = 0; u < panel.n_users(); ++u) {
    for (int d = 0; d < panel.n_days(); ++d) {
      bool outlier = false;
      for (int f = 0; f < nf && !outlier; ++f) {
        double v = panel.values[u](d, f);
        if (missing(v) || sd[f] == 0.0) continue;
        if (std::abs((v - mean[f]) / sd[f]) > z_threshold) outlier = true;
      }
      if (outlier) {
        out.panel.values[u].row(d).setConstant(kNaN);
        out.removed += 1;
      }
    }
  }
  return out;
}

std::pair<FeaturePanel, Standardization> standardize(
    const FeaturePanel& panel,
    const std::function<bool(int user, int day)>& fit_row) {
  const int nf = panel.n_features();
  Standardization st;
  st.mean.assign(nf, 0.0);
  st.sd.assign(nf, 0.0);
  std::vector<long> count(nf, 0);
  auto fit = [&](int u, int d) { return !fit_row || fit_row(u, d); };
  for (int u = 0; u < panel.n_users(); ++u) {
    for (int d = 0; d < panel.n_days(); ++d) {
      if (!fit(u, d)) continue;
      for (int f = 0; f < nf; ++f) {
        double v = panel.values[u](d, f);
        if (!missing(v)) {
          st.mean[f] += v;
          count[f] += 1;
        }
      }
    }
  }
  for (int f = 0; f < nf; ++f) {
    if (count[f] > 0) st.mean[f] /= count[f];
  }
  for (int u = 0; u < panel.n_users(); ++u) {
    for (int d = 0; d < panel.n_days(); ++d) {
      if (!fit(u, d)) continue;
      for (int f = 0; f < nf; ++f) {
        double v = panel.values[u](d, f);
        if (!missing(v)) {
          double c = v - st.mean[f];
          st.sd[f] += c * c;
        }
      }
    }
  }
  for (int f = 0; f < nf; ++f) {
    st.sd[f] = count[f] > 0 ? std::sqrt(st.sd[f] / count[f]) : 0.0;
  }
  FeaturePanel out = panel;
  for (auto& m : out.values) {
    for (Eigen::Index d = 0; d < m.rows(); ++d) {
      for (int f = 0; f < nf; ++f) {
        if (missing(m(d, f))) continue;
        m(d, f) = st.sd[f] > 0.0 ? (m(d, f) - st.mean[f]) / st.sd[f] : 0.0;
      }
    }
  }
  return {std::move(out), std::move(st)};
}

SequenceBuild make_sequences(const FeaturePanel& panel, int L,
                             const std::string& target) {
  if (L < 1) throw Error("make_sequences: L must be >= 1");
  const Matrix& y = panel.labels(target);
  SequenceBuild out;
  for (int u = 0; u < panel.n_users(); ++u) {
    for (int n = L; n < panel.n_days(); ++n) {
      if (missing(y(u, n))) continue;
      Matrix window = panel.values[u].middleRows(n - L, L);
      if (window.hasNaN()) {
        out.skipped_incomplete += 1;
        continue;
      }
      SequenceSample s;
      s.sequence = std::move(window);
      s.target = y(u, n);
      s.user = u;
      s.day = n;
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

int bin_label(double score) {
  if (!(score >= 0.0 && score <= 100.0)) {
    throw Error("bin_label: score outside [0,100]");
  }
  if (score < 33.0) return 0;
  if (score > 66.0) return 2;
  return 1;
}

}  // namespace emonet
