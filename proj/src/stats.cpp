#include "emonet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>

namespace emonet::stats {

Correlation correlation_from_string(const std::string& s) {
  if (s == "independence") return Correlation::kIndependence;
  if (s == "exchangeable") return Correlation::kExchangeable;
  if (s == "ar1") return Correlation::kAr1;
  throw Error("unknown correlation structure '" + s + "'");
}

namespace {

Matrix working_correlation(Correlation kind, int n, double alpha) {
  Matrix r = Matrix::Identity(n, n);
  if (kind == Correlation::kIndependence || n == 1) return r;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      r(i, j) = kind == Correlation::kAr1 ? std::pow(alpha, std::abs(i - j))
                                          : alpha;
    }
  }
  return r;
}

void check_design(const GeeProblem& problem, int& n_obs, int& n_cov) {
  if (problem.clusters.size() < 2) throw Error("gee_fit: need at least 2 clusters");
  n_obs = 0;
  n_cov = static_cast<int>(problem.clusters.front().covariates.cols());
  if (n_cov < 1) throw Error("gee_fit: need at least one covariate");
  for (const auto& c : problem.clusters) {
    if (c.covariates.rows() != c.response.size() || c.covariates.cols() != n_cov) {
      throw Error("gee_fit: cluster dimensions inconsistent");
    }
    n_obs += static_cast<int>(c.response.size());
  }
  Matrix pooled(n_obs, n_cov);
  int row = 0;
  for (const auto& c : problem.clusters) {
    pooled.middleRows(row, c.covariates.rows()) = c.covariates;
    row += static_cast<int>(c.covariates.rows());
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(pooled);
  qr.setThreshold(1e-10);
  if (qr.rank() < n_cov) {
    // Name the columns the pivoting pushed past the rank boundary.
    std::string cols;
    auto perm = qr.colsPermutation().indices();
    for (int i = qr.rank(); i < n_cov; ++i) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(perm[i]);
    }
    throw Error("gee_fit: singular design, collinear columns {" + cols + "}");
  }
}

}  // namespace

GeeFit gee_fit(const GeeProblem& problem) {
  int n_obs = 0, n_cov = 0;
  check_design(problem, n_obs, n_cov);

  GeeFit fit;
  fit.beta = Vector::Zero(n_cov);
  double alpha = 0.0;

  for (int iter = 1; iter <= problem.max_iter; ++iter) {
    fit.iterations = iter;
    // GLS update under the current working correlation.
    Matrix bread = Matrix::Zero(n_cov, n_cov);
    Vector rhs = Vector::Zero(n_cov);
    for (const auto& c : problem.clusters) {
      const int n = static_cast<int>(c.response.size());
      Matrix rinv = working_correlation(problem.correlation, n, alpha).inverse();
      bread += c.covariates.transpose() * rinv * c.covariates;
      rhs += c.covariates.transpose() * rinv * c.response;
    }
    Vector beta_new = bread.ldlt().solve(rhs);

    // Dispersion and correlation parameter from Pearson residuals.
    double phi = 0.0;
    for (const auto& c : problem.clusters) {
      Vector r = c.response - c.covariates * beta_new;
      phi += r.squaredNorm();
    }
    phi /= std::max(1, n_obs - n_cov);
    if (phi <= 0.0) phi = 1.0;
    fit.dispersion = phi;
    if (problem.correlation != Correlation::kIndependence) {
      double num = 0.0;
      long denom_pairs = 0;
      for (const auto& c : problem.clusters) {
        const int n = static_cast<int>(c.response.size());
        Vector e = (c.response - c.covariates * beta_new) / std::sqrt(phi);
        if (problem.correlation == Correlation::kAr1) {
          for (int i = 0; i + 1 < n; ++i) num += e[i] * e[i + 1];
          denom_pairs += std::max(0, n - 1);
        } else {
          for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) num += e[i] * e[j];
          denom_pairs += static_cast<long>(n) * (n - 1) / 2;
        }
      }
      long denom = std::max<long>(1, denom_pairs - n_cov);
      alpha = std::clamp(num / denom, -0.99, 0.99);
    }

    double step = (beta_new - fit.beta).cwiseAbs().maxCoeff();
    fit.beta = beta_new;
    if (step < problem.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.alpha_hat = alpha;

  // Sandwich covariance; the dispersion cancels between bread and meat.
  Matrix bread = Matrix::Zero(n_cov, n_cov);
  Matrix meat = Matrix::Zero(n_cov, n_cov);
  for (const auto& c : problem.clusters) {
    const int n = static_cast<int>(c.response.size());
    Matrix rinv = working_correlation(problem.correlation, n, alpha).inverse();
    Vector r = c.response - c.covariates * fit.beta;
    Matrix xtr = c.covariates.transpose() * rinv;
    bread += xtr * c.covariates;
    Vector u = xtr * r;
    meat += u * u.transpose();
  }
  Matrix bread_inv = bread.inverse();
  Matrix cov = bread_inv * meat * bread_inv;
  fit.robust_se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.p_values = Vector::Zero(n_cov);
  for (int i = 0; i < n_cov; ++i) {
    double se = fit.robust_se[i];
    fit.p_values[i] =
        se > 0.0 ? 2.0 * normal_sf(std::abs(fit.beta[i]) / se) : 0.0;
  }
  return fit;
}

ClusterAssignment ward_cluster(const Matrix& traits, int n_clusters) {
  const int n = static_cast<int>(traits.rows());
  if (n == 0) throw Error("ward_cluster: empty input");
  if (n_clusters > n) throw Error("ward_cluster: fewer participants than clusters");

  // Lance-Williams on the Ward objective increase
  // delta(A,B) = |A||B|/(|A|+|B|) * ||mu_A - mu_B||^2.
  std::vector<std::vector<int>> members(n);
  std::vector<int> sizes(n, 1);
  std::vector<bool> alive(n, true);
  Matrix delta(n, n);
  for (int i = 0; i < n; ++i) {
    members[i] = {i};
    for (int j = 0; j < n; ++j) {
      delta(i, j) = 0.5 * (traits.row(i) - traits.row(j)).squaredNorm();
    }
  }

  struct Merge {
    int a, b;
    double height;
  };
  std::vector<Merge> merges;
  for (int round = 0; round < n - 1; ++round) {
    int bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        if (delta(i, j) < best) {
          best = delta(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    merges.push_back({bi, bj, best});
    const int ni = sizes[bi], nj = sizes[bj];
    for (int k = 0; k < n; ++k) {
      if (!alive[k] || k == bi || k == bj) continue;
      const int nk = sizes[k];
      double d = ((ni + nk) * delta(bi, k) + (nj + nk) * delta(bj, k) -
                  nk * delta(bi, bj)) /
                 (ni + nj + nk);
      delta(bi, k) = delta(k, bi) = d;
    }
    sizes[bi] += sizes[bj];
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    alive[bj] = false;
  }

  ClusterAssignment out;
  for (const auto& m : merges) out.merge_heights.push_back(m.height);

  int k = n_clusters;
  if (k == 0) {
    // Cut at 70% of the tallest merge; every merge below the cut collapses.
    double cutoff = merges.empty() ? 0.0 : 0.7 * merges.back().height;
    int collapsed = 0;
    for (const auto& m : merges) collapsed += m.height <= cutoff ? 1 : 0;
    k = std::max(1, n - collapsed);
  }

  // Replay merges until k clusters remain.
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int m = 0; m < n - k; ++m) {
    parent[find(merges[m].b)] = find(merges[m].a);
  }
  std::map<int, int> relabel;
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    int root = find(i);
    auto [it, inserted] = relabel.emplace(root, static_cast<int>(relabel.size()));
    out.labels[i] = it->second;
  }
  out.n_clusters = static_cast<int>(relabel.size());
  return out;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Continued fraction (Lentz), with the symmetry switch for convergence.
  auto betacf = [](double a, double b, double x) {
    const double tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
      double m2 = 2.0 * m;
      double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < tiny) d = tiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-14) break;
    }
    return h;
  };
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error("anova_oneway: need at least 2 groups");
  long n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error("anova_oneway: every group needs >= 2 samples");
    for (double x : g) {
      grand += x;
      n += 1;
    }
  }
  grand /= n;
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    double m = 0.0;
    for (double x : g) m += x;
    m /= g.size();
    ssb += g.size() * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  if (ssw == 0.0) throw Error("anova_oneway: zero within-group variance");
  AnovaResult r;
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(n - groups.size());
  r.f_statistic = (ssb / r.df_between) / (ssw / r.df_within);
  r.p_value = incomplete_beta(r.df_within / 2.0, r.df_between / 2.0,
                              r.df_within / (r.df_within + r.df_between * r.f_statistic));
  return r;
}

std::vector<PairwiseResult> pairwise_permutation_test(
    const std::vector<std::pair<std::string, std::vector<double>>>& trial_scores,
    int n_permutations, unsigned seed) {
  for (const auto& [name, scores] : trial_scores) {
    if (scores.size() < 5) {
      throw Error("pairwise_permutation_test: fewer than 5 trials for " + name);
    }
  }
  std::vector<PairwiseResult> out;
  for (std::size_t a = 0; a < trial_scores.size(); ++a) {
    for (std::size_t b = a + 1; b < trial_scores.size(); ++b) {
      const auto& xs = trial_scores[a].second;
      const auto& ys = trial_scores[b].second;
      std::vector<double> pooled = xs;
      pooled.insert(pooled.end(), ys.begin(), ys.end());
      const int nx = static_cast<int>(xs.size());
      auto mean_diff = [&](const std::vector<double>& p) {
        double mx = 0.0, my = 0.0;
        for (int i = 0; i < nx; ++i) mx += p[i];
        for (std::size_t i = nx; i < p.size(); ++i) my += p[i];
        return mx / nx - my / (static_cast<double>(p.size()) - nx);
      };
      const double observed = mean_diff(pooled);
      std::mt19937 rng(seed);
      long at_least = 0;
      std::vector<double> perm = pooled;
      for (int it = 0; it < n_permutations; ++it) {
        std::shuffle(perm.begin(), perm.end(), rng);
        if (std::abs(mean_diff(perm)) >= std::abs(observed) - 1e-15) at_least += 1;
      }
      // +1 correction keeps the p-value achievable and never exactly 0.
      double p = (at_least + 1.0) / (n_permutations + 1.0);
      out.push_back({trial_scores[a].first, trial_scores[b].first, observed,
                     std::min(1.0, p)});
    }
  }
  return out;
}

std::vector<OutcomeTable> centrality_outcome_table(
    const CentralityTable& centrality,
    const std::vector<experiment::UserTopologyRmse>& rmse,
    const std::vector<UserScoreStats>& score_stats,
    const std::vector<int>& user_cluster) {
  if (centrality.node_ids.size() != user_cluster.size()) {
    throw Error("centrality_outcome_table: cluster labels must match centrality rows");
  }
  std::map<std::string, int> user_row;
  for (std::size_t i = 0; i < centrality.node_ids.size(); ++i) {
    user_row.emplace(centrality.node_ids[i], static_cast<int>(i));
  }
  std::map<std::string, const UserScoreStats*> stats_by_user;
  for (const auto& s : score_stats) stats_by_user[s.user] = &s;

  struct Obs {
    int cluster;
    std::string user;
    double rmse, mean, sd;
    Eigen::RowVectorXd x;
  };
  std::vector<Obs> obs;
  const std::vector<std::string> names = {"eigenvector", "small_degree",
                                          "large_degree", "closeness", "pagerank"};
  for (const auto& r : rmse) {
    auto it = user_row.find(r.user);
    auto st = stats_by_user.find(r.user);
    if (it == user_row.end() || st == stats_by_user.end()) continue;
    const int i = it->second;
    Obs o;
    o.cluster = user_cluster[i];
    o.user = r.user;
    o.rmse = r.rmse;
    o.mean = st->second->mean;
    o.sd = st->second->sd;
    o.x.resize(5);
    o.x << centrality.eigenvector[i], centrality.degree[i] < 4 ? 1.0 : 0.0,
        centrality.degree[i] >= 4 ? 1.0 : 0.0, centrality.closeness[i],
        centrality.pagerank[i];
    obs.push_back(std::move(o));
  }
  if (obs.empty()) throw Error("centrality_outcome_table: empty join");

  // Constant covariate columns are degenerate; flag and drop them.
  std::vector<int> keep;
  std::vector<std::string> dropped;
  for (int c = 0; c < 5; ++c) {
    double mn = obs.front().x[c], mx = mn;
    for (const auto& o : obs) {
      mn = std::min(mn, o.x[c]);
      mx = std::max(mx, o.x[c]);
    }
    if (mx - mn < 1e-12) dropped.push_back(names[c]);
    else keep.push_back(c);
  }
  if (keep.empty()) throw Error("centrality_outcome_table: all covariates constant");

  std::stable_sort(obs.begin(), obs.end(), [](const Obs& a, const Obs& b) {
    return std::tie(a.cluster, a.user) < std::tie(b.cluster, b.user);
  });

  auto fit_response = [&](const std::string& label, auto getter) {
    GeeProblem problem;
    problem.correlation = Correlation::kAr1;
    std::map<int, std::vector<const Obs*>> by_cluster;
    for (const auto& o : obs) by_cluster[o.cluster].push_back(&o);
    for (const auto& [cl, rows] : by_cluster) {
      GeeCluster c;
      c.response.resize(rows.size());
      c.covariates.resize(rows.size(), static_cast<int>(keep.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        c.response[i] = getter(*rows[i]);
        for (std::size_t j = 0; j < keep.size(); ++j) {
          c.covariates(i, j) = rows[i]->x[keep[j]];
        }
      }
      problem.clusters.push_back(std::move(c));
    }
    GeeFit fit = gee_fit(problem);
    OutcomeTable table;
    table.response = label;
    table.dropped_covariates = dropped;
    table.alpha_hat = fit.alpha_hat;
    table.converged = fit.converged;
    for (std::size_t j = 0; j < keep.size(); ++j) {
      table.rows.push_back({names[keep[j]], fit.beta[j], fit.p_values[j]});
    }
    return table;
  };

  std::vector<OutcomeTable> tables;
  tables.push_back(fit_response("rmse", [](const Obs& o) { return o.rmse; }));
  tables.push_back(fit_response("mean_score", [](const Obs& o) { return o.mean; }));
  tables.push_back(fit_response("sd_score", [](const Obs& o) { return o.sd; }));
  return tables;
}

}  // namespace emonet::stats
