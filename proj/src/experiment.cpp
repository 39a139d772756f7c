#include "emonet/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace emonet::experiment {

using models::BatchInput;
using models::Model;
using models::ModelKind;
using models::ModelSpec;
using ordered_json = nlohmann::ordered_json;

void RunConfig::validate() const {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw Error("config: split fractions must sum to 1");
  }
  if (trials < 1) throw Error("config: trials must be >= 1");
  if (w < 1 || seq_len < 1) throw Error("config: w and seq-len must be >= 1");
  if (target != "stress" && target != "happiness") {
    throw Error("config: target must be stress or happiness");
  }
  if (!sweep_vary.empty() && sweep_vary != "graph-size" && sweep_vary != "seq-len") {
    throw Error("config: sweep vary must be graph-size or seq-len");
  }
  if (!sweep_vary.empty() && sweep_values.empty()) {
    throw Error("config: sweep requested without values");
  }
}

Split split_samples(const std::vector<SampleKey>& samples, double train_frac,
                    double val_frac, double test_frac, unsigned seed) {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw Error("split_samples: fractions must sum to 1");
  }
  std::vector<SampleKey> order = samples;
  std::sort(order.begin(), order.end());
  std::mt19937 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const long n = static_cast<long>(order.size());
  const long n_train = std::lround(train_frac * n);
  const long n_val = std::lround(val_frac * n);
  Split s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  if (s.train.empty() || s.test.empty()) {
    throw Error("split_samples: empty train or test split");
  }
  if (val_frac > 0.0 && s.val.empty()) throw Error("split_samples: empty validation split");
  return s;
}

double micro_f1(const std::vector<int>& pred_classes,
                const std::vector<int>& true_classes) {
  if (pred_classes.empty() || pred_classes.size() != true_classes.size()) {
    throw Error("micro_f1: empty or mismatched inputs");
  }
  long tp = 0, fp = 0, fn = 0;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < pred_classes.size(); ++i) {
      if (pred_classes[i] == c && true_classes[i] == c) tp += 1;
      if (pred_classes[i] == c && true_classes[i] != c) fp += 1;
      if (pred_classes[i] != c && true_classes[i] == c) fn += 1;
    }
  }
  const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double r = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

std::vector<UserTopologyRmse> rmse_per_user(
    const std::vector<PredictionRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> groups;
  for (const auto& r : records) {
    auto& [sq, n] = groups[{r.user, r.topology}];
    double d = r.predicted - r.truth;
    sq += d * d;
    n += 1;
  }
  std::vector<UserTopologyRmse> out;
  for (const auto& [key, val] : groups) {
    out.push_back({key.first, key.second, std::sqrt(val.first / val.second),
                   val.second});
  }
  return out;
}

namespace {

// One GEDD topology on one target day, with per-slot validity and split
// membership masks.
struct Example {
  int topology;
  int day;
  BatchInput input;
  Vector targets;            // raw label scale
  std::vector<bool> valid;   // non-duplicate, complete window, label present
  std::vector<bool> train_mask, val_mask, test_mask;
  std::vector<int> slot_user;
};

struct Assembly {
  std::vector<Example> examples;
  std::vector<std::string> topology_ids;
  int feature_dim = 0;
};

std::string topology_name(int w, int index) {
  return "w" + std::to_string(w) + ".t" + std::to_string(index);
}

// Sample enumeration shared by splitting and assembly: a (user, day) is a
// sample when the label is present and the preceding L-day window is
// complete for that user.
std::vector<SampleKey> enumerate_samples(const FeaturePanel& panel,
                                         const std::string& target, int L) {
  std::vector<SampleKey> keys;
  const Matrix& y = panel.labels(target);
  for (int u = 0; u < panel.n_users(); ++u) {
    for (int n = L; n < panel.n_days(); ++n) {
      if (std::isnan(y(u, n))) continue;
      if (panel.values[u].middleRows(n - L, L).hasNaN()) continue;
      keys.push_back({u, n});
    }
  }
  return keys;
}

Assembly assemble(const RunConfig& config, const FeaturePanel& panel,
                  const std::vector<SubgraphBatch>& batches, const Split& split) {
  const int L = config.seq_len;
  const int w = config.w;
  const int f = panel.n_features();
  std::set<SampleKey> train(split.train.begin(), split.train.end());
  std::set<SampleKey> val(split.val.begin(), split.val.end());
  std::set<SampleKey> test(split.test.begin(), split.test.end());
  const Matrix& y = panel.labels(config.target);

  Assembly out;
  out.feature_dim = f;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    out.topology_ids.push_back(topology_name(w, static_cast<int>(b)));
    NormalizedAdjacency norm = normalize_adjacency(batches[b].adjacency);
    for (int n = L; n < panel.n_days(); ++n) {
      Example ex;
      ex.topology = static_cast<int>(b);
      ex.day = n;
      ex.input.norm_adj = norm;
      ex.targets = Vector::Zero(w);
      ex.valid.assign(w, false);
      ex.train_mask.assign(w, false);
      ex.val_mask.assign(w, false);
      ex.test_mask.assign(w, false);
      ex.input.sequence.assign(L, Matrix::Zero(w, f));
      ex.input.gcn_features = Matrix::Zero(w, f);
      bool any = false;
      for (int slot = 0; slot < w; ++slot) {
        const int u = batches[b].node_indices[slot];
        ex.slot_user.push_back(u);
        Matrix window = panel.values[u].middleRows(n - L, L);
        const bool window_ok = !window.hasNaN();
        if (window_ok) {
          for (int t = 0; t < L; ++t) ex.input.sequence[t].row(slot) = window.row(t);
          ex.input.gcn_features.row(slot) = window.row(L - 1);  // day n-1
        }
        if (batches[b].duplicate_mask[slot]) continue;
        if (!window_ok || std::isnan(y(u, n))) continue;
        ex.valid[slot] = true;
        ex.targets[slot] = y(u, n);
        SampleKey key{u, n};
        if (train.count(key)) ex.train_mask[slot] = true;
        else if (val.count(key)) ex.val_mask[slot] = true;
        else if (test.count(key)) ex.test_mask[slot] = true;
        else ex.valid[slot] = false;  // dropped sample (shouldn't happen)
        any = true;
      }
      if (any) out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<bool> and_mask(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::vector<bool> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
  return out;
}

int count_true(const std::vector<bool>& m) {
  int c = 0;
  for (bool b : m) c += b ? 1 : 0;
  return c;
}

double mean_sd(const std::vector<double>& xs, double& sd) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  sd = xs.size() > 1 ? std::sqrt(var / (xs.size() - 1)) : 0.0;
  return m;
}

}  // namespace

TrialReport train_trial(const RunConfig& config, const Dataset& data,
                        ModelKind kind, int trial_index) {
  config.validate();
  const unsigned trial_seed = config.seed + static_cast<unsigned>(trial_index);

  GeddResult gedd_out = gedd(data.graph, config.w);
  std::vector<SampleKey> samples =
      enumerate_samples(data.panel, config.target, config.seq_len);
  if (samples.empty()) throw Error("train_trial: no usable samples");
  Split split = split_samples(samples, config.train_frac, config.val_frac,
                              config.test_frac, trial_seed);

  // Standardize with statistics from feature rows referenced by training
  // windows only.
  std::set<std::pair<int, int>> fit_rows;
  for (const auto& key : split.train) {
    for (int t = 1; t <= config.seq_len; ++t) fit_rows.insert({key.user, key.day - t});
  }
  auto [panel, stats] = standardize(
      data.panel, [&](int u, int d) { return fit_rows.count({u, d}) > 0; });

  Assembly asm_out = assemble(config, panel, gedd_out.batches, split);

  // Train against standardized targets; predictions are mapped back to the
  // label scale for every metric.
  double y_mean = 0.0, y_sd = 0.0;
  {
    long n = 0;
    const Matrix& y = data.panel.labels(config.target);
    for (const auto& key : split.train) {
      y_mean += y(key.user, key.day);
      n += 1;
    }
    y_mean /= n;
    for (const auto& key : split.train) {
      double d = y(key.user, key.day) - y_mean;
      y_sd += d * d;
    }
    y_sd = std::sqrt(y_sd / n);
    if (y_sd == 0.0) y_sd = 1.0;
  }

  ModelSpec spec;
  spec.kind = kind;
  spec.w = config.w;
  spec.seq_len = config.seq_len;
  spec.feature_dim = asm_out.feature_dim;
  spec.gcn_widths = config.gcn_widths;
  spec.lstm_hidden = config.lstm_hidden;
  spec.conv_channels = config.conv_channels;
  spec.conv_kernel = std::min(config.conv_kernel, asm_out.feature_dim);
  spec.dense_widths = config.dense_widths;
  spec.dropout_rate = config.dropout_rate;
  Model model(spec, trial_seed);

  TrialReport report;
  report.model = to_string(kind);
  report.trial_seed = trial_seed;

  auto scaled_targets = [&](const Example& ex) {
    Matrix t = (ex.targets.array() - y_mean) / y_sd;
    return Matrix(t);
  };
  auto eval_loss = [&](const std::vector<bool> Example::* mask) {
    double sq = 0.0;
    long n = 0;
    for (const Example& ex : asm_out.examples) {
      auto m = and_mask(ex.*mask, ex.valid);
      int c = count_true(m);
      if (c == 0) continue;
      nn::Tensor pred = model.forward(ex.input, /*train=*/false);
      Matrix t = scaled_targets(ex);
      for (int i = 0; i < config.w; ++i) {
        if (m[i]) {
          double d = pred.value()(i, 0) - t(i, 0);
          sq += d * d;
        }
      }
      n += c;
    }
    return n > 0 ? sq / n : 0.0;
  };

  std::mt19937 order_rng(trial_seed ^ 0x5bd1e995u);
  std::vector<int> order(asm_out.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  double best_val = std::numeric_limits<double>::infinity();
  int streak = 0;
  Model::Checkpoint best_ckpt = model.checkpoint();
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (int idx : order) {
      const Example& ex = asm_out.examples[idx];
      auto m = and_mask(ex.train_mask, ex.valid);
      if (count_true(m) == 0) continue;
      model.params().zero_grads();
      nn::Tensor pred = model.forward(ex.input, /*train=*/true);
      nn::Tensor loss = ad::mse_loss(pred, scaled_targets(ex), m);
      if (!std::isfinite(loss.value()(0, 0))) {
        report.failed = true;
        report.failed_epoch = epoch;
        report.epochs_run = epoch;
        return report;
      }
      ad::backward(loss);
      model.params().adam_step(config.lr);
    }
    report.epochs_run = epoch;
    double val = eval_loss(&Example::val_mask);
    if (!std::isfinite(val)) {
      report.failed = true;
      report.failed_epoch = epoch;
      return report;
    }
    if (best_val - val < config.early_stop_delta) {
      streak += 1;
    } else {
      streak = 0;
    }
    if (val < best_val) {
      best_val = val;
      best_ckpt = model.checkpoint();
    }
    if (streak >= config.patience) {
      report.early_stopped = true;
      break;
    }
  }
  model.restore(best_ckpt);

  // Test evaluation on the label scale.
  std::vector<int> pred_bins, true_bins;
  double sq = 0.0;
  long n = 0;
  for (const Example& ex : asm_out.examples) {
    auto m = and_mask(ex.test_mask, ex.valid);
    if (count_true(m) == 0) continue;
    nn::Tensor pred = model.forward(ex.input, /*train=*/false);
    for (int i = 0; i < config.w; ++i) {
      if (!m[i]) continue;
      double yhat = std::clamp(pred.value()(i, 0) * y_sd + y_mean, 0.0, 100.0);
      double yt = ex.targets[i];
      report.test_records.push_back(
          {data.panel.users[ex.slot_user[i]], asm_out.topology_ids[ex.topology],
           yhat, yt});
      pred_bins.push_back(bin_label(yhat));
      true_bins.push_back(bin_label(yt));
      sq += (yhat - yt) * (yhat - yt);
      n += 1;
    }
  }
  if (n == 0) throw Error("train_trial: empty test evaluation");
  report.micro_f1 = micro_f1(pred_bins, true_bins);
  report.rmse = std::sqrt(sq / n);
  report.per_user_rmse = rmse_per_user(report.test_records);
  return report;
}

ExperimentReport run_experiment(const RunConfig& config, const Dataset& data) {
  config.validate();
  ExperimentReport report;
  report.vary = config.sweep_vary;
  std::vector<int> xs = config.sweep_values;
  if (xs.empty()) {
    xs.push_back(config.sweep_vary == "seq-len" ? config.seq_len : config.w);
  }
  for (int x : xs) {
    RunConfig point_cfg = config;
    if (config.sweep_vary == "graph-size") point_cfg.w = x;
    if (config.sweep_vary == "seq-len") point_cfg.seq_len = x;
    SweepPoint point;
    point.x = x;
    for (ModelKind kind : config.kinds) {
      ModelAggregate agg;
      agg.model = to_string(kind);
      std::vector<double> f1s, rmses;
      std::vector<PredictionRecord> pooled;
      int failed = 0;
      for (int t = 0; t < config.trials; ++t) {
        TrialReport tr = train_trial(point_cfg, data, kind, t);
        if (tr.failed) {
          failed += 1;
        } else {
          f1s.push_back(tr.micro_f1);
          rmses.push_back(tr.rmse);
          pooled.insert(pooled.end(), tr.test_records.begin(), tr.test_records.end());
        }
        agg.trials.push_back(std::move(tr));
      }
      if (f1s.empty()) throw Error("run_experiment: all trials failed for " + agg.model);
      agg.f1_mean = mean_sd(f1s, agg.f1_sd);
      agg.rmse_mean = mean_sd(rmses, agg.rmse_sd);
      agg.pooled_rmse = rmse_per_user(pooled);
      point.aggregates.push_back(std::move(agg));
    }
    report.points.push_back(std::move(point));
  }
  return report;
}

std::string report_to_json(const RunConfig& config, const ExperimentReport& report) {
  ordered_json j;
  j["target"] = config.target;
  j["trials"] = config.trials;
  j["seed"] = config.seed;
  j["vary"] = report.vary;
  ordered_json points = ordered_json::array();
  for (const auto& point : report.points) {
    ordered_json pj;
    pj["x"] = point.x;
    ordered_json models = ordered_json::array();
    for (const auto& agg : point.aggregates) {
      ordered_json mj;
      mj["model"] = agg.model;
      mj["f1_mean"] = agg.f1_mean;
      mj["f1_sd"] = agg.f1_sd;
      mj["rmse_mean"] = agg.rmse_mean;
      mj["rmse_sd"] = agg.rmse_sd;
      ordered_json trials = ordered_json::array();
      for (const auto& tr : agg.trials) {
        ordered_json tj;
        tj["seed"] = tr.trial_seed;
        tj["epochs"] = tr.epochs_run;
        tj["early_stopped"] = tr.early_stopped;
        tj["failed"] = tr.failed;
        if (tr.failed) tj["failed_epoch"] = tr.failed_epoch;
        tj["micro_f1"] = tr.micro_f1;
        tj["rmse"] = tr.rmse;
        trials.push_back(std::move(tj));
      }
      mj["trials"] = std::move(trials);
      ordered_json per_user = ordered_json::array();
      for (const auto& r : agg.pooled_rmse) {
        per_user.push_back({{"user", r.user},
                            {"topology", r.topology},
                            {"rmse", r.rmse},
                            {"count", r.count}});
      }
      mj["per_user_rmse"] = std::move(per_user);
      models.push_back(std::move(mj));
    }
    pj["models"] = std::move(models);
    points.push_back(std::move(pj));
  }
  j["points"] = std::move(points);
  return j.dump(2) + "\n";
}

std::string report_to_csv(const ExperimentReport& report) {
  std::string out = "x,model,f1_mean,f1_sd,rmse_mean,rmse_sd\n";
  for (const auto& point : report.points) {
    for (const auto& agg : point.aggregates) {
      out += std::to_string(point.x) + "," + agg.model + "," +
             format_double(agg.f1_mean) + "," + format_double(agg.f1_sd) + "," +
             format_double(agg.rmse_mean) + "," + format_double(agg.rmse_sd) + "\n";
    }
  }
  return out;
}

}  // namespace emonet::experiment
