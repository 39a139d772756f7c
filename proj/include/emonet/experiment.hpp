#pragma once

#include <map>
#include <string>
#include <vector>

#include "emonet/features.hpp"
#include "emonet/graph.hpp"
#include "emonet/models.hpp"

namespace emonet::experiment {

struct RunConfig {
  std::string target = "stress";
  std::vector<models::ModelKind> kinds = {models::ModelKind::kGcnLstm,
                                          models::ModelKind::kConvLstm,
                                          models::ModelKind::kLstm};
  int w = 10;
  int seq_len = 5;
  int trials = 10;
  double train_frac = 0.5;
  double val_frac = 0.1;
  double test_frac = 0.4;
  unsigned seed = 1;
  double early_stop_delta = 1e-5;
  int patience = 50;
  int max_epochs = 500;
  double lr = 1e-3;
  double mix = 0.5;
  std::vector<int> gcn_widths = {64, 32};
  int lstm_hidden = 64;
  int conv_channels = 8;
  int conv_kernel = 3;
  std::vector<int> dense_widths = {64, 32};
  double dropout_rate = 0.3;
  // Sweep: "graph-size" varies w, "seq-len" varies seq_len, "" = single run.
  std::string sweep_vary;
  std::vector<int> sweep_values;

  void validate() const;
};

// Preprocessed inputs shared by every trial of a run: the combined,
// symmetrized graph plus the imputed (but not yet standardized) panel.
struct Dataset {
  SocialGraph graph;
  FeaturePanel panel;
};

struct SampleKey {
  int user;
  int day;
  auto operator<=>(const SampleKey&) const = default;
};

// Deterministic (user, day)-level partition, identical across model kinds.
struct Split {
  std::vector<SampleKey> train, val, test;
};

Split split_samples(const std::vector<SampleKey>& samples,
                    double train_frac, double val_frac, double test_frac,
                    unsigned seed);

// Micro-averaged F1 from class-pooled TP/FP/FN counts.
double micro_f1(const std::vector<int>& pred_classes,
                const std::vector<int>& true_classes);

struct PredictionRecord {
  std::string user;
  std::string topology;
  double predicted;
  double truth;
};

struct UserTopologyRmse {
  std::string user;
  std::string topology;
  double rmse;
  int count;
};

std::vector<UserTopologyRmse> rmse_per_user(
    const std::vector<PredictionRecord>& records);

struct TrialReport {
  std::string model;
  unsigned trial_seed = 0;
  int epochs_run = 0;
  bool early_stopped = false;
  bool failed = false;
  int failed_epoch = -1;
  double micro_f1 = 0.0;
  double rmse = 0.0;
  std::vector<UserTopologyRmse> per_user_rmse;
  std::vector<PredictionRecord> test_records;
};

TrialReport train_trial(const RunConfig& config, const Dataset& data,
                        models::ModelKind kind, int trial_index);

struct ModelAggregate {
  std::string model;
  double f1_mean = 0.0, f1_sd = 0.0;
  double rmse_mean = 0.0, rmse_sd = 0.0;
  std::vector<TrialReport> trials;
  std::vector<UserTopologyRmse> pooled_rmse;  // test records pooled over trials
};

struct SweepPoint {
  int x;  // the varied w or seq_len (equals config value for single runs)
  std::vector<ModelAggregate> aggregates;
};

struct ExperimentReport {
  std::string vary;  // "", "graph-size", or "seq-len"
  std::vector<SweepPoint> points;
};

ExperimentReport run_experiment(const RunConfig& config, const Dataset& data);

// Report serialization: JSON with aggregates and per-trial details, plus
// plot-ready CSV `x,model,f1_mean,f1_sd,rmse_mean,rmse_sd`.
std::string report_to_json(const RunConfig& config, const ExperimentReport& report);
std::string report_to_csv(const ExperimentReport& report);

}  // namespace emonet::experiment
