#pragma once

#include <random>
#include <string>
#include <vector>

#include "emonet/graph.hpp"
#include "emonet/nn.hpp"

namespace emonet::models {

enum class ModelKind { kGcnLstm, kConvLstm, kLstm };
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind kind);

enum class Head { kRegression, kClassification };

struct ModelSpec {
  ModelKind kind = ModelKind::kGcnLstm;
  int w = 10;
  int seq_len = 5;
  int feature_dim = 0;
  std::vector<int> gcn_widths = {64, 32};
  int lstm_hidden = 64;
  int conv_channels = 8;
  int conv_kernel = 3;
  std::vector<int> dense_widths = {64, 32};
  double dropout_rate = 0.3;
  Head head = Head::kRegression;
  // "last" feeds the GCN the most recent day; "mean" the window average.
  std::string gcn_input = "last";
};

// One fixed-size model input: a GEDD topology on one target day.
struct BatchInput {
  NormalizedAdjacency norm_adj;            // w x w
  Matrix gcn_features;                     // w x f (day n-1 or window mean)
  std::vector<Matrix> sequence;            // L matrices, each w x f, oldest first
};

class Model {
 public:
  Model(ModelSpec spec, unsigned seed);

  // Per-node output: [w, 1] under the regression head, [w, 3] under the
  // classification head. Dropout and batchnorm flip on `train`.
  nn::Tensor forward(const BatchInput& input, bool train);

  nn::ParamStore& params() { return params_; }
  const ModelSpec& spec() const { return spec_; }
  std::mt19937& dropout_rng() { return dropout_rng_; }

  // In-memory snapshot of weights plus batchnorm running stats, so training
  // can roll back to the best-validation epoch before test evaluation.
  struct Checkpoint {
    std::map<std::string, Matrix> values;
    std::vector<std::pair<Matrix, Matrix>> bn_stats;
  };
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  nn::Tensor trunk(const BatchInput& input, bool train);

  ModelSpec spec_;
  nn::ParamStore params_;
  std::vector<nn::BatchNormState> bn_states_;
  std::mt19937 dropout_rng_;
};

}  // namespace emonet::models
