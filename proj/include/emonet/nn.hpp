#pragma once

#include <map>
#include <random>
#include <string>

#include "emonet/autodiff.hpp"
#include "emonet/graph.hpp"

namespace emonet::nn {

using ad::Activation;
using ad::Tensor;

// Named parameters plus Adam moments. std::map keeps iteration order (and
// therefore updates and checkpoints) deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Matrix init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  const std::map<std::string, Tensor>& params() const { return params_; }
  std::int64_t step() const { return step_; }

  // Bias-corrected Adam over all parameters with non-empty gradients.
  // Throws on a non-finite gradient, naming the parameter.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);
  void zero_grads();

  // JSON header (names, shapes, byte offsets) + raw little-endian doubles.
  void save(const std::string& json_path, const std::string& blob_path) const;
  void load(const std::string& json_path, const std::string& blob_path);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
  std::int64_t step_ = 0;
};

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937& rng);

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                     Activation act);

// activation(norm_adj * H * theta) — the graph-convolution propagation rule.
Tensor gcn_layer_forward(const Tensor& h, const NormalizedAdjacency& norm_adj,
                         const Tensor& theta, Activation act);

struct LstmParams {
  Tensor wx;  // [input, 4*hidden], gate order i, f, g, o
  Tensor wh;  // [hidden, 4*hidden]
  Tensor b;   // [1, 4*hidden]
};

// Creates (or fetches) LSTM parameters under `prefix` in the store.
// Forget-gate bias initialized to +1.
LstmParams lstm_params(ParamStore& store, const std::string& prefix,
                       Eigen::Index input, Eigen::Index hidden,
                       std::mt19937& rng);

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_step(const Tensor& x_t, const LstmState& prev,
                    const LstmParams& params);

// Running-average state for one batchnorm site.
struct BatchNormState {
  Matrix running_mean;  // 1 x f
  Matrix running_var;   // 1 x f
  double momentum = 0.1;
  double eps = 1e-5;
  static BatchNormState create(Eigen::Index features);
};

// Train mode normalizes by batch statistics (batch >= 2 required) and
// updates the running averages; eval mode uses the running averages.
Tensor batchnorm_forward(const Tensor& x, const Tensor& scale,
                         const Tensor& shift, BatchNormState& state,
                         bool train);

// One-dimensional convolution along the feature axis: x [batch, f],
// kernel [k, channels], bias [1, channels] -> [batch, channels*(f-k+1)],
// laid out channel-major per position.
Tensor conv1d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias);

}  // namespace emonet::nn
