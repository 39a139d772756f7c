#include "emonet/models.hpp"

namespace emonet::models {

using ad::Activation;
using nn::Tensor;

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gcn-lstm") return ModelKind::kGcnLstm;
  if (s == "conv-lstm") return ModelKind::kConvLstm;
  if (s == "lstm") return ModelKind::kLstm;
  throw Error("unknown model kind '" + s + "'");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGcnLstm: return "gcn-lstm";
    case ModelKind::kConvLstm: return "conv-lstm";
    case ModelKind::kLstm: return "lstm";
  }
  throw Error("bad model kind");
}

Model::Model(ModelSpec spec, unsigned seed) : spec_(std::move(spec)), dropout_rng_(seed ^ 0x9e3779b9u) {
  if (spec_.feature_dim <= 0) throw Error("Model: feature_dim must be set");
  if (spec_.w < 1 || spec_.seq_len < 1) throw Error("Model: w and seq_len must be >= 1");
  if (spec_.kind == ModelKind::kGcnLstm && spec_.gcn_widths.empty()) {
    throw Error("Model: gcn-lstm needs at least one GCN layer");
  }
  std::mt19937 rng(seed);
  const int f = spec_.feature_dim;

  int lstm_input = f;
  int conv_out = 0;
  if (spec_.kind == ModelKind::kConvLstm) {
    if (spec_.conv_kernel > f) throw Error("Model: conv kernel exceeds feature dim");
    conv_out = spec_.conv_channels * (f - spec_.conv_kernel + 1);
    params_.add("conv.kernel",
                nn::glorot_uniform(spec_.conv_kernel, spec_.conv_channels, rng));
    params_.add("conv.bias", Matrix::Zero(1, spec_.conv_channels));
    lstm_input = conv_out;
  }
  nn::lstm_params(params_, "lstm", lstm_input, spec_.lstm_hidden, rng);

  int trunk_out = spec_.lstm_hidden;
  if (spec_.kind == ModelKind::kGcnLstm) {
    int in = f;
    for (std::size_t i = 0; i < spec_.gcn_widths.size(); ++i) {
      params_.add("gcn." + std::to_string(i) + ".theta",
                  nn::glorot_uniform(in, spec_.gcn_widths[i], rng));
      in = spec_.gcn_widths[i];
    }
    trunk_out += spec_.gcn_widths.back();
  }

  params_.add("bn.scale", Matrix::Ones(1, trunk_out));
  params_.add("bn.shift", Matrix::Zero(1, trunk_out));
  bn_states_.push_back(nn::BatchNormState::create(trunk_out));

  int in = trunk_out;
  for (std::size_t i = 0; i < spec_.dense_widths.size(); ++i) {
    params_.add("dense." + std::to_string(i) + ".w",
                nn::glorot_uniform(in, spec_.dense_widths[i], rng));
    params_.add("dense." + std::to_string(i) + ".b",
                Matrix::Zero(1, spec_.dense_widths[i]));
    in = spec_.dense_widths[i];
  }
  const int head_out = spec_.head == Head::kRegression ? 1 : 3;
  params_.add("head.w", nn::glorot_uniform(in, head_out, rng));
  params_.add("head.b", Matrix::Zero(1, head_out));
}

Tensor Model::trunk(const BatchInput& input, bool train) {
  const int w = spec_.w;
  const int L = spec_.seq_len;
  if (static_cast<int>(input.sequence.size()) != L) {
    throw Error("Model: sequence length mismatch");
  }
  for (const Matrix& m : input.sequence) {
    if (m.rows() != w || m.cols() != spec_.feature_dim) {
      throw Error("Model: sequence/graph misalignment");
    }
  }

  // Weight-shared LSTM over the L-day window, nodes as the batch.
  nn::LstmParams lp{params_.get("lstm.wx"), params_.get("lstm.wh"),
                    params_.get("lstm.b")};
  nn::LstmState state{Tensor::constant(Matrix::Zero(w, spec_.lstm_hidden)),
                      Tensor::constant(Matrix::Zero(w, spec_.lstm_hidden))};
  for (int t = 0; t < L; ++t) {
    Tensor x_t = Tensor::constant(input.sequence[t]);
    if (spec_.kind == ModelKind::kConvLstm) {
      x_t = nn::conv1d_forward(x_t, params_.get("conv.kernel"),
                               params_.get("conv.bias"));
    }
    state = nn::lstm_step(x_t, state, lp);
  }
  Tensor fused = state.h;

  if (spec_.kind == ModelKind::kGcnLstm) {
    if (input.norm_adj.matrix.rows() != w) {
      throw Error("Model: sequence/graph misalignment");
    }
    Tensor h = Tensor::constant(input.gcn_features);
    for (std::size_t i = 0; i < spec_.gcn_widths.size(); ++i) {
      h = nn::gcn_layer_forward(h, input.norm_adj,
                                params_.get("gcn." + std::to_string(i) + ".theta"),
                                Activation::kRelu);
    }
    fused = ad::concat_cols(h, fused);
  }

  // Batch statistics need at least two nodes; a single-node graph falls
  // back to the running averages.
  fused = nn::batchnorm_forward(fused, params_.get("bn.scale"),
                                params_.get("bn.shift"), bn_states_[0],
                                train && w >= 2);

  for (std::size_t i = 0; i < spec_.dense_widths.size(); ++i) {
    fused = nn::dense_forward(fused, params_.get("dense." + std::to_string(i) + ".w"),
                              params_.get("dense." + std::to_string(i) + ".b"),
                              Activation::kRelu);
    fused = ad::dropout(fused, spec_.dropout_rate, train, dropout_rng_);
  }
  return fused;
}

Tensor Model::forward(const BatchInput& input, bool train) {
  Tensor t = trunk(input, train);
  return nn::dense_forward(t, params_.get("head.w"), params_.get("head.b"),
                           Activation::kIdentity);
}

Model::Checkpoint Model::checkpoint() const {
  Checkpoint ckpt;
  for (const auto& [name, tensor] : params_.params()) {
    ckpt.values[name] = tensor.value();
  }
  for (const auto& s : bn_states_) {
    ckpt.bn_stats.emplace_back(s.running_mean, s.running_var);
  }
  return ckpt;
}

void Model::restore(const Checkpoint& ckpt) {
  for (const auto& [name, value] : ckpt.values) {
    params_.get(name).mutable_value() = value;
  }
  if (ckpt.bn_stats.size() != bn_states_.size()) {
    throw Error("Model::restore: checkpoint batchnorm state mismatch");
  }
  for (std::size_t i = 0; i < bn_states_.size(); ++i) {
    bn_states_[i].running_mean = ckpt.bn_stats[i].first;
    bn_states_[i].running_var = ckpt.bn_stats[i].second;
  }
}

}  // namespace emonet::models
