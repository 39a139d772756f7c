#include "emonet/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace emonet::nn {

using ordered_json = nlohmann::ordered_json;

Tensor& ParamStore::add(const std::string& name, Matrix init) {
  if (params_.count(name)) throw Error("ParamStore: duplicate parameter '" + name + "'");
  auto [it, ok] = params_.emplace(name, Tensor::param(std::move(init)));
  (void)ok;
  moments_[name] = {Matrix::Zero(it->second.rows(), it->second.cols()),
                    Matrix::Zero(it->second.rows(), it->second.cols())};
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  step_ += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& [name, p] : params_) {
    const Matrix& g = p.grad();
    if (g.size() == 0) continue;  // parameter not touched by this graph
    if (!g.allFinite()) throw Error("adam_step: non-finite gradient for '" + name + "'");
    auto& [m, v] = moments_[name];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    Matrix mhat = m / bc1;
    Matrix vhat = v / bc2;
    p.mutable_value() -=
        (lr * mhat.array() / (vhat.array().sqrt() + eps)).matrix();
  }
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) {
    p.node()->grad.resize(0, 0);
  }
}

void ParamStore::save(const std::string& json_path,
                      const std::string& blob_path) const {
  ordered_json header;
  header["format"] = "emonet-checkpoint-v1";
  header["step"] = step_;
  ordered_json entries = ordered_json::array();
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw Error("cannot write '" + blob_path + "'");
  std::int64_t offset = 0;
  auto dump = [&](const Matrix& m) {
    // Eigen default storage is column-major; write row-major for a
    // layout-independent file.
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double v = m(i, j);
        blob.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
    }
    offset += static_cast<std::int64_t>(m.size()) * 8;
  };
  for (const auto& [name, p] : params_) {
    ordered_json e;
    e["name"] = name;
    e["rows"] = p.rows();
    e["cols"] = p.cols();
    e["offset"] = offset;
    dump(p.value());
    const auto& [m, v] = moments_.at(name);
    e["m_offset"] = offset;
    dump(m);
    e["v_offset"] = offset;
    dump(v);
    entries.push_back(std::move(e));
  }
  header["params"] = std::move(entries);
  std::ofstream js(json_path);
  if (!js) throw Error("cannot write '" + json_path + "'");
  js << header.dump(2) << '\n';
}

void ParamStore::load(const std::string& json_path, const std::string& blob_path) {
  std::ifstream js(json_path);
  if (!js) throw Error("cannot read '" + json_path + "'");
  ordered_json header = ordered_json::parse(js);
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw Error("cannot read '" + blob_path + "'");
  step_ = header.at("step").get<std::int64_t>();
  params_.clear();
  moments_.clear();
  auto read_matrix = [&](std::int64_t offset, Eigen::Index rows, Eigen::Index cols) {
    blob.seekg(offset);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        double v;
        blob.read(reinterpret_cast<char*>(&v), sizeof(double));
        m(i, j) = v;
      }
    }
    if (!blob) throw Error("checkpoint blob truncated");
    return m;
  };
  for (const auto& e : header.at("params")) {
    const std::string name = e.at("name").get<std::string>();
    Eigen::Index rows = e.at("rows").get<Eigen::Index>();
    Eigen::Index cols = e.at("cols").get<Eigen::Index>();
    params_.emplace(name, Tensor::param(read_matrix(e.at("offset"), rows, cols)));
    moments_[name] = {read_matrix(e.at("m_offset"), rows, cols),
                      read_matrix(e.at("v_offset"), rows, cols)};
  }
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> unif(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = unif(rng);
  }
  return m;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                     Activation act) {
  return ad::activate(ad::add_rowb(ad::matmul(x, w), b), act);
}

Tensor gcn_layer_forward(const Tensor& h, const NormalizedAdjacency& norm_adj,
                         const Tensor& theta, Activation act) {
  if (norm_adj.matrix.rows() != h.rows()) {
    throw Error("gcn_layer_forward: adjacency/feature mismatch");
  }
  Tensor s = Tensor::constant(norm_adj.matrix);
  return ad::activate(ad::matmul(s, ad::matmul(h, theta)), act);
}

LstmParams lstm_params(ParamStore& store, const std::string& prefix,
                       Eigen::Index input, Eigen::Index hidden,
                       std::mt19937& rng) {
  if (!store.has(prefix + ".wx")) {
    store.add(prefix + ".wx", glorot_uniform(input, 4 * hidden, rng));
    store.add(prefix + ".wh", glorot_uniform(hidden, 4 * hidden, rng));
    Matrix b = Matrix::Zero(1, 4 * hidden);
    b.block(0, hidden, 1, hidden).setConstant(1.0);  // forget gate bias
    store.add(prefix + ".b", std::move(b));
  }
  return {store.get(prefix + ".wx"), store.get(prefix + ".wh"),
          store.get(prefix + ".b")};
}

LstmState lstm_step(const Tensor& x_t, const LstmState& prev,
                    const LstmParams& params) {
  const Eigen::Index hidden = params.wh.rows();
  Tensor gates = ad::add_rowb(
      ad::add(ad::matmul(x_t, params.wx), ad::matmul(prev.h, params.wh)),
      params.b);
  Tensor i = ad::sigmoid(ad::slice_cols(gates, 0, hidden));
  Tensor f = ad::sigmoid(ad::slice_cols(gates, hidden, hidden));
  Tensor g = ad::tanh_act(ad::slice_cols(gates, 2 * hidden, hidden));
  Tensor o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden, hidden));
  LstmState out;
  out.c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  out.h = ad::mul(o, ad::tanh_act(out.c));
  return out;
}

BatchNormState BatchNormState::create(Eigen::Index features) {
  BatchNormState s;
  s.running_mean = Matrix::Zero(1, features);
  s.running_var = Matrix::Ones(1, features);
  return s;
}

Tensor batchnorm_forward(const Tensor& x, const Tensor& scale,
                         const Tensor& shift, BatchNormState& state,
                         bool train) {
  if (train && x.rows() < 2) {
    throw Error("batchnorm_forward: train mode needs batch >= 2");
  }
  if (train) {
    Tensor mean = ad::mean_rows(x);
    Tensor centered = ad::sub_rowb(x, mean);
    Tensor var = ad::mean_rows(ad::mul(centered, centered));
    Tensor std = ad::sqrt_t(ad::add_scalar(var, state.eps));
    state.running_mean =
        (1.0 - state.momentum) * state.running_mean + state.momentum * mean.value();
    state.running_var =
        (1.0 - state.momentum) * state.running_var + state.momentum * var.value();
    return ad::add_rowb(ad::mul_rowb(ad::div_rowb(centered, std), scale), shift);
  }
  Tensor mean = Tensor::constant(state.running_mean);
  Tensor std = Tensor::constant(
      (state.running_var.array() + state.eps).sqrt().matrix());
  return ad::add_rowb(
      ad::mul_rowb(ad::div_rowb(ad::sub_rowb(x, mean), std), scale), shift);
}

Tensor conv1d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const Eigen::Index batch = x.rows();
  const Eigen::Index f = x.cols();
  const Eigen::Index k = kernel.rows();
  const Eigen::Index channels = kernel.cols();
  if (k > f) throw Error("conv1d_forward: kernel longer than feature axis");
  if (bias.rows() != 1 || bias.cols() != channels) {
    throw Error("conv1d_forward: bias shape mismatch");
  }
  const Eigen::Index out_len = f - k + 1;
  Matrix v(batch, channels * out_len);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index p = 0; p < out_len; ++p) {
      for (Eigen::Index c = 0; c < channels; ++c) {
        double acc = bias.value()(0, c);
        for (Eigen::Index t = 0; t < k; ++t) {
          acc += x.value()(b, p + t) * kernel.value()(t, c);
        }
        v(b, p * channels + c) = acc;
      }
    }
  }
  auto xn = x.node(), kn = kernel.node(), bn = bias.node();
  auto pull = [xn, kn, bn, k, channels, out_len](const ad::Node& o) {
    const Eigen::Index batch = xn->value.rows();
    Matrix gx = Matrix::Zero(xn->value.rows(), xn->value.cols());
    Matrix gk = Matrix::Zero(k, channels);
    Matrix gb = Matrix::Zero(1, channels);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index p = 0; p < out_len; ++p) {
        for (Eigen::Index c = 0; c < channels; ++c) {
          const double go = o.grad(b, p * channels + c);
          if (go == 0.0) continue;
          gb(0, c) += go;
          for (Eigen::Index t = 0; t < k; ++t) {
            gk(t, c) += go * xn->value(b, p + t);
            gx(b, p + t) += go * kn->value(t, c);
          }
        }
      }
    }
    if (xn->requires_grad) {
      if (xn->grad.size() == 0) xn->grad = gx; else xn->grad += gx;
    }
    if (kn->requires_grad) {
      if (kn->grad.size() == 0) kn->grad = gk; else kn->grad += gk;
    }
    if (bn->requires_grad) {
      if (bn->grad.size() == 0) bn->grad = gb; else bn->grad += gb;
    }
  };
  auto node = std::make_shared<ad::Node>();
  node->value = std::move(v);
  node->parents = {xn, kn, bn};
  node->requires_grad =
      xn->requires_grad || kn->requires_grad || bn->requires_grad;
  if (node->requires_grad) node->pull = std::move(pull);
  return Tensor(node);
}

}  // namespace emonet::nn
