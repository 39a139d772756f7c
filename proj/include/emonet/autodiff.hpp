#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "emonet/common.hpp"

namespace emonet::ad {

// Reverse-mode engine over dense 2-D matrices. Every op records its parents
// and a pull-back closure; backward() replays the tape in reverse topological
// order. Values are immutable once created.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> pull;  // adds to parents' grads
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor constant(Matrix v);
  static Tensor param(Matrix v);  // requires_grad = true

  bool valid() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every reachable
// node with requires_grad. The loss must be 1x1.
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // equal shapes
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);

// Row-broadcast ops: r is 1 x cols(a), applied to every row of a.
Tensor add_rowb(const Tensor& a, const Tensor& r);
Tensor sub_rowb(const Tensor& a, const Tensor& r);
Tensor mul_rowb(const Tensor& a, const Tensor& r);
Tensor div_rowb(const Tensor& a, const Tensor& r);

Tensor relu(const Tensor& a);
Tensor tanh_act(const Tensor& a);
Tensor sigmoid(const Tensor& a);

enum class Activation { kRelu, kTanh, kSigmoid, kIdentity };
Tensor activate(const Tensor& a, Activation act);
Activation activation_from_string(const std::string& s);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);

// Column means over rows: result is 1 x cols.
Tensor mean_rows(const Tensor& a);

Tensor add_scalar(const Tensor& a, double s);
Tensor sqrt_t(const Tensor& a);

// Mean squared error over rows where mask is true. pred/target are n x 1.
Tensor mse_loss(const Tensor& pred, const Matrix& target,
                const std::vector<bool>& mask);

// Mean negative log-softmax of the true class over unmasked rows.
Tensor softmax_xent_loss(const Tensor& logits, const std::vector<int>& classes,
                         const std::vector<bool>& mask);

// Inverted dropout driven by the caller's RNG; identity in eval mode.
Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937& rng);

}  // namespace emonet::ad
