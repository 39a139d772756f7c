#include "emonet/autodiff.hpp"

#include <unordered_set>

namespace emonet::ad {

namespace {

std::shared_ptr<Node> make_node(Matrix v, std::vector<std::shared_ptr<Node>> parents,
                                std::function<void(const Node&)> pull) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->pull = std::move(pull);
  }
  return n;
}

void accumulate(const std::shared_ptr<Node>& p, const Matrix& g) {
  if (!p->requires_grad) return;
  if (p->grad.size() == 0) {
    p->grad = g;
  } else {
    p->grad += g;
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Tensor Tensor::constant(Matrix v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return Tensor(n);
}

Tensor Tensor::param(Matrix v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return Tensor(n);
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw Error("backward: loss must be scalar");
  }
  // Iterative post-order DFS; recursion would overflow on long unrolls.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  loss.node()->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->pull) (*it)->pull(**it);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw Error("matmul: shape mismatch");
  auto an = a.node(), bn = b.node();
  return Tensor(make_node(a.value() * b.value(), {an, bn}, [an, bn](const Node& o) {
    accumulate(an, o.grad * bn->value.transpose());
    accumulate(bn, an->value.transpose() * o.grad);
  }));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto an = a.node(), bn = b.node();
  return Tensor(make_node(a.value() + b.value(), {an, bn}, [an, bn](const Node& o) {
    accumulate(an, o.grad);
    accumulate(bn, o.grad);
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto an = a.node(), bn = b.node();
  return Tensor(make_node(a.value() - b.value(), {an, bn}, [an, bn](const Node& o) {
    accumulate(an, o.grad);
    accumulate(bn, -o.grad);
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto an = a.node(), bn = b.node();
  return Tensor(make_node(a.value().cwiseProduct(b.value()), {an, bn},
                          [an, bn](const Node& o) {
                            accumulate(an, o.grad.cwiseProduct(bn->value));
                            accumulate(bn, o.grad.cwiseProduct(an->value));
                          }));
}

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  return Tensor(make_node(s * a.value(), {an}, [an, s](const Node& o) {
    accumulate(an, s * o.grad);
  }));
}

Tensor add_rowb(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw Error("add_rowb: shape mismatch");
  auto an = a.node(), rn = r.node();
  return Tensor(make_node(a.value().rowwise() + r.value().row(0), {an, rn},
                          [an, rn](const Node& o) {
                            accumulate(an, o.grad);
                            accumulate(rn, o.grad.colwise().sum());
                          }));
}

Tensor sub_rowb(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw Error("sub_rowb: shape mismatch");
  auto an = a.node(), rn = r.node();
  return Tensor(make_node(a.value().rowwise() - r.value().row(0), {an, rn},
                          [an, rn](const Node& o) {
                            accumulate(an, o.grad);
                            accumulate(rn, -o.grad.colwise().sum());
                          }));
}

Tensor mul_rowb(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw Error("mul_rowb: shape mismatch");
  auto an = a.node(), rn = r.node();
  Matrix v = (a.value().array().rowwise() * r.value().row(0).array()).matrix();
  return Tensor(make_node(std::move(v), {an, rn}, [an, rn](const Node& o) {
    accumulate(an, (o.grad.array().rowwise() * rn->value.row(0).array()).matrix());
    accumulate(rn, ((o.grad.array() * an->value.array()).colwise().sum()).matrix());
  }));
}

Tensor div_rowb(const Tensor& a, const Tensor& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw Error("div_rowb: shape mismatch");
  auto an = a.node(), rn = r.node();
  Matrix v = (a.value().array().rowwise() / r.value().row(0).array()).matrix();
  return Tensor(make_node(std::move(v), {an, rn}, [an, rn](const Node& o) {
    Eigen::Array<double, 1, Eigen::Dynamic> rinv =
        rn->value.row(0).array().inverse();
    accumulate(an, (o.grad.array().rowwise() * rinv).matrix());
    accumulate(rn, (-((o.grad.array() * an->value.array()).colwise().sum() *
                      rinv.square()))
                       .matrix());
  }));
}

Tensor relu(const Tensor& a) {
  auto an = a.node();
  return Tensor(make_node(a.value().cwiseMax(0.0), {an}, [an](const Node& o) {
    accumulate(an, (an->value.array() > 0.0).cast<double>().matrix().cwiseProduct(o.grad));
  }));
}

Tensor tanh_act(const Tensor& a) {
  auto an = a.node();
  Matrix v = a.value().array().tanh().matrix();
  return Tensor(make_node(std::move(v), {an}, [an](const Node& o) {
    accumulate(an, ((1.0 - o.value.array().square()) * o.grad.array()).matrix());
  }));
}

Tensor sigmoid(const Tensor& a) {
  auto an = a.node();
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return Tensor(make_node(std::move(v), {an}, [an](const Node& o) {
    accumulate(an, (o.value.array() * (1.0 - o.value.array()) * o.grad.array()).matrix());
  }));
}

Tensor activate(const Tensor& a, Activation act) {
  switch (act) {
    case Activation::kRelu: return relu(a);
    case Activation::kTanh: return tanh_act(a);
    case Activation::kSigmoid: return sigmoid(a);
    case Activation::kIdentity: return a;
  }
  throw Error("activate: unknown activation");
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "identity") return Activation::kIdentity;
  throw Error("unknown activation '" + s + "'");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw Error("concat_cols: row mismatch");
  auto an = a.node(), bn = b.node();
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Eigen::Index ac = a.cols();
  return Tensor(make_node(std::move(v), {an, bn}, [an, bn, ac](const Node& o) {
    accumulate(an, o.grad.leftCols(ac));
    accumulate(bn, o.grad.rightCols(o.grad.cols() - ac));
  }));
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error("slice_cols: out of range");
  }
  auto an = a.node();
  return Tensor(make_node(a.value().middleCols(start, count), {an},
                          [an, start, count](const Node& o) {
                            Matrix g = Matrix::Zero(an->value.rows(), an->value.cols());
                            g.middleCols(start, count) = o.grad;
                            accumulate(an, g);
                          }));
}

Tensor mean_rows(const Tensor& a) {
  auto an = a.node();
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix v = a.value().colwise().mean();
  return Tensor(make_node(std::move(v), {an}, [an, inv](const Node& o) {
    accumulate(an, (Vector::Constant(an->value.rows(), inv) * o.grad.row(0)));
  }));
}

Tensor add_scalar(const Tensor& a, double s) {
  auto an = a.node();
  return Tensor(make_node((a.value().array() + s).matrix(), {an}, [an](const Node& o) {
    accumulate(an, o.grad);
  }));
}

Tensor sqrt_t(const Tensor& a) {
  auto an = a.node();
  Matrix v = a.value().array().sqrt().matrix();
  return Tensor(make_node(std::move(v), {an}, [an](const Node& o) {
    accumulate(an, (o.grad.array() / (2.0 * o.value.array())).matrix());
  }));
}

Tensor mse_loss(const Tensor& pred, const Matrix& target,
                const std::vector<bool>& mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      static_cast<Eigen::Index>(mask.size()) != pred.rows() || pred.cols() != 1) {
    throw Error("mse_loss: shape mismatch");
  }
  int count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  if (count == 0) throw Error("mse_loss: all rows masked");
  auto pn = pred.node();
  Matrix diff = pred.value() - target;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    if (!mask[i]) diff(i, 0) = 0.0;
  }
  Matrix v(1, 1);
  v(0, 0) = diff.squaredNorm() / count;
  auto masked_diff = std::make_shared<Matrix>(std::move(diff));
  return Tensor(make_node(std::move(v), {pn}, [pn, masked_diff, count](const Node& o) {
    accumulate(pn, (2.0 / count) * o.grad(0, 0) * (*masked_diff));
  }));
}

Tensor softmax_xent_loss(const Tensor& logits, const std::vector<int>& classes,
                         const std::vector<bool>& mask) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<Eigen::Index>(classes.size()) != n ||
      static_cast<Eigen::Index>(mask.size()) != n) {
    throw Error("softmax_xent_loss: shape mismatch");
  }
  int count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  if (count == 0) throw Error("softmax_xent_loss: all rows masked");
  Matrix probs(n, k);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (classes[i] < 0 || classes[i] >= k) throw Error("softmax_xent_loss: bad class id");
    Eigen::RowVectorXd row = logits.value().row(i);
    double mx = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - mx).exp();
    double z = e.sum();
    probs.row(i) = e / z;
    if (mask[i]) loss -= std::log(probs(i, classes[i]));
  }
  Matrix v(1, 1);
  v(0, 0) = loss / count;
  auto ln = logits.node();
  auto probs_p = std::make_shared<Matrix>(std::move(probs));
  auto classes_p = std::make_shared<std::vector<int>>(classes);
  auto mask_p = std::make_shared<std::vector<bool>>(mask);
  return Tensor(make_node(std::move(v), {ln},
                          [ln, probs_p, classes_p, mask_p, count](const Node& o) {
                            Matrix g = *probs_p;
                            for (Eigen::Index i = 0; i < g.rows(); ++i) {
                              if (!(*mask_p)[i]) {
                                g.row(i).setZero();
                                continue;
                              }
                              g(i, (*classes_p)[i]) -= 1.0;
                            }
                            accumulate(ln, (o.grad(0, 0) / count) * g);
                          }));
}

Tensor dropout(const Tensor& a, double rate, bool train, std::mt19937& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) return a;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto keep = std::make_shared<Matrix>(a.rows(), a.cols());
  const double inv_keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      (*keep)(i, j) = unif(rng) >= rate ? inv_keep : 0.0;
    }
  }
  auto an = a.node();
  return Tensor(make_node(a.value().cwiseProduct(*keep), {an},
                          [an, keep](const Node& o) {
                            accumulate(an, o.grad.cwiseProduct(*keep));
                          }));
}

}  // namespace emonet::ad
