#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "emonet/autodiff.hpp"
#include "emonet/nn.hpp"

using namespace emonet;
using ad::Tensor;

namespace {

Matrix randm(std::mt19937& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  std::normal_distribution<double> n(0.0, s);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// Central finite differences on every entry of every input matrix against
// the gradients reported by backward(). `f` must rebuild the graph from the
// raw matrices on each call and return (loss tensor, param tensors).
void grad_check(std::vector<Matrix> inputs,
                const std::function<Tensor(const std::vector<Tensor>&)>& f,
                double tol = 1e-4, double h = 1e-5) {
  auto wrap = [&](const std::vector<Matrix>& vals) {
    std::vector<Tensor> ts;
    for (const auto& v : vals) ts.push_back(Tensor::param(v));
    return ts;
  };
  auto params = wrap(inputs);
  Tensor loss = f(params);
  REQUIRE(loss.rows() == 1);
  REQUIRE(loss.cols() == 1);
  ad::backward(loss);

  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const Matrix& g = params[p].grad();
    REQUIRE(g.rows() == inputs[p].rows());
    REQUIRE(g.cols() == inputs[p].cols());
    for (Eigen::Index i = 0; i < inputs[p].rows(); ++i) {
      for (Eigen::Index j = 0; j < inputs[p].cols(); ++j) {
        auto eval = [&](double delta) {
          std::vector<Matrix> shifted = inputs;
          shifted[p](i, j) += delta;
          return f(wrap(shifted)).value()(0, 0);
        };
        double fd = (eval(h) - eval(-h)) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(g(i, j)), 1e-6});
        CHECK(std::abs(fd - g(i, j)) / denom < tol);
      }
    }
  }
}

Tensor sum_all(const Tensor& t) {
  // Reduce to 1x1 by two matmuls with ones (both differentiable paths used
  // in the real models).
  Tensor left = Tensor::constant(Matrix::Ones(1, t.rows()));
  Tensor right = Tensor::constant(Matrix::Ones(t.cols(), 1));
  return ad::matmul(ad::matmul(left, t), right);
}

}  // namespace

TEST_CASE("elementwise and matmul gradients vs finite differences") {
  std::mt19937 rng(2);
  for (int t = 0; t < 20; ++t) {
    std::uniform_int_distribution<int> dim(1, 4);
    int a = dim(rng), b = dim(rng), c = dim(rng);
    grad_check({randm(rng, a, b), randm(rng, b, c)},
               [](const std::vector<Tensor>& p) {
                 return sum_all(ad::matmul(p[0], p[1]));
               });
    grad_check({randm(rng, a, b), randm(rng, a, b)},
               [](const std::vector<Tensor>& p) {
                 return sum_all(ad::mul(ad::add(p[0], p[1]), ad::sub(p[0], p[1])));
               });
    grad_check({randm(rng, a, b), randm(rng, 1, b)},
               [](const std::vector<Tensor>& p) {
                 return sum_all(ad::mul_rowb(ad::add_rowb(p[0], p[1]), p[1]));
               });
    grad_check({randm(rng, a, b), randm(rng, 1, b).cwiseAbs() + Matrix::Ones(1, b)},
               [](const std::vector<Tensor>& p) {
                 return sum_all(ad::div_rowb(ad::sub_rowb(p[0], p[1]), p[1]));
               });
  }
}

TEST_CASE("activation gradients vs finite differences") {
  std::mt19937 rng(3);
  for (int t = 0; t < 20; ++t) {
    Matrix x = randm(rng, 3, 3);
    x.array() += 0.3;  // keep relu away from the kink
    grad_check({x}, [](const std::vector<Tensor>& p) {
      return sum_all(ad::relu(p[0]));
    }, 1e-4, 1e-6);
    grad_check({randm(rng, 2, 4)}, [](const std::vector<Tensor>& p) {
      return sum_all(ad::tanh_act(p[0]));
    });
    grad_check({randm(rng, 2, 4)}, [](const std::vector<Tensor>& p) {
      return sum_all(ad::sigmoid(p[0]));
    });
    grad_check({randm(rng, 2, 3).cwiseAbs() + Matrix::Ones(2, 3)},
               [](const std::vector<Tensor>& p) {
                 return sum_all(ad::sqrt_t(ad::add_scalar(p[0], 0.5)));
               });
    grad_check({randm(rng, 2, 3), randm(rng, 2, 2)},
               [](const std::vector<Tensor>& p) {
                 Tensor cat = ad::concat_cols(p[0], p[1]);
                 return sum_all(ad::mul(ad::slice_cols(cat, 1, 3),
                                        ad::slice_cols(cat, 2, 3)));
               });
    grad_check({randm(rng, 4, 3)}, [](const std::vector<Tensor>& p) {
      return sum_all(ad::mean_rows(ad::mul(p[0], p[0])));
    });
  }
}

TEST_CASE("dense layer identity and gradient") {
  Matrix x = randm(*(new std::mt19937(5)), 3, 3);
  Tensor out = nn::dense_forward(Tensor::constant(x),
                                 Tensor::param(Matrix::Identity(3, 3)),
                                 Tensor::param(Matrix::Zero(1, 3)),
                                 ad::Activation::kIdentity);
  CHECK((out.value() - x).cwiseAbs().maxCoeff() < 1e-15);

  Tensor zero = nn::dense_forward(Tensor::constant(Matrix::Zero(2, 3)),
                                  Tensor::param(randm(*(new std::mt19937(6)), 3, 2)),
                                  Tensor::param(Matrix::Zero(1, 2)),
                                  ad::Activation::kRelu);
  CHECK(zero.value().cwiseAbs().maxCoeff() == 0.0);

  std::mt19937 rng(7);
  for (int t = 0; t < 20; ++t) {
    grad_check({randm(rng, 2, 3), randm(rng, 3, 2), randm(rng, 1, 2)},
               [](const std::vector<Tensor>& p) {
                 return sum_all(nn::dense_forward(p[0], p[1], p[2],
                                                  ad::Activation::kTanh));
               });
  }
}

TEST_CASE("gcn layer reduces to dense on the edgeless graph") {
  std::mt19937 rng(11);
  Matrix h = randm(rng, 4, 3);
  Matrix theta = randm(rng, 3, 2);
  NormalizedAdjacency eye = normalize_adjacency(Matrix::Zero(4, 4));
  Tensor gcn = nn::gcn_layer_forward(Tensor::constant(h), eye,
                                     Tensor::param(theta), ad::Activation::kTanh);
  Tensor dense = nn::dense_forward(Tensor::constant(h), Tensor::param(theta),
                                   Tensor::param(Matrix::Zero(1, 2)),
                                   ad::Activation::kTanh);
  CHECK((gcn.value() - dense.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gcn layer symmetry, equivariance, gradients") {
  // K2 with equal node features -> identical output rows.
  Matrix k2(2, 2);
  k2 << 0, 1, 1, 0;
  NormalizedAdjacency n2 = normalize_adjacency(k2);
  Matrix h(2, 3);
  h << 1, 2, 3, 1, 2, 3;
  std::mt19937 rng(13);
  Tensor out = nn::gcn_layer_forward(Tensor::constant(h), n2,
                                     Tensor::param(randm(rng, 3, 2)),
                                     ad::Activation::kIdentity);
  CHECK((out.value().row(0) - out.value().row(1)).cwiseAbs().maxCoeff() < 1e-12);

  // Permutation equivariance on a random 4-node graph.
  Matrix a = randm(rng, 4, 4).cwiseAbs();
  a.diagonal().setZero();
  a = ((a + a.transpose()) / 2).eval();
  Matrix hh = randm(rng, 4, 3);
  Matrix theta = randm(rng, 3, 2);
  std::vector<int> perm = {2, 0, 3, 1};
  Matrix p = Matrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) p(perm[i], i) = 1.0;
  NormalizedAdjacency na = normalize_adjacency(a);
  NormalizedAdjacency npa = normalize_adjacency(Matrix(p * a * p.transpose()));
  Tensor base = nn::gcn_layer_forward(Tensor::constant(hh), na,
                                      Tensor::param(theta),
                                      ad::Activation::kTanh);
  Tensor permuted = nn::gcn_layer_forward(Tensor::constant(Matrix(p * hh)), npa,
                                          Tensor::param(theta),
                                          ad::Activation::kTanh);
  CHECK((permuted.value() - p * base.value()).cwiseAbs().maxCoeff() < 1e-10);

  for (int t = 0; t < 20; ++t) {
    Matrix adj = randm(rng, 4, 4).cwiseAbs();
    adj.diagonal().setZero();
    adj = ((adj + adj.transpose()) / 2).eval();
    NormalizedAdjacency norm = normalize_adjacency(adj);
    grad_check({randm(rng, 4, 3), randm(rng, 3, 2)},
               [&](const std::vector<Tensor>& p2) {
                 return sum_all(nn::gcn_layer_forward(p2[0], norm, p2[1],
                                                      ad::Activation::kSigmoid));
               });
  }
}

TEST_CASE("lstm zero fixed point and two-step gradient") {
  nn::ParamStore store;
  std::mt19937 rng(17);
  auto params = nn::lstm_params(store, "z", 3, 4, rng);
  params.wx.mutable_value().setZero();
  params.wh.mutable_value().setZero();
  params.b.mutable_value().setZero();
  nn::LstmState state{Tensor::constant(Matrix::Zero(2, 4)),
                      Tensor::constant(Matrix::Zero(2, 4))};
  auto next = nn::lstm_step(Tensor::constant(Matrix::Zero(2, 3)), state, params);
  CHECK(next.h.value().cwiseAbs().maxCoeff() == 0.0);
  CHECK(next.c.value().cwiseAbs().maxCoeff() == 0.0);

  for (int t = 0; t < 20; ++t) {
    Matrix x1 = randm(rng, 2, 3), x2 = randm(rng, 2, 3);
    grad_check({randm(rng, 3, 16) * 0.4, randm(rng, 4, 16) * 0.4,
                randm(rng, 1, 16) * 0.4},
               [&](const std::vector<Tensor>& p) {
                 nn::LstmParams lp{p[0], p[1], p[2]};
                 nn::LstmState s{Tensor::constant(Matrix::Zero(2, 4)),
                                 Tensor::constant(Matrix::Zero(2, 4))};
                 s = nn::lstm_step(Tensor::constant(x1), s, lp);
                 s = nn::lstm_step(Tensor::constant(x2), s, lp);
                 return sum_all(s.h);
               });
  }
}

TEST_CASE("batchnorm statistics and gradient") {
  std::mt19937 rng(19);
  Matrix x = randm(rng, 8, 3, 2.0);
  auto state = nn::BatchNormState::create(3);
  Tensor out = nn::batchnorm_forward(Tensor::constant(x),
                                     Tensor::param(Matrix::Ones(1, 3)),
                                     Tensor::param(Matrix::Zero(1, 3)),
                                     state, /*train=*/true);
  Matrix v = out.value();
  for (int f = 0; f < 3; ++f) {
    double mean = v.col(f).mean();
    double sd = std::sqrt((v.col(f).array() - mean).square().mean());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(sd - 1.0) < 1e-3);  // eps shrinks sd slightly
  }

  for (int t = 0; t < 20; ++t) {
    Matrix xx = randm(rng, 5, 2);
    grad_check({xx, randm(rng, 1, 2), randm(rng, 1, 2)},
               [](const std::vector<Tensor>& p) {
                 auto st = nn::BatchNormState::create(2);
                 return sum_all(nn::batchnorm_forward(p[0], p[1], p[2], st, true));
               },
               2e-4);
  }
}

TEST_CASE("conv1d gradient and shape") {
  std::mt19937 rng(23);
  for (int t = 0; t < 20; ++t) {
    Matrix x = randm(rng, 3, 6);
    grad_check({x, randm(rng, 3, 2), randm(rng, 1, 2)},
               [](const std::vector<Tensor>& p) {
                 return sum_all(nn::conv1d_forward(p[0], p[1], p[2]));
               });
  }
  Tensor out = nn::conv1d_forward(Tensor::constant(randm(rng, 4, 6)),
                                  Tensor::param(randm(rng, 3, 2)),
                                  Tensor::param(randm(rng, 1, 2)));
  CHECK(out.rows() == 4);
  CHECK(out.cols() == (6 - 3 + 1) * 2);
}

TEST_CASE("mse loss values, mask, gradient") {
  Matrix target(2, 1);
  target << 1.0, 1.0;
  Matrix pred(2, 1);
  pred << 1.0, 3.0;
  Tensor loss = ad::mse_loss(Tensor::param(pred), target, {true, true});
  CHECK(loss.value()(0, 0) == doctest::Approx(2.0));  // (0 + 4)/2

  Matrix pred2(2, 1);
  pred2 << 1.0, 101.0;
  Tensor masked = ad::mse_loss(Tensor::param(pred2), target, {true, false});
  CHECK(masked.value()(0, 0) == 0.0);
  CHECK_THROWS_AS(
      static_cast<void>(ad::mse_loss(Tensor::param(pred2), target, {false, false})),
      Error);

  std::mt19937 rng(29);
  for (int t = 0; t < 20; ++t) {
    Matrix tgt = randm(rng, 4, 1);
    grad_check({randm(rng, 4, 1)}, [&](const std::vector<Tensor>& p) {
      return ad::mse_loss(p[0], tgt, {true, false, true, true});
    });
  }
}

TEST_CASE("softmax cross-entropy values and gradient") {
  Tensor uniform = ad::softmax_xent_loss(Tensor::param(Matrix::Zero(2, 3)),
                                         {0, 2}, {true, true});
  CHECK(uniform.value()(0, 0) == doctest::Approx(std::log(3.0)));

  Matrix sharp(1, 3);
  sharp << 50.0, 0.0, 0.0;
  Tensor confident = ad::softmax_xent_loss(Tensor::param(sharp), {0}, {true});
  CHECK(confident.value()(0, 0) < 1e-12);

  std::mt19937 rng(31);
  for (int t = 0; t < 20; ++t) {
    grad_check({randm(rng, 4, 3)}, [](const std::vector<Tensor>& p) {
      return ad::softmax_xent_loss(p[0], {0, 1, 2, 1}, {true, true, false, true});
    });
  }
}

TEST_CASE("dropout modes and survivor fraction") {
  std::mt19937 rng(37);
  Matrix x = Matrix::Ones(100, 1000);
  Tensor id0 = ad::dropout(Tensor::constant(x), 0.0, true, rng);
  CHECK((id0.value() - x).cwiseAbs().maxCoeff() == 0.0);
  Tensor ideval = ad::dropout(Tensor::constant(x), 0.9, false, rng);
  CHECK((ideval.value() - x).cwiseAbs().maxCoeff() == 0.0);

  Tensor dropped = ad::dropout(Tensor::constant(x), 0.5, true, rng);
  int survivors = 0;
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 1000; ++j) survivors += dropped.value()(i, j) != 0.0;
  double frac = survivors / 1e5;
  CHECK(std::abs(frac - 0.5) < 0.01);
  // Survivors are rescaled by 1/(1-rate).
  CHECK(dropped.value().maxCoeff() == doctest::Approx(2.0));
}

TEST_CASE("adam step hand value and invariants") {
  nn::ParamStore store;
  Tensor& p = store.add("w", Matrix::Constant(1, 1, 1.0));
  p.node()->grad = Matrix::Constant(1, 1, 1.0);
  store.adam_step(0.1);
  // Bias-corrected m^=1, v^=1 -> update = -0.1 * 1/(1 + 1e-8).
  CHECK(p.value()(0, 0) == doctest::Approx(1.0 - 0.09999999900000009).epsilon(1e-12));
  CHECK(store.step() == 1);

  // Zero gradient leaves the parameter unchanged.
  nn::ParamStore store2;
  Tensor& q = store2.add("w", Matrix::Constant(1, 1, 2.5));
  q.node()->grad = Matrix::Zero(1, 1);
  store2.adam_step(0.1);
  CHECK(q.value()(0, 0) == 2.5);

  // Non-finite gradient is rejected by name.
  nn::ParamStore store3;
  Tensor& r = store3.add("bad", Matrix::Constant(1, 1, 0.0));
  r.node()->grad = Matrix::Constant(1, 1, std::nan(""));
  CHECK_THROWS_WITH_AS(store3.adam_step(0.1), doctest::Contains("bad"), Error);
}

TEST_CASE("param store save/load round-trip") {
  std::mt19937 rng(41);
  nn::ParamStore store;
  store.add("a", randm(rng, 2, 3));
  store.add("b", randm(rng, 1, 4));
  store.get("a").node()->grad = randm(rng, 2, 3);
  store.get("b").node()->grad = randm(rng, 1, 4);
  store.adam_step(1e-3);
  store.save("/tmp/emonet_ckpt.json", "/tmp/emonet_ckpt.bin");

  nn::ParamStore loaded;
  loaded.load("/tmp/emonet_ckpt.json", "/tmp/emonet_ckpt.bin");
  CHECK((loaded.get("a").value() - store.get("a").value()).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((loaded.get("b").value() - store.get("b").value()).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(loaded.step() == store.step());

  // Subsequent identical updates stay bitwise identical.
  loaded.get("a").node()->grad = Matrix::Ones(2, 3);
  store.get("a").node()->grad = Matrix::Ones(2, 3);
  loaded.get("b").node()->grad = Matrix::Zero(1, 4);
  store.get("b").node()->grad = Matrix::Zero(1, 4);
  loaded.adam_step(1e-3);
  store.adam_step(1e-3);
  CHECK((loaded.get("a").value() - store.get("a").value()).cwiseAbs().maxCoeff() ==
        0.0);
}
