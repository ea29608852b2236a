#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "driftfuse/errors.hpp"
#include "driftfuse/nn.hpp"

namespace driftfuse {
namespace {

std::vector<std::uint32_t> labels(std::initializer_list<std::uint32_t> l) { return l; }

Matrix logits_for(std::initializer_list<double> probs) {
  Matrix z(1, probs.size());
  std::size_t c = 0;
  for (double p : probs) z(0, c++) = std::log(p);
  return z;
}

TEST(Dense, ZeroAndIdentity) {
  DenseLayer zero{Matrix(2, 3), {0, 0}};
  EXPECT_EQ(dense_forward(zero, Matrix{{1, 2, 3}}), Matrix(1, 2));
  DenseLayer id{Matrix::identity(3), {0, 0, 0}};
  const Matrix x{{1, -2, 3}, {0.5, 0, 1}};
  EXPECT_EQ(dense_forward(id, x), x);
  EXPECT_THROW(dense_forward(id, Matrix(1, 2)), ShapeError);
}

TEST(Mlp, IdentitySingleLayerAndDeterminism) {
  Rng rng(1);
  MlpParams p;
  p.dropout_rate = 0.0;
  p.layers.push_back({Matrix::identity(3), {0, 0, 0}});
  const Matrix x{{1, -2, 3}};
  EXPECT_EQ(mlp_forward(p, x, Mode::eval, nullptr), x);

  const std::vector<std::size_t> widths{4, 8, 8, 3};
  const MlpParams r = make_mlp(widths, 0.1, rng);
  const Matrix y{{0.1, 0.2, -0.3, 0.4}};
  EXPECT_EQ(mlp_forward(r, y, Mode::eval, nullptr), mlp_forward(r, y, Mode::eval, nullptr));
}

TEST(Mlp, InvertedDropoutKeepsExpectation) {
  Rng rng(2);
  const std::vector<std::size_t> widths{1, 1, 1};
  MlpParams p = make_mlp(widths, 0.25, rng);
  p.layers[0] = {Matrix{{1.0}}, {0.0}};
  p.layers[1] = {Matrix{{1.0}}, {0.0}};
  Matrix x(20000, 1, 1.0);
  Rng drop(3);
  MlpCache cache;
  const Matrix y = mlp_forward(p, x, Mode::train, &drop, &cache);
  double mean = 0.0;
  std::size_t zeros = 0;
  for (double v : y.values()) {
    mean += v;
    zeros += v == 0.0;
    if (v != 0.0) EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
  }
  mean /= 20000.0;
  EXPECT_NEAR(mean, 1.0, 0.03);
  EXPECT_NEAR(static_cast<double>(zeros) / 20000.0, 0.25, 0.02);
  EXPECT_THROW(mlp_forward(p, x, Mode::train, nullptr), ShapeError);
}

TEST(Mlp, BackwardThroughDropoutMatchesDifferences) {
  Rng rng(4);
  const std::vector<std::size_t> widths{3, 5, 2};
  MlpParams p = make_mlp(widths, 0.3, rng);
  const Matrix x{{0.2, -0.4, 1.1}, {1.0, 0.3, -0.7}};
  const Matrix upstream{{0.5, -1.0}, {2.0, 0.25}};
  auto loss = [&](const MlpParams& q) {
    Rng d(7);
    const Matrix y = mlp_forward(q, x, Mode::train, &d);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * upstream.values()[i];
    return s;
  };
  Rng d(7);
  MlpCache cache;
  mlp_forward(p, x, Mode::train, &d, &cache);
  MlpGradients g = zero_gradients(p);
  mlp_backward(p, cache, upstream, g);

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t i = 0; i < p.layers[l].weight.size(); ++i) {
      MlpParams a = p, b = p;
      a.layers[l].weight.values()[i] += 1e-6;
      b.layers[l].weight.values()[i] -= 1e-6;
      EXPECT_NEAR(g.layers[l].weight.values()[i], (loss(a) - loss(b)) / 2e-6, 1e-7);
    }
  }
}

TEST(SoftmaxCe, Values) {
  EXPECT_NEAR(softmax_ce(Matrix(1, 4), labels({2})).loss.value, std::log(4.0), 1e-15);
  EXPECT_NEAR(softmax_ce(logits_for({0.7, 0.3}), labels({0})).loss.value, 0.356675, 1e-6);
  EXPECT_NEAR(softmax_ce(Matrix{{500.0, 0.0}}, labels({0})).loss.value, 0.0, 1e-300);
  EXPECT_THROW(softmax_ce(Matrix(1, 2), labels({2})), ShapeError);
  EXPECT_THROW(softmax_ce(Matrix(2, 2), labels({0})), ShapeError);
  const auto r = softmax_ce(Matrix{{1000.0, -1000.0}}, labels({1}));
  EXPECT_TRUE(std::isfinite(r.loss.value));
  EXPECT_NEAR(r.loss.value, 2000.0, 1e-9);
}

TEST(Gce, Values) {
  EXPECT_NEAR(gce_loss(logits_for({0.8, 0.2}), labels({0}), 1.0).loss.value, 0.2, 1e-15);
  EXPECT_NEAR(gce_loss(logits_for({0.5, 0.5}), labels({0}), 1e-4).loss.value, std::log(2.0),
              1e-3);
  // (1 - 0.5^0.7) / 0.7 = 0.5491825619 (the oft-quoted 0.54913 is a rounding slip)
  const long double oracle = (1.0L - std::pow(0.5L, 0.7L)) / 0.7L;
  EXPECT_NEAR(gce_loss(logits_for({0.5, 0.5}), labels({1}), 0.7).loss.value,
              static_cast<double>(oracle), 1e-12);
  EXPECT_THROW(gce_loss(Matrix(1, 2), labels({0}), 0.0), ShapeError);
  EXPECT_THROW(gce_loss(Matrix(1, 2), labels({0}), 1.5), ShapeError);
}

TEST(Gce, QOneIsOneMinusProbability) {
  const Matrix z{{0.3, -1.2, 2.0}, {1.0, 1.0, -4.0}};
  const auto r = gce_loss(z, labels({0, 2}), 1.0);
  EXPECT_EQ(r.loss.per_sample[0], 1.0 - r.probs(0, 0));
  EXPECT_EQ(r.loss.per_sample[1], 1.0 - r.probs(1, 2));
}

TEST(Gce, GradientMatchesDifferences) {
  const Matrix z{{0.3, -1.2, 2.0}, {1.0, 0.5, -4.0}};
  const auto l = labels({1, 0});
  for (double q : {0.1, 0.7, 1.0}) {
    const auto r = gce_loss(z, l, q);
    for (std::size_t i = 0; i < z.size(); ++i) {
      Matrix a = z, b = z;
      a.values()[i] += 1e-6;
      b.values()[i] -= 1e-6;
      const double num = (gce_loss(a, l, q).loss.value - gce_loss(b, l, q).loss.value) / 2e-6;
      EXPECT_NEAR(r.grad.values()[i], num, 1e-8);
    }
  }
}

TEST(Optimizer, ZeroGradientAndSgd) {
  std::vector<double> w{1.0, -2.0};
  std::vector<double> g{0.0, 0.0};
  std::vector<std::span<double>> pv{w};
  std::vector<std::span<const double>> gv{g};
  Optimizer adam;
  adam.step(pv, gv);
  EXPECT_EQ(w, (std::vector<double>{1.0, -2.0}));

  Optimizer sgd({OptimizerKind::sgd, 1.0, 0.9, 0.999, 1e-8, 0.0});
  g = {0.5, -0.25};
  sgd.step(pv, gv);
  EXPECT_EQ(w, (std::vector<double>{0.5, -1.75}));
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  std::vector<double> w{1.0, -2.0, 0.5};
  const std::vector<double> g{3.0, -1e-3, 40.0};
  std::vector<std::span<double>> pv{w};
  std::vector<std::span<const double>> gv{g};
  Optimizer adam({OptimizerKind::adam, 1e-3, 0.9, 0.999, 1e-8, 0.0});
  adam.step(pv, gv);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  const std::vector<double> start{1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double expected = 1e-3 * std::abs(g[i]) / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(std::abs(w[i] - start[i]), expected, 1e-15);
    EXPECT_EQ(std::signbit(w[i] - start[i]), !std::signbit(g[i]));
  }
  EXPECT_EQ(adam.steps_taken(), 1u);
  adam.reset();
  EXPECT_EQ(adam.steps_taken(), 0u);
}

TEST(Optimizer, ClipsByGlobalNorm) {
  std::vector<double> w{0.0, 0.0};
  const std::vector<double> g{3.0, 4.0};
  std::vector<std::span<double>> pv{w};
  std::vector<std::span<const double>> gv{g};
  Optimizer sgd({OptimizerKind::sgd, 1.0, 0.9, 0.999, 1e-8, 1.0});
  sgd.step(pv, gv);
  EXPECT_NEAR(w[0], -0.6, 1e-15);
  EXPECT_NEAR(w[1], -0.8, 1e-15);
}

TEST(Optimizer, ZeroLearningRateLeavesParameters) {
  std::vector<double> w{1.0, 2.0};
  const std::vector<double> g{0.3, -0.1};
  std::vector<std::span<double>> pv{w};
  std::vector<std::span<const double>> gv{g};
  Optimizer adam({OptimizerKind::adam, 0.0});
  adam.step(pv, gv);
  EXPECT_EQ(w, (std::vector<double>{1.0, 2.0}));
}

TEST(Optimizer, RejectsLayoutChange) {
  std::vector<double> w{1.0, 2.0}, v{1.0};
  const std::vector<double> g{0.3, -0.1}, h{1.0};
  Optimizer adam;
  std::vector<std::span<double>> pv{w};
  std::vector<std::span<const double>> gv{g};
  adam.step(pv, gv);
  std::vector<std::span<double>> pv2{w, v};
  std::vector<std::span<const double>> gv2{g, h};
  EXPECT_THROW(adam.step(pv2, gv2), ShapeError);
  std::vector<std::span<const double>> bad{h};
  EXPECT_THROW(adam.step(pv, bad), ShapeError);
}

}  // namespace
}  // namespace driftfuse
