#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "revgraph/numerics.hpp"
#include "support.hpp"

using namespace revgraph;
using namespace testing_support;

TEST(DenseMatrix, ConstructionAndShapeChecks) {
  DenseMatrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.transposed()(2, 1), 6.0);
  EXPECT_THROW(DenseMatrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW((DenseMatrix{{1, 2}, {3}}), ShapeError);
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(m.all_finite());
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 9, k = 1 + rng() % 9, m = 1 + rng() % 9;
    const DenseMatrix a = random_matrix(n, k, rng), b = random_matrix(k, m, rng);
    EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
    EXPECT_LT(max_abs_diff(matmul_tn(a.transposed(), b), naive_matmul(a, b)), 1e-12);
    EXPECT_LT(max_abs_diff(matmul_nt(a, b.transposed()), naive_matmul(a, b)), 1e-12);
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), ShapeError);
  EXPECT_THROW(matmul_tn(DenseMatrix(2, 3), DenseMatrix(3, 3)), ShapeError);
  EXPECT_THROW(matmul_nt(DenseMatrix(2, 3), DenseMatrix(2, 2)), ShapeError);
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
  DenseMatrix x{{1000.0, 1000.0, -1000.0}, {0.0, 1.0, 2.0}};
  const DenseMatrix p = softmax_rows(x);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_NEAR(p(0, 0), 0.5, 1e-12);
  const double z = std::exp(0.0) + std::exp(1.0) + std::exp(2.0);
  EXPECT_NEAR(p(1, 2), std::exp(2.0) / z, 1e-12);
}

TEST(Softmax, LogSumExpIsStable) {
  std::vector<double> v{1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(v), 1000.0 + std::log(2.0), 1e-9);
}

TEST(Scalar, SoftplusAndSigmoidAtExtremes) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(800.0), 800.0, 1e-9);
  EXPECT_NEAR(softplus(-800.0), 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(softplus(-800.0)));
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_NEAR(sigmoid(800.0), 1.0, 1e-15);
}

TEST(FanInUniform, RespectsBoundAndSeed) {
  Rng a(5), b(5);
  const DenseMatrix m = fan_in_uniform(30, 40, 16, a);
  for (double v : m.values()) EXPECT_LE(std::abs(v), 0.25);
  EXPECT_EQ(m, fan_in_uniform(30, 40, 16, b));
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 seeds(3);
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(seeds());
    MlpParams p = make_mlp(4, 5, 3, rng);
    std::mt19937_64 data_rng(seeds());
    const DenseMatrix x = random_matrix(6, 4, data_rng);
    const DenseMatrix w = random_matrix(6, 3, data_rng);
    // Objective: sum(w .* mlp(x)).
    auto f = [&] {
      const DenseMatrix y = mlp_forward(p, x);
      double s = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) s += w.data()[k] * y.data()[k];
      return s;
    };
    MlpCache cache;
    mlp_forward(p, x, &cache);
    DenseMatrix gx;
    const MlpGrads g = mlp_backward(p, cache, w, &gx);
    EXPECT_LT(max_relative_error(g.w1.values(), numeric_gradient(p.w1.values(), f)), 1e-6);
    EXPECT_LT(max_relative_error(g.b1.values(), numeric_gradient(p.b1.values(), f)), 1e-6);
    EXPECT_LT(max_relative_error(g.w2.values(), numeric_gradient(p.w2.values(), f)), 1e-6);
    EXPECT_LT(max_relative_error(g.b2.values(), numeric_gradient(p.b2.values(), f)), 1e-6);
    DenseMatrix xv = x;
    auto fx = [&] {
      const DenseMatrix y = mlp_forward(p, xv);
      double s = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) s += w.data()[k] * y.data()[k];
      return s;
    };
    EXPECT_LT(max_relative_error(gx.values(), numeric_gradient(xv.values(), fx)), 1e-6);
  }
}

TEST(Mlp, HiddenLayerIsRelu) {
  MlpParams p;
  p.w1 = DenseMatrix{{1.0}, {-1.0}};
  p.b1 = DenseMatrix{{0.0, 0.0}};
  p.w2 = DenseMatrix{{1.0, 1.0}};
  p.b2 = DenseMatrix{{0.0}};
  EXPECT_DOUBLE_EQ(mlp_forward(p, DenseMatrix{{3.0}})(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(mlp_forward(p, DenseMatrix{{-2.0}})(0, 0), 2.0);
}

TEST(AdamW, MatchesHandUnrolledUpdates) {
  AdamWConfig cfg{0.1, 0.9, 0.99, 1e-8, 0.05};
  AdamWState st(cfg, {2, 1});
  st.decay[1] = false;
  std::vector<double> a{1.0, -2.0}, b{0.5};
  const std::vector<std::vector<double>> grads_a{{0.3, -0.1}, {-0.2, 0.4}, {0.0, 1.0}};
  const std::vector<double> grads_b{1.0, 2.0, -3.0};

  // Reference recursion written out independently.
  std::vector<double> ra = a, rb = b, ma(2, 0), va(2, 0);
  double mb = 0, vb = 0;
  for (int t = 1; t <= 3; ++t) {
    const double c1 = 1 - std::pow(0.9, t), c2 = 1 - std::pow(0.99, t);
    for (int k = 0; k < 2; ++k) {
      const double g = grads_a[t - 1][k];
      ma[k] = 0.9 * ma[k] + 0.1 * g;
      va[k] = 0.99 * va[k] + 0.01 * g * g;
      ra[k] -= 0.1 * ((ma[k] / c1) / (std::sqrt(va[k] / c2) + 1e-8) + 0.05 * ra[k]);
    }
    const double g = grads_b[t - 1];
    mb = 0.9 * mb + 0.1 * g;
    vb = 0.99 * vb + 0.01 * g * g;
    rb[0] -= 0.1 * ((mb / c1) / (std::sqrt(vb / c2) + 1e-8));

    std::vector<std::span<double>> params{a, b};
    const double gb[1] = {g};
    std::vector<std::span<const double>> grads{grads_a[t - 1], std::span<const double>(gb, 1)};
    adamw_step(st, params, grads);
  }
  EXPECT_NEAR(a[0], ra[0], 1e-14);
  EXPECT_NEAR(a[1], ra[1], 1e-14);
  EXPECT_NEAR(b[0], rb[0], 1e-14);
  EXPECT_EQ(st.step, 3u);
}

TEST(AdamW, EmptyGradientLeavesBlockUntouched) {
  AdamWState st(AdamWConfig{}, {2, 2});
  std::vector<double> a{1.0, 2.0}, b{3.0, 4.0};
  const std::vector<double> ga{1.0, 1.0};
  std::vector<std::span<double>> params{a, b};
  std::vector<std::span<const double>> grads{ga, {}};
  adamw_step(st, params, grads);
  EXPECT_EQ(b[0], 3.0);
  EXPECT_EQ(b[1], 4.0);
  EXPECT_NE(a[0], 1.0);
}

TEST(AdamW, BlockSizeMismatchThrows) {
  AdamWState st(AdamWConfig{}, {2});
  std::vector<double> a{1.0, 2.0, 3.0};
  const std::vector<double> g{1.0, 1.0, 1.0};
  std::vector<std::span<double>> params{a};
  std::vector<std::span<const double>> grads{g};
  EXPECT_THROW(adamw_step(st, params, grads), ShapeError);
}
