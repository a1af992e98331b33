#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rshe/heat_kernel.hpp"

using namespace rshe;

// Frozen by tests/oracles/kernel_oracles.py (closed forms, cross-checked by
// direct mpmath quadrature of the Gaussian convolution identities).
constexpr double kIdentityD_t1_H030 = 1.53214811781729;
constexpr double kIdentityBox_t1_H035 = 25.3081539181414;

TEST(HeatKernel, PointValues) {
  EXPECT_NEAR(eval_p(1.0, 0.0), 1.0 / std::sqrt(4.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(eval_p(0.25, 0.0), 1.0 / std::sqrt(std::numbers::pi), 1e-15);
  EXPECT_GT(eval_p(0.01, 3.0), 0.0);
  EXPECT_THROW(eval_p(0.0, 1.0), DomainError);
}

TEST(HeatKernel, GridQuadratureIsNormalized) {
  auto g = make_space_grid(16, 1024);
  double s = 0.0;
  for (std::size_t j = 0; j < g.n_points; ++j) s += eval_p(1.0, g.x(j)) * g.dx;
  EXPECT_NEAR(s, 1.0, 1e-8);
}

TEST(HeatKernel, Increments) {
  EXPECT_EQ(eval_D(1.0, 0.0, 0.0), 0.0);
  EXPECT_NEAR(eval_D(1.0, 0.7, -1.4), 0.0, 1e-16);
  EXPECT_DOUBLE_EQ(eval_D(0.5, 1.0, 0.1), eval_p(0.5, 1.1) - eval_p(0.5, 1.0));
  EXPECT_EQ(eval_Box(1.0, 0.3, 0.0, 0.2), 0.0);
  EXPECT_EQ(eval_Box(1.0, 0.3, 0.2, 0.0), 0.0);
  double four = eval_p(0.5, 0.2) - eval_p(0.5, 0.1) - eval_p(0.5, 0.1) + eval_p(0.5, 0.0);
  EXPECT_NEAR(eval_Box(0.5, 0.0, 0.1, 0.1), four, 1e-15);
  EXPECT_NEAR(eval_dp_dx(1.0, 0.5), (eval_p(1.0, 0.5 + 1e-6) - eval_p(1.0, 0.5 - 1e-6)) / 2e-6, 1e-9);
}

TEST(HeatKernel, SemigroupIdentityAndConstants) {
  auto g = make_space_grid(8, 256);
  Field f(g.n_points);
  for (std::size_t j = 0; j < g.n_points; ++j) f[j] = std::exp(-g.x(j) * g.x(j));
  Field same = semigroup_apply(0.0, f, g);
  for (std::size_t j = 0; j < g.n_points; ++j) EXPECT_NEAR(same[j], f[j], 1e-14);
  Field c = semigroup_apply(0.7, g.constant(2.5), g);
  for (double v : c) EXPECT_NEAR(v, 2.5, 1e-13);
}

TEST(HeatKernel, SemigroupOfPointMassIsKernel) {
  auto g = make_space_grid(8, 1024);
  Field delta(g.n_points, 0.0);
  delta[g.nearest_index(0.0)] = 1.0 / g.dx;
  Field p = semigroup_apply(0.1, delta, g);
  for (std::size_t j = 0; j < g.n_points; ++j) {
    if (std::abs(g.x(j)) > 4.0) continue;
    double ref = eval_p(0.1, g.x(j));
    if (ref < 1e-12) continue;
    EXPECT_NEAR(p[j], ref, 0.01 * ref) << "x=" << g.x(j);
  }
}

TEST(KernelIdentity, RatiosMatchExponents) {
  for (double H : {0.30, 0.45}) {
    auto d = kernel_identity_D(1.0, H);
    auto b = kernel_identity_Box(1.0, H);
    EXPECT_NEAR(std::exp2(d.fitted_exponent), std::exp2(H - 1.0), 1e-2 * std::exp2(H - 1.0));
    EXPECT_NEAR(std::exp2(b.fitted_exponent), std::exp2(2.0 * H - 1.5), 1.5e-2 * std::exp2(2.0 * H - 1.5));
  }
}

TEST(KernelIdentity, AbsoluteValuesMatchOracle) {
  EXPECT_NEAR(kernel_identity_D(1.0, 0.30).value, kIdentityD_t1_H030, 1e-4 * kIdentityD_t1_H030);
  EXPECT_NEAR(kernel_identity_Box(1.0, 0.35).value, kIdentityBox_t1_H035, 1e-4 * kIdentityBox_t1_H035);
}

TEST(KernelIdentity, ValueAtOtherTimeFollowsPowerLaw) {
  // Independent of the ratio test: compare t = 0.3 against the frozen t = 1 value.
  double v = kernel_identity_D(0.3, 0.30).value;
  EXPECT_NEAR(v, kIdentityD_t1_H030 * std::pow(0.3, -0.7), 1e-4 * v);
}

TEST(KernelIdentity, FitExponentOfPowerLaw) {
  std::vector<double> ts{0.5, 1.0, 2.0, 4.0}, vs;
  for (double t : ts) vs.push_back(3.0 * std::pow(t, -0.65));
  EXPECT_NEAR(fit_exponent(ts, vs), -0.65, 1e-12);
}

TEST(KernelBounds, RatiosFiniteAndBounded) {
  auto rep = kernel_bound_checks({0.1, 0.2, 0.4}, {0.5, 1.0, 2.0}, 0.3);
  ASSERT_EQ(rep.samples.size(), 18u);
  for (const auto& s : rep.samples) {
    EXPECT_TRUE(std::isfinite(s.ratio)) << s.bound;
    EXPECT_GT(s.ratio, 0.0);
  }
  EXPECT_LT(rep.max_ratio_d, 10.0);
  EXPECT_LT(rep.max_ratio_box, 10.0);
}

TEST(KernelBounds, ZeroPointUsesTimeBranch) {
  EXPECT_DOUBLE_EQ(min_branch(2.0, 0.0, 0.3, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(min_branch(2.0, 1.0, 0.3, 1.0), 1.0);
}

TEST(KernelBounds, WeightedDScalesLikeTimePower) {
  const double H = 0.3, z = 1.0;
  double r = d_weighted_integral(0.02, z, H) / d_weighted_integral(0.01, z, H);
  EXPECT_NEAR(r, std::exp2(H - 1.0), 0.05 * std::exp2(H - 1.0));
}

TEST(Weight, EvenAndRatio) {
  const double H = 0.3;
  EXPECT_DOUBLE_EQ(weight_lambda(1.7, H), weight_lambda(-1.7, H));
  EXPECT_NEAR(weight_lambda(0.0, H) / weight_lambda(1.0, H), std::pow(2.0, 1.0 - H), 1e-14);
}

TEST(TimeIncrement, RatioBounded) {
  for (double x : {0.0, 0.5, 2.0})
    for (double h : {0.01, 0.1, 0.5}) EXPECT_LT(time_increment_ratio(0.5, h, x, 0.5), 10.0);
}
