#include <gtest/gtest.h>

#include <cmath>

#include "rshe/heat_kernel.hpp"
#include "rshe/norms.hpp"

using namespace rshe;

// Frozen by tests/oracles/norm_oracles.py (mpmath, H = 0.3, L = 8).
constexpr double kLambdaMass = 0.65344429204560759762;
constexpr double kLpGaussP2 = 0.42023432874070559323;
constexpr double kLpGaussP4 = 0.60236185953616130519;
constexpr double kPointwiseHeat = 0.54668246865104469481;
constexpr double kNStarHeatP2 = 0.3132805338409140714;

namespace {
const SpaceGrid& grid() {
  static const SpaceGrid g = make_space_grid(8, 2048);
  return g;
}
Field gauss(const SpaceGrid& g) {
  Field f(g.n_points);
  for (std::size_t j = 0; j < g.n_points; ++j) f[j] = std::exp(-g.x(j) * g.x(j));
  return f;
}
Field heat(const SpaceGrid& g) {
  Field f(g.n_points);
  for (std::size_t j = 0; j < g.n_points; ++j) f[j] = eval_p(1.0, g.x(j));
  return f;
}
}  // namespace

TEST(Weight, GridMassAndTail) {
  auto q = weight_quadrature(grid(), 0.3);
  EXPECT_NEAR(q.grid_integral, kLambdaMass, 1e-4);
  EXPECT_NEAR(q.grid_integral + q.tail_mass, 1.0, 1e-4);
}

TEST(Norms, LpLambdaOracle) {
  EXPECT_NEAR(lp_lambda_norm(gauss(grid()), 2.0, grid(), 0.3), kLpGaussP2, 1e-6);
  EXPECT_NEAR(lp_lambda_norm(gauss(grid()), 4.0, grid(), 0.3), kLpGaussP4, 1e-6);
}

TEST(Norms, PointwiseOracle) {
  EXPECT_NEAR(pointwise_n_norm(heat(grid()), 0.0, grid(), 0.3), kPointwiseHeat, 2e-3 * kPointwiseHeat);
}

TEST(Norms, NStarOracle) {
  EXPECT_NEAR(n_star_norm(heat(grid()), 2.0, grid(), 0.3), kNStarHeatP2, 5e-3 * kNStarHeatP2);
}

TEST(Norms, ConstantsHaveNoIncrements) {
  Field c = grid().constant(2.0);
  EXPECT_NEAR(n_star_norm(c, 2.0, grid(), 0.3), 0.0, 1e-14);
  EXPECT_NEAR(pointwise_n_norm(c, 1.0, grid(), 0.3), 0.0, 1e-14);
  EXPECT_NEAR(lp_lambda_norm(c, 2.0, grid(), 0.3), 2.0 * std::sqrt(kLambdaMass), 1e-4);
}

TEST(Norms, HomogeneousAndMonotoneInP) {
  Field f = gauss(grid());
  Field f3 = f;
  for (double& v : f3) v *= -3.0;
  EXPECT_NEAR(lp_lambda_norm(f3, 3.0, grid(), 0.3), 3.0 * lp_lambda_norm(f, 3.0, grid(), 0.3), 1e-12);
  EXPECT_NEAR(n_star_norm(f3, 2.0, grid(), 0.3), 3.0 * n_star_norm(f, 2.0, grid(), 0.3), 1e-12);
  EXPECT_THROW(lp_lambda_norm(f, 1.5, grid(), 0.3), DomainError);
}

TEST(Norms, TriangleInequality) {
  Field a = gauss(grid()), b = heat(grid()), s(a.size());
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = a[j] - 2.0 * b[j];
  Field b2 = b;
  for (double& v : b2) v *= 2.0;
  for (double p : {2.0, 4.0}) {
    EXPECT_LE(lp_lambda_norm(s, p, grid(), 0.3),
              lp_lambda_norm(a, p, grid(), 0.3) + lp_lambda_norm(b2, p, grid(), 0.3) + 1e-12);
    EXPECT_LE(n_star_norm(s, p, grid(), 0.3),
              n_star_norm(a, p, grid(), 0.3) + n_star_norm(b2, p, grid(), 0.3) + 1e-12);
  }
}

TEST(Norms, ZNormIsSupOverTime) {
  Path u{gauss(grid()), heat(grid())};
  auto r = z_norm(u, 2.0, grid(), 0.3);
  EXPECT_NEAR(r.lp_lambda, std::max(kLpGaussP2, lp_lambda_norm(heat(grid()), 2.0, grid(), 0.3)), 1e-6);
  EXPECT_DOUBLE_EQ(r.z_norm, r.lp_lambda + r.n_star);
}

TEST(Norms, MonteCarloOfIdenticalSamples) {
  std::vector<Field> s(5, gauss(grid()));
  auto mc = mc_lp_lambda_norm(s, 2.0, grid(), 0.3);
  EXPECT_NEAR(mc.value, kLpGaussP2, 1e-6);
  EXPECT_NEAR(mc.stderr_, 0.0, 1e-12);
  EXPECT_NEAR(mc_n_star_norm(s, 2.0, grid(), 0.3), n_star_norm(s[0], 2.0, grid(), 0.3), 1e-12);
}

TEST(PathMetric, ZeroForEqualPathsAndBounded) {
  auto g = make_space_grid(8, 64);
  Path u(3, g.constant(1.0)), v(3, g.constant(1.0));
  EXPECT_EQ(path_metric_dC(u, v, g), 0.0);
  v[1][10] = 1e9;
  double d = path_metric_dC(u, v, g);
  EXPECT_LE(d, 1.0 - std::ldexp(1.0, -8) + 1e-15);
  EXPECT_GT(d, 0.0);
  Path w(2, g.constant(1.0));
  EXPECT_THROW(path_metric_dC(u, w, g), ShapeError);
}

TEST(PathMetric, WeightsInnerRegionsMore) {
  auto g = make_space_grid(8, 64);
  Path u(2, g.constant(0.0)), near = u, far = u;
  near[1][g.nearest_index(0.5)] = 0.1;
  far[1][g.nearest_index(7.5)] = 0.1;
  EXPECT_NEAR(path_metric_dC(u, near, g), 0.1 * (1.0 - std::ldexp(1.0, -8)), 1e-14);
  EXPECT_NEAR(path_metric_dC(u, far, g), 0.1 * std::ldexp(1.0, -8), 1e-14);
}

TEST(Modulus, LinearFieldSlope) {
  auto grid2 = build_grid(4, 64, 1.0, 10);
  Path u(11, Field(64));
  for (std::size_t k = 0; k <= 10; ++k)
    for (std::size_t j = 0; j < 64; ++j) u[k][j] = 2.0 * grid2.space.x(j) + 3.0 * grid2.time.time(k);
  double m = modulus_of_continuity(u, grid2, 1.0, 2.0, 0.25);
  // Best pair within theta = 0.25: two time steps (0.2), no spatial room left.
  EXPECT_NEAR(m, 0.6, 1e-12);
  EXPECT_THROW(modulus_of_continuity(u, grid2, 1.0, 5.0, 0.1), DomainError);
}
