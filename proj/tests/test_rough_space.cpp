#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rshe/heat_kernel.hpp"
#include "rshe/rough_space.hpp"

using namespace rshe;

// Frozen by tests/oracles/kernel_oracles.py.
constexpr double kC1_H030 = 0.11504819084081605;
constexpr double kC1_H035 = 0.12885232561538919;

namespace {
// ||p_t||_H^2 = int c1 |xi|^{1-2H} exp(-2 t xi^2) d xi = c1 Gamma(1-H) (2t)^{H-1}.
double heat_kernel_norm_sq(double t, double H) {
  return hurst_c1(H) * std::tgamma(1.0 - H) * std::pow(2.0 * t, H - 1.0);
}
}  // namespace

TEST(HurstConstants, C1Values) {
  EXPECT_NEAR(hurst_c1(0.3), kC1_H030, 1e-15);
  EXPECT_NEAR(hurst_c1(0.35), kC1_H035, 1e-15);
  EXPECT_NEAR(hurst_c2(0.3), 0.06, 1e-15);
}

TEST(HurstConstants, RejectsOutOfRange) {
  EXPECT_THROW(make_hparams(0.25), DomainError);
  EXPECT_THROW(make_hparams(0.5), DomainError);
  EXPECT_NO_THROW(make_hparams(0.49));
}

TEST(HurstConstants, SpectralDensity) {
  HParams p = make_hparams(0.3);
  EXPECT_NEAR(spectral_density(1.0, p), kC1_H030, 1e-15);
  EXPECT_NEAR(spectral_density(-2.0, p), kC1_H030 * std::pow(2.0, 0.4), 1e-15);
}

TEST(HurstConstants, CellMassesSumToIntegral) {
  auto g = make_space_grid(8, 256);
  HParams p = make_hparams(0.3);
  auto mass = spectral_cell_masses(g, p);
  double total = 0.0;
  for (std::size_t m = 0; m < mass.size(); ++m) total += mode_multiplicity(m, g.n_points) * mass[m];
  double nyq = std::numbers::pi / g.dx;
  double exact = 2.0 * p.c1 * std::pow(nyq, 2.0 - 2.0 * p.H) / (2.0 - 2.0 * p.H);
  EXPECT_NEAR(total, exact, 1e-12 * exact);
}

TEST(FourierForm, HeatKernelNorms) {
  auto g = make_space_grid(16, 2048);
  HParams p = make_hparams(0.3);
  RoughSpace space(g, p);
  const double frozen[] = {0.242601787432286, 0.0919288870690377, 0.034834534267851};
  const double ts[] = {0.25, 1.0, 4.0};
  for (int i = 0; i < 3; ++i) {
    double t = ts[i];
    Field f(g.n_points);
    for (std::size_t j = 0; j < g.n_points; ++j) f[j] = eval_p(t, g.x(j));
    double v = space.norm_sq(f);
    EXPECT_NEAR(heat_kernel_norm_sq(t, 0.3), frozen[i], 1e-12);
    EXPECT_NEAR(v, frozen[i], 0.01 * frozen[i]) << "t=" << t;
  }
}

TEST(FourierForm, BilinearSymmetric) {
  auto g = make_space_grid(8, 512);
  RoughSpace space(g, make_hparams(0.35));
  auto suite = smooth_test_suite(g);
  for (const auto& a : suite)
    for (const auto& b : suite)
      EXPECT_NEAR(space.inner(a.values, b.values), space.inner(b.values, a.values),
                  1e-12 * (1.0 + std::abs(space.inner(a.values, b.values))));
}

TEST(FourierForm, RieszRepresenter) {
  auto g = make_space_grid(8, 256);
  RoughSpace space(g, make_hparams(0.3), 0.05);
  auto suite = smooth_test_suite(g);
  Field r = space.riesz(suite[0].values);
  for (const auto& f : suite) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < g.n_points; ++j) lhs += f.values[j] * r[j];
    lhs *= g.dx;
    double rhs = space.inner(f.values, suite[0].values);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(rhs))) << f.name;
  }
}

TEST(GagliardoForm, AgreesWithFourierOnSmoothSuite) {
  auto g = make_space_grid(16, 2048);
  for (double H : {0.3, 0.4}) {
    HParams p = make_hparams(H);
    RoughSpace space(g, p);
    for (const auto& f : smooth_test_suite(g)) {
      double fourier = inner_product_fourier(f.values, f.values, space);
      double gag = inner_product_gagliardo(f.values, f.values, g, p);
      EXPECT_NEAR(gag, fourier, 0.02 * fourier) << f.name << " H=" << H;
    }
  }
}

TEST(GagliardoForm, ZeroFieldAndConstantMode) {
  auto g = make_space_grid(8, 256);
  HParams p = make_hparams(0.3);
  Field zero(g.n_points, 0.0);
  EXPECT_EQ(inner_product_gagliardo(zero, zero, g, p), 0.0);
  RoughSpace space(g, p);
  Field c = g.constant(3.0);
  double fourier = space.norm_sq(c);
  double zero_mode = 9.0 * std::pow(2.0 * g.half_width, 2.0) * space.masses()[0];
  EXPECT_NEAR(fourier, zero_mode, 1e-9 * zero_mode);
}

TEST(Mollifier, EvenWithKnownPeak) {
  auto g = make_space_grid(16, 4096);
  const double H = 0.3, eps = 0.1;
  HParams p = make_hparams(H);
  MollifiedSpace ms = build_mollifier(eps, g, p);
  const std::size_t mid = g.n_points / 2;
  ASSERT_NEAR(g.x(mid), 0.0, 1e-15);
  for (std::size_t j = 1; j < 200; ++j) EXPECT_NEAR(ms.f_eps[mid + j], ms.f_eps[mid - j], 1e-12);
  double peak = std::tgamma(1.0 - H) * std::pow(eps, H - 1.0) / (2.0 * std::numbers::pi);
  EXPECT_NEAR(ms.f_eps[mid], peak, 0.01 * peak);
  for (std::size_t j = 0; j < g.n_points; ++j) EXPECT_LE(ms.f_eps[j], ms.f_eps[mid] + 1e-12);
}

TEST(Mollifier, PeakDecreasesWithEps) {
  auto g = make_space_grid(16, 4096);
  HParams p = make_hparams(0.3);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.02, 0.05, 0.1, 0.2}) {
    double peak = build_mollifier(eps, g, p).f_eps[g.n_points / 2];
    EXPECT_LT(peak, prev);
    prev = peak;
  }
  EXPECT_THROW(build_mollifier(0.0, g, p), DomainError);
}

TEST(MollifiedForm, NormsIncreaseAsEpsDecreases) {
  auto g = make_space_grid(16, 2048);
  RoughSpace space(g, make_hparams(0.3));
  for (const auto& f : smooth_test_suite(g)) {
    double prev = -1.0;
    for (double eps : {0.2, 0.1, 0.05, 0.0}) {
      double v = space.mollified(eps).norm_sq(f.values);
      EXPECT_GT(v, prev) << f.name << " eps=" << eps;
      prev = v;
    }
    // The gap closes linearly in eps since 1 - exp(-eps xi^2) <= eps xi^2.
    double gap_2 = prev - space.mollified(0.01).norm_sq(f.values);
    double gap_3 = prev - space.mollified(0.001).norm_sq(f.values);
    EXPECT_GT(gap_3, 0.0) << f.name;
    EXPECT_LT(gap_3, 0.15 * gap_2) << f.name;
    EXPECT_LT(gap_3, 5e-3 * prev) << f.name;
  }
}

TEST(MollifiedForm, ConvolutionMatchesFourier) {
  auto g = make_space_grid(8, 1024);
  HParams p = make_hparams(0.3);
  RoughSpace space(g, p, 0.01);
  MollifiedSpace ms = build_mollifier(0.01, g, p);
  auto suite = smooth_test_suite(g);
  for (std::size_t a = 0; a < suite.size(); a += 2) {
    for (std::size_t b : {a, std::size_t{1}}) {
      double conv = inner_product_convolution(suite[a].values, suite[b].values, ms, g, p);
      double four = space.inner(suite[a].values, suite[b].values);
      double scale = std::sqrt(space.norm_sq(suite[a].values) * space.norm_sq(suite[b].values));
      EXPECT_NEAR(conv, four, 1e-9 * scale) << suite[a].name << " x " << suite[b].name;
    }
  }
}

TEST(MollifiedForm, RejectsBadInput) {
  auto g = make_space_grid(8, 64);
  EXPECT_THROW(RoughSpace(g, make_hparams(0.3), -0.1), DomainError);
  Field wrong(63, 0.0);
  EXPECT_THROW(inner_product_gagliardo(wrong, wrong, g, make_hparams(0.3)), ShapeError);
}
