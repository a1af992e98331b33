#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "rshe/discretization.hpp"
#include "rshe/errors.hpp"
#include "rshe/fft.hpp"
#include "rshe/lag_quadrature.hpp"

namespace rshe {

struct HParams {
  double H = 0.0;
  double c1 = 0.0;  // spectral constant: mu(d xi) = c1 |xi|^{1-2H} d xi
  double c2 = 0.0;  // increment-form constant matching the spectral form
  // Normalization expression of the moving-average representation of fBm,
  // kept for reporting. It does not reproduce the spectral form (see README).
  double c2_moving_average = 0.0;
};

inline double hurst_c1(double H) {
  return std::tgamma(2.0 * H + 1.0) * std::sin(std::numbers::pi * H) / (2.0 * std::numbers::pi);
}

// With J = int (1 - cos u)|u|^{2H-2} du = Gamma(2H+1) sin(pi H) / (H(1-2H)),
// c2 = pi c1 / J = H(1-2H)/2.
inline double hurst_c2(double H) { return 0.5 * H * (1.0 - 2.0 * H); }

inline double moving_average_constant(double H) {
  const double a = H - 0.5;
  auto f = [a](double t) {
    double d = std::pow(1.0 + t, a) - std::pow(t, a);
    return d * d;
  };
  boost::math::quadrature::tanh_sinh<double> near;
  boost::math::quadrature::exp_sinh<double> far;
  double integral = near.integrate(f, 0.0, 1.0) + far.integrate(f, 1.0, std::numeric_limits<double>::infinity());
  return std::sqrt((0.5 - H) * H) / std::tgamma(H + 0.5) *
         std::sqrt(integral + 1.0 / (2.0 * H));
}

inline HParams make_hparams(double H) {
  if (!(H > 0.25 && H < 0.5)) throw DomainError("Hurst parameter must lie in (1/4, 1/2)");
  return {H, hurst_c1(H), hurst_c2(H), moving_average_constant(H)};
}

inline double spectral_density(double xi, const HParams& p) {
  return p.c1 * std::pow(std::abs(xi), 1.0 - 2.0 * p.H);
}

// Exact mass of c1|xi|^{1-2H} on the lattice cell of each non-negative mode.
// Cells have width pi/L; mode 0 owns (-pi/2L, pi/2L) and the Nyquist mode owns
// the two half-cells adjacent to +-pi/dx.
inline std::vector<double> spectral_cell_masses(const SpaceGrid& g, const HParams& p) {
  const std::size_t half = g.n_points / 2;
  const double dxi = std::numbers::pi / g.half_width;
  const double a = 2.0 - 2.0 * p.H;
  auto prim = [&](double xi) { return p.c1 * std::pow(xi, a) / a; };
  std::vector<double> mass(half + 1);
  mass[0] = 2.0 * prim(0.5 * dxi);
  for (std::size_t m = 1; m < half; ++m) {
    double xm = static_cast<double>(m) * dxi;
    mass[m] = prim(xm + 0.5 * dxi) - prim(xm - 0.5 * dxi);
  }
  double xn = static_cast<double>(half) * dxi;
  mass[half] = 2.0 * (prim(xn) - prim(xn - 0.5 * dxi));
  return mass;
}

// Number of lattice points represented by half-spectrum entry m of a real field.
inline double mode_multiplicity(std::size_t m, std::size_t n) {
  return (m == 0 || m == n / 2) ? 1.0 : 2.0;
}

// Discrete H_eps: the spectral form on the grid lattice, optionally damped by
// exp(-eps xi^2). eps = 0 is H itself.
class RoughSpace {
public:
  RoughSpace(const SpaceGrid& grid, const HParams& params, double eps = 0.0)
      : grid_(grid), params_(params), eps_(eps), fft_(fft_for(grid.n_points)) {
    if (eps < 0.0 || !std::isfinite(eps)) throw DomainError("mollification eps must be >= 0");
    mass_ = spectral_cell_masses(grid, params);
    weight_.resize(mass_.size());
    for (std::size_t m = 0; m < mass_.size(); ++m) {
      double xi = grid.frequency(m);
      weight_[m] = mass_[m] * std::exp(-eps * xi * xi);
    }
  }

  const SpaceGrid& grid() const { return grid_; }
  const HParams& params() const { return params_; }
  double eps() const { return eps_; }
  const RealFft& fft() const { return *fft_; }
  // Cell masses of mu, and the eps-damped versions used by this space.
  const std::vector<double>& masses() const { return mass_; }
  const std::vector<double>& weights() const { return weight_; }

  RoughSpace mollified(double eps) const { return RoughSpace(grid_, params_, eps); }

  Spectrum transform(const Field& f) const {
    check_shape(f, grid_, "RoughSpace::transform");
    return fft_->forward(f);
  }

  // <phi, psi> with optional extra real multiplier per mode.
  double inner_spectral(const Spectrum& a, const Spectrum& b,
                        const std::vector<double>* extra = nullptr) const {
    double s = 0.0;
    const std::size_t n = grid_.n_points;
    for (std::size_t m = 0; m < a.size(); ++m) {
      double w = weight_[m] * mode_multiplicity(m, n);
      if (extra) w *= (*extra)[m];
      s += w * (a[m].real() * b[m].real() + a[m].imag() * b[m].imag());
    }
    return grid_.dx * grid_.dx * s;
  }

  double inner(const Field& phi, const Field& psi) const {
    return inner_spectral(transform(phi), transform(psi));
  }
  double norm_sq(const Field& phi) const {
    Spectrum a = transform(phi);
    return inner_spectral(a, a);
  }
  double norm(const Field& phi) const { return std::sqrt(norm_sq(phi)); }

  // Riesz representer: dx * sum_j phi_j (R g)_j = <phi, g>_{H_eps} for every phi.
  Field riesz(const Field& g, const std::vector<double>* extra = nullptr) const {
    Spectrum c = transform(g);
    riesz_in_place(c, extra);
    return fft_->backward(c);
  }
  void riesz_in_place(Spectrum& c, const std::vector<double>* extra = nullptr) const {
    const double scale = grid_.dx;
    for (std::size_t m = 0; m < c.size(); ++m) {
      double w = scale * weight_[m];
      if (extra) w *= (*extra)[m];
      c[m] *= w;
    }
  }

private:
  SpaceGrid grid_;
  HParams params_;
  double eps_;
  std::shared_ptr<const RealFft> fft_;
  std::vector<double> mass_;
  std::vector<double> weight_;
};

struct NamedField {
  std::string name;
  Field values;
};

// Gaussians and differences of Gaussians used to compare the inner-product forms.
inline std::vector<NamedField> smooth_test_suite(const SpaceGrid& g) {
  auto make = [&](const std::string& name, auto f) {
    NamedField nf{name, Field(g.n_points)};
    for (std::size_t j = 0; j < g.n_points; ++j) nf.values[j] = f(g.x(j));
    return nf;
  };
  auto gauss = [](double x, double c, double s) { return std::exp(-0.5 * (x - c) * (x - c) / (s * s)); };
  return {
      make("gauss_1", [&](double x) { return gauss(x, 0.0, 1.0); }),
      make("gauss_0.5", [&](double x) { return gauss(x, 0.0, 0.5); }),
      make("gauss_shifted", [&](double x) { return gauss(x, 1.5, 0.7); }),
      make("dog_centered", [&](double x) { return gauss(x, 0.0, 1.0) - 0.5 * gauss(x, 0.0, 2.0); }),
      make("dog_antisymmetric",
           [&](double x) { return gauss(x, -1.0, 1.0 / std::sqrt(2.0)) - gauss(x, 1.0, 1.0 / std::sqrt(2.0)); }),
  };
}

inline double inner_product_fourier(const Field& phi, const Field& psi, const RoughSpace& space) {
  return space.inner(phi, psi);
}

// Increment form c2 int int [phi(x+y)-phi(x)][psi(x+y)-psi(x)] |y|^{2H-2} dx dy,
// fields extended by zero outside the grid.
inline double inner_product_gagliardo(const Field& phi, const Field& psi, const SpaceGrid& g,
                                      const HParams& p) {
  check_shape(phi, g, "inner_product_gagliardo");
  check_shape(psi, g, "inner_product_gagliardo");
  const std::size_t n = g.n_points;
  double l2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) l2 += phi[i] * psi[i];
  auto lag_value = [&](std::size_t j) {
    double cross = 0.0;
    for (std::size_t i = 0; i + j < n; ++i) cross += phi[i + j] * psi[i] + phi[i] * psi[i + j];
    return g.dx * (2.0 * l2 - cross);
  };
  LagIntegral li = integrate_lags(lag_value, n, g.dx, p.H, 2.0 * g.dx * l2);
  return p.c2 * 2.0 * li.value;
}

// Sampled mollifier f_eps(x) = (1/2pi) int exp(i xi x) exp(-eps xi^2) |xi|^{1-2H} d xi,
// by the cell-mass lattice sum.
struct MollifiedSpace {
  double eps = 0.0;
  Field f_eps;
};

inline MollifiedSpace build_mollifier(double eps, const SpaceGrid& g, const HParams& p) {
  if (!(eps > 0.0)) throw DomainError("build_mollifier requires eps > 0");
  std::vector<double> mass = spectral_cell_masses(g, p);
  Spectrum c(mass.size());
  for (std::size_t m = 0; m < mass.size(); ++m) {
    double xi = g.frequency(m);
    double sign = (m % 2 == 0) ? 1.0 : -1.0;  // exp(i xi_m L) = (-1)^m
    c[m] = sign * mass[m] * std::exp(-eps * xi * xi) / (2.0 * std::numbers::pi * p.c1);
  }
  return {eps, fft_for(g.n_points)->backward(c)};
}

// 2 pi c1 int int phi(x) psi(y) f_eps(x - y) dx dy, with periodic differences on
// the grid. With F phi = int e^{-i xi x} phi and f_eps carrying its 1/(2 pi), the
// 2 pi is what makes this equal the Fourier form.
inline double inner_product_convolution(const Field& phi, const Field& psi,
                                        const MollifiedSpace& ms, const SpaceGrid& g,
                                        const HParams& p) {
  check_shape(phi, g, "inner_product_convolution");
  check_shape(psi, g, "inner_product_convolution");
  const std::size_t n = g.n_points;
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (phi[j] == 0.0) continue;
    double row = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      std::size_t d = (j + n - l) % n;
      row += psi[l] * ms.f_eps[(d + n / 2) % n];
    }
    s += phi[j] * row;
  }
  return 2.0 * std::numbers::pi * p.c1 * g.dx * g.dx * s;
}

}  // namespace rshe
