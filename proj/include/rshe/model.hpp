#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "rshe/discretization.hpp"
#include "rshe/heat_kernel.hpp"
#include "rshe/rough_space.hpp"

namespace rshe {

// Precomputed per-mode quantities shared by the noise, skeleton and SHE code.
// Immutable once built, so one instance can serve every worker thread.
struct ModelContext {
  SpaceTimeGrid grid;
  HParams params;
  RoughSpace space;                 // H on the grid lattice (eps = 0)
  std::vector<double> heat_step;    // exp(-xi^2 dt)
  std::vector<double> phi2;         // int_0^dt exp(-2 xi^2 s) ds
  std::vector<double> raw_amp;      // sqrt(M_m dt): unfiltered increment
  std::vector<double> filtered_amp; // sqrt(M_m phi2_m): int S(t_{k+1}-s) dW(s)

  ModelContext(const SpaceTimeGrid& g, const HParams& p)
      : grid(g), params(p), space(g.space, p) {
    const std::size_t nm = g.space.n_modes();
    const double dt = g.time.dt;
    heat_step = heat_multiplier(g.space, dt);
    phi2.resize(nm);
    raw_amp.resize(nm);
    filtered_amp.resize(nm);
    const auto& mass = space.masses();
    for (std::size_t m = 0; m < nm; ++m) {
      double xi2 = g.space.frequency(m) * g.space.frequency(m);
      phi2[m] = xi2 == 0.0 ? dt : -std::expm1(-2.0 * xi2 * dt) / (2.0 * xi2);
      raw_amp[m] = std::sqrt(mass[m] * dt);
      filtered_amp[m] = std::sqrt(mass[m] * phi2[m]);
    }
  }

  const SpaceGrid& space_grid() const { return grid.space; }
  const TimeGrid& time_grid() const { return grid.time; }
  const RealFft& fft() const { return space.fft(); }
  std::size_t n_points() const { return grid.space.n_points; }
  std::size_t n_modes() const { return grid.space.n_modes(); }
  std::size_t n_steps() const { return grid.time.n_steps; }
};

inline std::shared_ptr<const ModelContext> make_context(const SpaceTimeGrid& g, double H) {
  return std::make_shared<const ModelContext>(g, make_hparams(H));
}

// Variance of the linear equation's solution at a point at time T on this
// lattice: sum over modes of M_m (1 - exp(-2 xi^2 T)) / (2 xi^2).
inline double discrete_linear_variance(const ModelContext& ctx, double T) {
  const auto& mass = ctx.space.masses();
  const std::size_t n = ctx.n_points();
  double v = 0.0;
  for (std::size_t m = 0; m < mass.size(); ++m) {
    double xi2 = ctx.space_grid().frequency(m) * ctx.space_grid().frequency(m);
    double f = xi2 == 0.0 ? T : -std::expm1(-2.0 * xi2 * T) / (2.0 * xi2);
    v += mode_multiplicity(m, n) * mass[m] * f;
  }
  return v;
}

// Same quantity in the continuum: c1 Gamma(1-H) 2^{H-1} T^H / H.
inline double linear_variance(double H, double T) {
  return hurst_c1(H) * std::tgamma(1.0 - H) * std::pow(2.0, H - 1.0) * std::pow(T, H) / H;
}

}  // namespace rshe
