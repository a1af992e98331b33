#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "rshe/errors.hpp"

namespace rshe {

// Samples of a function on the spatial grid, x_j = -L + j*dx.
using Field = std::vector<double>;
// Time-indexed slices u(t_0), ..., u(t_N).
using Path = std::vector<Field>;

struct SpaceGrid {
  double half_width = 0.0;  // L
  std::size_t n_points = 0;
  double dx = 0.0;

  double x(std::size_t j) const { return -half_width + static_cast<double>(j) * dx; }

  // Index of the grid point nearest to x, clamped to the grid.
  std::size_t nearest_index(double xv) const {
    double r = std::round((xv + half_width) / dx);
    if (r < 0.0) return 0;
    if (r > static_cast<double>(n_points - 1)) return n_points - 1;
    return static_cast<std::size_t>(r);
  }

  std::size_t n_modes() const { return n_points / 2 + 1; }

  // Angular frequency of non-negative mode m (m <= n/2); the lattice spacing is pi/L.
  double frequency(std::size_t m) const {
    return static_cast<double>(m) * std::numbers::pi / half_width;
  }

  // Full lattice in FFT order, Nyquist at +pi/dx.
  std::vector<double> frequencies() const {
    std::vector<double> xi(n_points);
    for (std::size_t k = 0; k < n_points; ++k) {
      long m = k <= n_points / 2 ? static_cast<long>(k)
                                  : static_cast<long>(k) - static_cast<long>(n_points);
      xi[k] = static_cast<double>(m) * std::numbers::pi / half_width;
    }
    return xi;
  }

  std::vector<double> points() const {
    std::vector<double> xs(n_points);
    for (std::size_t j = 0; j < n_points; ++j) xs[j] = x(j);
    return xs;
  }

  Field constant(double v) const { return Field(n_points, v); }
};

struct TimeGrid {
  double horizon = 0.0;
  std::size_t n_steps = 0;
  double dt = 0.0;

  double time(std::size_t k) const {
    return k == n_steps ? horizon : static_cast<double>(k) * dt;
  }
};

struct SpaceTimeGrid {
  SpaceGrid space;
  TimeGrid time;
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline SpaceGrid make_space_grid(double half_width, std::size_t n_points) {
  if (!(half_width > 0.0) || !std::isfinite(half_width))
    throw ConfigError("grid half-width L must be positive and finite");
  if (n_points < 8 || !is_power_of_two(n_points))
    throw ConfigError("n_points must be a power of two and at least 8 (got " +
                      std::to_string(n_points) + ")");
  return {half_width, n_points, 2.0 * half_width / static_cast<double>(n_points)};
}

inline TimeGrid make_time_grid(double horizon, std::size_t n_steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ConfigError("time horizon T must be positive and finite");
  if (n_steps < 1) throw ConfigError("n_steps must be at least 1");
  return {horizon, n_steps, horizon / static_cast<double>(n_steps)};
}

inline SpaceTimeGrid build_grid(double half_width, std::size_t n_points, double horizon,
                                std::size_t n_steps) {
  return {make_space_grid(half_width, n_points), make_time_grid(horizon, n_steps)};
}

inline void check_shape(const Field& f, const SpaceGrid& g, const char* what) {
  if (f.size() != g.n_points)
    throw ShapeError(std::string(what) + ": field has " + std::to_string(f.size()) +
                     " samples, grid has " + std::to_string(g.n_points));
}

inline bool all_finite(const Field& f) {
  for (double v : f)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace rshe
