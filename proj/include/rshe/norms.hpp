#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "rshe/discretization.hpp"
#include "rshe/errors.hpp"
#include "rshe/heat_kernel.hpp"
#include "rshe/lag_quadrature.hpp"

namespace rshe {

inline std::vector<double> weight_on_grid(const SpaceGrid& g, double H) {
  std::vector<double> w(g.n_points);
  for (std::size_t j = 0; j < g.n_points; ++j) w[j] = weight_lambda(g.x(j), H);
  return w;
}

struct WeightQuadrature {
  double grid_integral = 0.0;  // dx * sum_j lambda(x_j)
  double tail_mass = 0.0;      // int_{|x| > L} lambda
};

inline WeightQuadrature weight_quadrature(const SpaceGrid& g, double H) {
  double s = 0.0;
  for (double w : weight_on_grid(g, H)) s += w;
  boost::math::quadrature::exp_sinh<double> es;
  double tail = 2.0 * es.integrate([H](double x) { return weight_lambda(x, H); }, g.half_width,
                                   std::numeric_limits<double>::infinity());
  return {s * g.dx, tail};
}

namespace detail {
inline void require_p(double p) {
  if (!(p >= 2.0)) throw DomainError("weighted norms require p >= 2");
}

// (dx sum_j |d_j|^p w_j)^{2/p}, the squared L^p_lambda norm.
template <class DiffFn>
double lp_sq(DiffFn&& diff, const std::vector<double>& w, double p, double dx) {
  double s = 0.0;
  if (p == 2.0) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      double d = diff(j);
      s += d * d * w[j];
    }
    return s * dx;
  }
  for (std::size_t j = 0; j < w.size(); ++j) s += std::pow(std::abs(diff(j)), p) * w[j];
  return std::pow(s * dx, 2.0 / p);
}

// Value at index j + lag, with the field continued by its edge values.
inline double edge_extended(const Field& v, long idx) {
  if (idx < 0) return v.front();
  if (idx >= static_cast<long>(v.size())) return v.back();
  return v[static_cast<std::size_t>(idx)];
}
}  // namespace detail

inline double lp_lambda_norm(const Field& v, double p, const SpaceGrid& g, double H) {
  detail::require_p(p);
  check_shape(v, g, "lp_lambda_norm");
  std::vector<double> w = weight_on_grid(g, H);
  double s = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) s += std::pow(std::abs(v[j]), p) * w[j];
  return std::pow(s * g.dx, 1.0 / p);
}

// (int ||v - v(. + h)||^2_{L^p_lambda} |h|^{2H-2} dh)^{1/2}; shifts beyond the
// grid use the edge values of the slice.
inline double n_star_norm(const Field& v, double p, const SpaceGrid& g, double H) {
  detail::require_p(p);
  check_shape(v, g, "n_star_norm");
  std::vector<double> w = weight_on_grid(g, H);
  const long n = static_cast<long>(g.n_points);
  double total = 0.0;
  for (long sign : {1L, -1L}) {
    auto lag_value = [&](std::size_t lag) {
      long off = sign * static_cast<long>(lag);
      return detail::lp_sq(
          [&](std::size_t j) { return v[j] - detail::edge_extended(v, static_cast<long>(j) + off); },
          w, p, g.dx);
    };
    double g_inf = lag_value(static_cast<std::size_t>(n));
    total += integrate_lags(lag_value, static_cast<std::size_t>(n), g.dx, H, g_inf).value;
  }
  return std::sqrt(std::max(total, 0.0));
}

// (int |f(x+h) - f(x)|^2 |h|^{2H-2} dh)^{1/2} at the grid point nearest x.
inline double pointwise_n_norm(const Field& f, double x, const SpaceGrid& g, double H) {
  check_shape(f, g, "pointwise_n_norm");
  const long j = static_cast<long>(g.nearest_index(x));
  const long n = static_cast<long>(g.n_points);
  const double fx = f[static_cast<std::size_t>(j)];
  double total = 0.0;
  for (long sign : {1L, -1L}) {
    auto lag_value = [&](std::size_t lag) {
      double d = detail::edge_extended(f, j + sign * static_cast<long>(lag)) - fx;
      return d * d;
    };
    double g_inf = lag_value(static_cast<std::size_t>(n));
    total += integrate_lags(lag_value, static_cast<std::size_t>(n), g.dx, H, g_inf).value;
  }
  return std::sqrt(std::max(total, 0.0));
}

struct WeightedNormReport {
  double lp_lambda = 0.0;  // sup over evaluated times
  double n_star = 0.0;     // sup over evaluated times
  double z_norm = 0.0;     // lp_lambda + n_star
};

inline WeightedNormReport z_norm(const Path& u, double p, const SpaceGrid& g, double H) {
  WeightedNormReport r;
  for (const Field& slice : u) {
    r.lp_lambda = std::max(r.lp_lambda, lp_lambda_norm(slice, p, g, H));
    r.n_star = std::max(r.n_star, n_star_norm(slice, p, g, H));
  }
  r.z_norm = r.lp_lambda + r.n_star;
  return r;
}

// Monte Carlo layer: samples[i] is the slice of trajectory i at a fixed time.
struct MonteCarloNorm {
  double value = 0.0;
  double stderr_ = 0.0;  // delta-method standard error
};

inline MonteCarloNorm mc_lp_lambda_norm(const std::vector<Field>& samples, double p,
                                        const SpaceGrid& g, double H) {
  detail::require_p(p);
  if (samples.size() < 2) throw DomainError("mc_lp_lambda_norm: need at least 2 samples");
  std::vector<double> w = weight_on_grid(g, H);
  double sum = 0.0, sum2 = 0.0;
  for (const Field& v : samples) {
    check_shape(v, g, "mc_lp_lambda_norm");
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) s += std::pow(std::abs(v[j]), p) * w[j];
    s *= g.dx;
    sum += s;
    sum2 += s * s;
  }
  const double n = static_cast<double>(samples.size());
  double mean = sum / n;
  double var = std::max(0.0, (sum2 / n - mean * mean) * n / (n - 1.0));
  double value = std::pow(mean, 1.0 / p);
  double se = mean > 0.0 ? value / (p * mean) * std::sqrt(var / n) : 0.0;
  return {value, se};
}

inline double mc_n_star_norm(const std::vector<Field>& samples, double p, const SpaceGrid& g,
                             double H) {
  detail::require_p(p);
  if (samples.empty()) throw DomainError("mc_n_star_norm: no samples");
  std::vector<double> w = weight_on_grid(g, H);
  const long n = static_cast<long>(g.n_points);
  const double ns = static_cast<double>(samples.size());
  double total = 0.0;
  for (long sign : {1L, -1L}) {
    auto lag_value = [&](std::size_t lag) {
      long off = sign * static_cast<long>(lag);
      double s = 0.0;
      for (const Field& v : samples)
        for (std::size_t j = 0; j < v.size(); ++j)
          s += std::pow(std::abs(v[j] - detail::edge_extended(v, static_cast<long>(j) + off)), p) * w[j];
      return std::pow(s * g.dx / ns, 2.0 / p);
    };
    double g_inf = lag_value(static_cast<std::size_t>(n));
    total += integrate_lags(lag_value, static_cast<std::size_t>(n), g.dx, H, g_inf).value;
  }
  return std::sqrt(std::max(total, 0.0));
}

// sum_{n=1}^{ceil L} 2^{-n} min(1, max_{t, |x| <= n} |u - v|), grid points only.
inline double path_metric_dC(const Path& u, const Path& v, const SpaceGrid& g) {
  if (u.size() != v.size()) throw ShapeError("path_metric_dC: paths have different time grids");
  const int levels = static_cast<int>(std::ceil(g.half_width - 1e-12));
  std::vector<double> sup(static_cast<std::size_t>(levels) + 1, 0.0);
  for (std::size_t k = 0; k < u.size(); ++k) {
    check_shape(u[k], g, "path_metric_dC");
    check_shape(v[k], g, "path_metric_dC");
    for (std::size_t j = 0; j < g.n_points; ++j) {
      double ax = std::abs(g.x(j));
      int level = std::max(1, static_cast<int>(std::ceil(ax - 1e-12)));
      if (level > levels) continue;
      double d = std::abs(u[k][j] - v[k][j]);
      if (std::isnan(d)) d = std::numeric_limits<double>::infinity();
      sup[static_cast<std::size_t>(level)] = std::max(sup[static_cast<std::size_t>(level)], d);
    }
  }
  double total = 0.0, running = 0.0;
  for (int n = 1; n <= levels; ++n) {
    running = std::max(running, sup[static_cast<std::size_t>(n)]);
    total += std::ldexp(1.0, -n) * std::min(1.0, running);
  }
  return total;
}

// Largest |u(t,x) - u(s,y)| over grid pairs with |t-s| + |x-y| <= theta,
// times in [0, T] and |x|, |y| <= R.
inline double modulus_of_continuity(const Path& u, const SpaceTimeGrid& grid, double T, double R,
                                    double theta) {
  const SpaceGrid& g = grid.space;
  if (!(theta > 0.0)) throw DomainError("modulus_of_continuity: theta must be positive");
  if (R > g.half_width) throw DomainError("modulus_of_continuity: R exceeds the domain half-width");
  if (u.size() != grid.time.n_steps + 1) throw ShapeError("modulus_of_continuity: path length");
  const double dt = grid.time.dt, tol = 1e-12 * (1.0 + theta);
  std::size_t kmax = 0;
  while (kmax + 1 < u.size() && grid.time.time(kmax + 1) <= T + tol) ++kmax;
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < g.n_points; ++j)
    if (std::abs(g.x(j)) <= R + tol) idx.push_back(j);
  const long max_dk = static_cast<long>(std::floor(theta / dt + 1e-9));
  double m = 0.0;
  for (long dk = 0; dk <= max_dk; ++dk) {
    double rem = theta - static_cast<double>(dk) * dt;
    long max_dj = static_cast<long>(std::floor(rem / g.dx + 1e-9));
    for (std::size_t k = 0; k + static_cast<std::size_t>(dk) <= kmax; ++k) {
      const Field& a = u[k];
      const Field& b = u[k + static_cast<std::size_t>(dk)];
      for (std::size_t i = 0; i < idx.size(); ++i) {
        long j = static_cast<long>(idx[i]);
        for (long dj = -max_dj; dj <= max_dj; ++dj) {
          if (dk == 0 && dj <= 0) continue;
          long jj = j + dj;
          if (jj < static_cast<long>(idx.front()) || jj > static_cast<long>(idx.back())) continue;
          m = std::max(m, std::abs(a[static_cast<std::size_t>(j)] - b[static_cast<std::size_t>(jj)]));
        }
      }
    }
  }
  return m;
}

}  // namespace rshe
