#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rshe/discretization.hpp"
#include "rshe/errors.hpp"
#include "rshe/fft.hpp"

namespace rshe {

namespace detail {
inline void require_positive_time(double t, const char* what) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError(std::string(what) + ": requires t > 0");
}
inline void require_hurst(double H) {
  if (!(H > 0.25 && H < 0.5)) throw DomainError("Hurst parameter must lie in (1/4, 1/2)");
}
}  // namespace detail

// Kernel of exp(t * Laplacian): (4 pi t)^{-1/2} exp(-x^2 / 4t).
inline double eval_p(double t, double x) {
  detail::require_positive_time(t, "eval_p");
  return std::exp(-x * x / (4.0 * t)) / std::sqrt(4.0 * std::numbers::pi * t);
}

inline double eval_dp_dx(double t, double x) { return -x / (2.0 * t) * eval_p(t, x); }

inline double eval_D(double t, double x, double h) { return eval_p(t, x + h) - eval_p(t, x); }

inline double eval_Box(double t, double x, double y, double h) {
  return eval_p(t, x + y + h) - eval_p(t, x + y) - eval_p(t, x + h) + eval_p(t, x);
}

// exp(-xi^2 t) on the non-negative modes of g.
inline std::vector<double> heat_multiplier(const SpaceGrid& g, double t) {
  std::vector<double> m(g.n_modes());
  for (std::size_t k = 0; k < m.size(); ++k) {
    double xi = g.frequency(k);
    m[k] = std::exp(-xi * xi * t);
  }
  return m;
}

inline Field semigroup_apply(double t, const Field& f, const SpaceGrid& g) {
  if (t < 0.0 || !std::isfinite(t)) throw DomainError("semigroup_apply: requires t >= 0");
  check_shape(f, g, "semigroup_apply");
  if (t == 0.0) return f;
  auto fft = fft_for(g.n_points);
  Spectrum c = fft->forward(f);
  std::vector<double> mult = heat_multiplier(g, t);
  const double inv_n = 1.0 / static_cast<double>(g.n_points);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] *= mult[k] * inv_n;
  return fft->backward(c);
}

struct KernelQuadratureOptions {
  double rel_tol = 2e-3;
  std::size_t max_points = std::size_t{1} << 22;
  std::size_t max_level = 6;
};

struct KernelIntegralReport {
  double t = 0.0;
  double H = 0.0;
  double value = 0.0;
  double reference_exponent = 0.0;
  double fitted_exponent = 0.0;  // log2(value(2t) / value(t))
  std::size_t evaluations = 0;
  std::size_t refinements = 0;
};

namespace detail {

// Sum of f over the lattice k*hx restricted to the union of [c - r, c + r].
template <class F>
double lattice_sum(std::vector<double> centers, double r, double hx, F&& f, std::size_t& evals) {
  std::sort(centers.begin(), centers.end());
  double s = 0.0;
  long last = std::numeric_limits<long>::min();
  for (double c : centers) {
    long k0 = static_cast<long>(std::ceil((c - r) / hx));
    long k1 = static_cast<long>(std::floor((c + r) / hx));
    for (long k = std::max(k0, last + 1); k <= k1; ++k) {
      s += f(static_cast<double>(k) * hx);
      ++evals;
    }
    last = std::max(last, k1);
  }
  return s * hx;
}

struct HalfLineRule {
  double delta;
  double points_per_efold;
};

// int_0^inf f(h) h^beta dh with f(h) ~ near_coef h^2 on [0, delta], Simpson in
// log h on [delta, h_max], and f = f_inf beyond h_max.
template <class F>
double singular_half_line(F&& f, double near_coef, double h_max, double f_inf, double beta,
                          const HalfLineRule& rule, std::size_t& evals) {
  const double d = rule.delta;
  double total = near_coef * std::pow(d, beta + 3.0) / (beta + 3.0);
  if (h_max > d) {
    double s0 = std::log(d), s1 = std::log(h_max);
    std::size_t n = static_cast<std::size_t>(std::ceil((s1 - s0) * rule.points_per_efold));
    n = std::max<std::size_t>(2, n + (n % 2));
    double ds = (s1 - s0) / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      double s = s0 + static_cast<double>(i) * ds;
      double h = std::exp(s);
      double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * f(h) * std::pow(h, beta + 1.0);
      ++evals;
    }
    total += acc * ds / 3.0;
  }
  total += f_inf * std::pow(std::max(h_max, d), beta + 1.0) / -(beta + 1.0);
  return total;
}

inline HalfLineRule level_rule(double t, std::size_t level) {
  return {std::sqrt(t) * std::ldexp(1.0, -3 - static_cast<int>(level)),
          6.0 * std::ldexp(1.0, static_cast<int>(level))};
}

// int_x |D_t(x,h)|^2 dx by the lattice rule.
inline double d_energy(double t, double h, std::size_t& evals) {
  const double st = std::sqrt(t), hx = st / 1.5, r = 12.0 * st;
  return lattice_sum({0.0, -h}, r, hx,
                     [&](double x) {
                       double d = eval_D(t, x, h);
                       return d * d;
                     },
                     evals);
}

inline double identity_D_level(double t, double H, std::size_t level, std::size_t& evals) {
  const double beta = 2.0 * H - 2.0, st = std::sqrt(t), hx = st / 1.5, r = 12.0 * st;
  double near = lattice_sum({0.0}, r, hx, [&](double x) { double v = eval_dp_dx(t, x); return v * v; }, evals);
  double far = 2.0 * lattice_sum({0.0}, r, hx, [&](double x) { double v = eval_p(t, x); return v * v; }, evals);
  double half = singular_half_line([&](double h) { return d_energy(t, h, evals); }, near,
                                   12.0 * st, far, beta, level_rule(t, level), evals);
  return 2.0 * half;
}

inline double identity_box_level(double t, double H, std::size_t level, std::size_t& evals) {
  const double beta = 2.0 * H - 2.0, st = std::sqrt(t), hx = st / 1.5, r = 12.0 * st;
  const HalfLineRule rule = level_rule(t, level);
  auto box_energy = [&](double y, double h) {
    return lattice_sum({0.0, -y, -h, -y - h}, r, hx,
                       [&](double x) {
                         double b = eval_Box(t, x, y, h);
                         return b * b;
                       },
                       evals);
  };
  auto inner = [&](double h) {
    double near = lattice_sum({0.0, -h}, r, hx,
                              [&](double x) {
                                double v = eval_dp_dx(t, x + h) - eval_dp_dx(t, x);
                                return v * v;
                              },
                              evals);
    return singular_half_line([&](double y) { return box_energy(y, h); }, near, h + r,
                              2.0 * d_energy(t, h, evals), beta, rule, evals);
  };
  const double g_inf = identity_D_level(t, H, level, evals);
  const double g_delta = inner(rule.delta);
  const double h_max = 40.0 * st;
  double outer = singular_half_line(inner, g_delta / (rule.delta * rule.delta), h_max, g_inf,
                                    beta, rule, evals);
  // Next term of the large-h expansion: G(h) ~ G_inf + 2 h^beta.
  outer += 2.0 * std::pow(h_max, 2.0 * beta + 1.0) / -(2.0 * beta + 1.0);
  return 4.0 * outer;
}

template <class LevelFn>
KernelIntegralReport refine_identity(double t, double H, double exponent,
                                     const KernelQuadratureOptions& opt, LevelFn&& at_level) {
  require_positive_time(t, "kernel identity");
  require_hurst(H);
  KernelIntegralReport rep{t, H, 0.0, exponent, 0.0, 0, 0};
  double prev = std::numeric_limits<double>::quiet_NaN();
  std::size_t level = 0;
  for (;; ++level) {
    double v = at_level(t, level, rep.evaluations);
    rep.refinements = level;
    if (level > 0 && std::abs(v - prev) < opt.rel_tol * std::abs(v)) {
      rep.value = v;
      break;
    }
    if (rep.evaluations > opt.max_points || level >= opt.max_level)
      throw ConvergenceError("kernel identity quadrature did not converge: last estimates " +
                                 std::to_string(prev) + ", " + std::to_string(v),
                             {prev, v});
    prev = v;
  }
  double v2 = at_level(2.0 * t, level, rep.evaluations);
  rep.fitted_exponent = std::log2(v2 / rep.value);
  return rep;
}

}  // namespace detail

// int int |D_t(x,h)|^2 |h|^{2H-2} dh dx, which scales like t^{H-1}.
inline KernelIntegralReport kernel_identity_D(double t, double H,
                                              const KernelQuadratureOptions& opt = {}) {
  return detail::refine_identity(t, H, H - 1.0, opt,
                                 [H](double tt, std::size_t lv, std::size_t& ev) {
                                   return detail::identity_D_level(tt, H, lv, ev);
                                 });
}

// int int int |Box_t(x,y,h)|^2 |h|^{2H-2} |y|^{2H-2} dy dh dx, scaling like t^{2H-3/2}.
inline KernelIntegralReport kernel_identity_Box(double t, double H,
                                                const KernelQuadratureOptions& opt = {}) {
  return detail::refine_identity(t, H, 2.0 * H - 1.5, opt,
                                 [H](double tt, std::size_t lv, std::size_t& ev) {
                                   return detail::identity_box_level(tt, H, lv, ev);
                                 });
}

// Least-squares slope of log value against log t.
inline double fit_exponent(const std::vector<double>& ts, const std::vector<double>& values) {
  double n = static_cast<double>(ts.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double lx = std::log(ts[i]), ly = std::log(values[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Power weight lambda(x) = c_H (1 + x^2)^{H-1}, normalized on the real line.
inline double weight_constant(double H) {
  return std::tgamma(1.0 - H) / (std::sqrt(std::numbers::pi) * std::tgamma(0.5 - H));
}
inline double weight_lambda(double x, double H) {
  return weight_constant(H) * std::pow(1.0 + x * x, H - 1.0);
}

// Pointwise left sides of the kernel bounds.
namespace detail {
inline constexpr HalfLineRule kBoundRule{0.0, 16.0};

inline HalfLineRule bound_rule(double t) { return {std::sqrt(t) / 64.0, kBoundRule.points_per_efold}; }

// int_0^inf |D_t(x, s h)|^2 h^beta dh for direction s = +-1.
inline double d_half_line(double t, double x, double s, double beta, std::size_t& evals) {
  double dp = eval_dp_dx(t, x), px = eval_p(t, x);
  return singular_half_line(
      [&](double h) {
        double d = eval_D(t, x, s * h);
        return d * d;
      },
      dp * dp, std::abs(x) + 12.0 * std::sqrt(t), px * px, beta, bound_rule(t), evals);
}
}  // namespace detail

inline double d_line_integral(double t, double x, double H) {
  detail::require_positive_time(t, "d_line_integral");
  std::size_t ev = 0;
  const double beta = 2.0 * H - 2.0;
  return detail::d_half_line(t, x, 1.0, beta, ev) + detail::d_half_line(t, x, -1.0, beta, ev);
}

inline double box_plane_integral(double t, double x, double H) {
  detail::require_positive_time(t, "box_plane_integral");
  std::size_t ev = 0;
  const double beta = 2.0 * H - 2.0, st = std::sqrt(t);
  const detail::HalfLineRule rule = detail::bound_rule(t);
  double total = 0.0;
  for (double sy : {1.0, -1.0}) {
    for (double sh : {1.0, -1.0}) {
      auto inner = [&](double h) {
        double near = eval_dp_dx(t, x + sh * h) - eval_dp_dx(t, x);
        double dd = eval_D(t, x, sh * h);
        return detail::singular_half_line(
            [&](double y) {
              double b = eval_Box(t, x, sy * y, sh * h);
              return b * b;
            },
            near * near, std::abs(x) + h + 12.0 * st, dd * dd, beta, rule, ev);
      };
      double g_inf = detail::d_half_line(t, x, sy, beta, ev);
      double g_d = inner(rule.delta);
      total += detail::singular_half_line(inner, g_d / (rule.delta * rule.delta),
                                          std::abs(x) + 40.0 * st, g_inf, beta, rule, ev);
    }
  }
  return total;
}

namespace detail {
template <class F>
double weighted_over_x(F&& f, double z, double H) {
  boost::math::quadrature::gauss_kronrod<double, 31> gk;
  auto g = [&](double x) { return f(x) * weight_lambda(z - x, H); };
  const double inf = std::numeric_limits<double>::infinity();
  // Split at z and 0, where the two factors peak.
  double a = std::min(0.0, z), b = std::max(0.0, z);
  double s = gk.integrate(g, -inf, a, 10, 1e-7) + gk.integrate(g, b, inf, 10, 1e-7);
  if (b > a) s += gk.integrate(g, a, b, 10, 1e-7);
  return s;
}
}  // namespace detail

inline double d_weighted_integral(double t, double z, double H) {
  return detail::weighted_over_x([&](double x) { return d_line_integral(t, x, H); }, z, H);
}

inline double box_weighted_integral(double t, double z, double H) {
  return detail::weighted_over_x([&](double x) { return box_plane_integral(t, x, H); }, z, H);
}

struct BoundSample {
  std::string bound;
  double t = 0.0;
  double x = 0.0;  // x for pointwise bounds, z for weighted ones
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

struct KernelBoundReport {
  std::vector<BoundSample> samples;
  double max_ratio_d = 0.0;
  double max_ratio_box = 0.0;
  double max_ratio_d_weighted = 0.0;
  double max_ratio_box_weighted = 0.0;
};

// Right side min(t^a, |x|^{2H-2} t^b); at x = 0 the spatial branch is infinite.
inline double min_branch(double t_branch, double x, double H, double t_factor) {
  if (x == 0.0) return t_branch;
  return std::min(t_branch, std::pow(std::abs(x), 2.0 * H - 2.0) * t_factor);
}

inline KernelBoundReport kernel_bound_checks(const std::vector<double>& ts,
                                             const std::vector<double>& xs, double H,
                                             const std::vector<double>& zs = {},
                                             bool include_box_weighted = true) {
  detail::require_hurst(H);
  KernelBoundReport rep;
  auto add = [&](const std::string& name, double t, double x, double lhs, double rhs, double& mx) {
    if (!std::isfinite(lhs))
      throw NumericalError("kernel bound quadrature produced a non-finite value for " + name);
    double ratio = lhs / rhs;
    rep.samples.push_back({name, t, x, lhs, rhs, ratio});
    mx = std::max(mx, ratio);
  };
  for (double t : ts) {
    detail::require_positive_time(t, "kernel_bound_checks");
    for (double x : xs) {
      add("D_pointwise", t, x, d_line_integral(t, x, H),
          min_branch(std::pow(t, H - 1.5), x, H, 1.0 / std::sqrt(t)), rep.max_ratio_d);
      add("Box_pointwise", t, x, box_plane_integral(t, x, H),
          min_branch(std::pow(t, 2.0 * H - 2.0), x, H, std::pow(t, H - 1.0)), rep.max_ratio_box);
    }
    for (double z : zs) {
      add("D_weighted", t, z, d_weighted_integral(t, z, H),
          std::pow(t, H - 1.0) * weight_lambda(z, H), rep.max_ratio_d_weighted);
      if (include_box_weighted)
        add("Box_weighted", t, z, box_weighted_integral(t, z, H),
            std::pow(t, 2.0 * H - 1.5) * weight_lambda(z, H), rep.max_ratio_box_weighted);
    }
  }
  return rep;
}

// |p_{t+h}(x) - p_t(x)| / (h^g t^{-g} [p_{2(t+h)/g}(x) + p_{2t/g}(x)]).
inline double time_increment_ratio(double t, double h, double x, double gamma) {
  detail::require_positive_time(t, "time_increment_ratio");
  double lhs = std::abs(eval_p(t + h, x) - eval_p(t, x));
  double rhs = std::pow(h / t, gamma) * (eval_p(2.0 * (t + h) / gamma, x) + eval_p(2.0 * t / gamma, x));
  return lhs / rhs;
}

}  // namespace rshe
