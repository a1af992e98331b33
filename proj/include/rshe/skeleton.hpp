#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rshe/coefficients.hpp"
#include "rshe/errors.hpp"
#include "rshe/model.hpp"
#include "rshe/norms.hpp"

namespace rshe {

// Control g in L^2([0,T]; H), one field per time step: on [t_k, t_{k+1}),
// g(s) = S(t_{k+1} - s) psi[k]. Heat-smoothed within the step, this family
// contains the optimal controls of the linear problem exactly.
struct ControlPath {
  std::vector<Field> psi;

  static ControlPath zero(const SpaceTimeGrid& g) {
    return {std::vector<Field>(g.time.n_steps, Field(g.space.n_points, 0.0))};
  }
  // psi[k](x) = f(t_{k+1}, x).
  static ControlPath from_function(const SpaceTimeGrid& g,
                                   const std::function<double(double, double)>& f) {
    ControlPath c = zero(g);
    for (std::size_t k = 0; k < g.time.n_steps; ++k)
      for (std::size_t j = 0; j < g.space.n_points; ++j)
        c.psi[k][j] = f(g.time.time(k + 1), g.space.x(j));
    return c;
  }

  std::size_t n_steps() const { return psi.size(); }

  ControlPath scaled(double a) const {
    ControlPath c = *this;
    for (auto& f : c.psi)
      for (double& v : f) v *= a;
    return c;
  }
  ControlPath plus(const ControlPath& o, double a = 1.0) const {
    if (o.psi.size() != psi.size()) throw ShapeError("ControlPath::plus: step count mismatch");
    ControlPath c = *this;
    for (std::size_t k = 0; k < psi.size(); ++k)
      for (std::size_t j = 0; j < psi[k].size(); ++j) c.psi[k][j] += a * o.psi[k][j];
    return c;
  }

  // Value of g at time s in [t_k, t_{k+1}].
  Field value_at(const ModelContext& ctx, double s) const {
    const TimeGrid& tg = ctx.time_grid();
    std::size_t k = std::min(static_cast<std::size_t>(std::floor(s / tg.dt)), tg.n_steps - 1);
    return semigroup_apply(std::max(0.0, tg.time(k + 1) - s), psi[k], ctx.space_grid());
  }
};

inline void check_control(const ControlPath& g, const ModelContext& ctx) {
  if (g.psi.size() != ctx.n_steps())
    throw ShapeError("control has " + std::to_string(g.psi.size()) + " steps, grid has " +
                     std::to_string(ctx.n_steps()));
  for (const Field& f : g.psi) {
    check_shape(f, ctx.space_grid(), "control");
    if (!all_finite(f)) throw DomainError("control contains non-finite values");
  }
}

// L_T(g) = (1/2) int_0^T ||g(s)||_H^2 ds; per step the time integral of the
// heat-smoothed field gives the factor phi2 on each mode.
inline double action(const ControlPath& g, const ModelContext& ctx) {
  check_control(g, ctx);
  double s = 0.0;
  for (const Field& f : g.psi) {
    Spectrum c = ctx.space.transform(f);
    s += ctx.space.inner_spectral(c, c, &ctx.phi2);
  }
  return 0.5 * s;
}

// int_{t_k}^{t_{k+1}} S(t_{k+1} - s) R_eps g(s) ds on the grid, where R_eps is the
// Riesz map of H_eps: the forcing contributed by step k.
inline Field control_forcing(const Field& psi_k, const ModelContext& ctx, double eps) {
  Spectrum c = ctx.space.transform(psi_k);
  const SpaceGrid& sg = ctx.space_grid();
  const auto& mass = ctx.space.masses();
  for (std::size_t m = 0; m < c.size(); ++m) {
    double xi = sg.frequency(m);
    double damp = eps > 0.0 ? std::exp(-eps * xi * xi) : 1.0;
    c[m] *= sg.dx * mass[m] * ctx.phi2[m] * damp;
  }
  return ctx.fft().backward(c);
}

inline std::vector<Field> control_forcings(const ControlPath& g, const ModelContext& ctx,
                                           double eps) {
  std::vector<Field> d(g.psi.size());
  for (std::size_t k = 0; k < g.psi.size(); ++k) d[k] = control_forcing(g.psi[k], ctx, eps);
  return d;
}

// One step of the heat flow on the grid: exp(dt Laplacian) applied spectrally.
class HeatStepper {
public:
  explicit HeatStepper(const ModelContext& ctx) : ctx_(ctx), spec_(ctx.n_modes()) {}
  void apply(const Field& in, Field& out) {
    ctx_.fft().forward(in.data(), spec_.data());
    const double inv_n = 1.0 / static_cast<double>(ctx_.n_points());
    for (std::size_t m = 0; m < spec_.size(); ++m) spec_[m] *= ctx_.heat_step[m] * inv_n;
    out.resize(in.size());
    ctx_.fft().backward(spec_.data(), out.data());
  }

private:
  const ModelContext& ctx_;
  Spectrum spec_;
};

struct PicardOptions {
  double tol = 1e-8;
  std::size_t max_iter = 50;
};

struct SkeletonSolution {
  Path u;
  double eps = 0.0;
  std::size_t iterations = 0;
  std::vector<double> residuals;  // sup_k ||u^{n+1}_k - u^n_k||_{L^2_lambda}
};

namespace detail {
inline double l2_lambda_diff(const Field& a, const Field& b, const std::vector<double>& w, double dx) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double d = a[j] - b[j];
    s += d * d * w[j];
  }
  return std::sqrt(s * dx);
}
}  // namespace detail

// Picard iteration for u(t) = 1 + int_0^t S(t-s)[sigma(s,.,u(s)) R_eps g(s)] ds,
// with sigma frozen at the left end of each step. Each sweep is
//   u^{n+1}_{k+1} = S(dt) u^{n+1}_k + sigma(t_k, ., u^n_k) * F_k,
// so the iteration reaches its fixed point after at most N + 1 sweeps.
inline SkeletonSolution picard_solve(const ControlPath& g, const SigmaSpec& sigma,
                                     const ModelContext& ctx, double eps,
                                     const PicardOptions& opt = {}) {
  check_control(g, ctx);
  if (eps < 0.0) throw DomainError("picard_solve: eps must be >= 0");
  const SpaceGrid& sg = ctx.space_grid();
  const std::size_t N = ctx.n_steps(), n = ctx.n_points();
  std::vector<Field> forcing = control_forcings(g, ctx, eps);
  std::vector<double> w = weight_on_grid(sg, ctx.params.H);
  HeatStepper heat(ctx);

  SkeletonSolution sol;
  sol.eps = eps;
  sol.u.assign(N + 1, Field(n, 1.0));
  Path next(N + 1, Field(n, 1.0));
  Field sig(n), smoothed(n);
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    double res = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      sigma.apply(ctx.time_grid().time(k), sg, sol.u[k], sig);
      heat.apply(next[k], smoothed);
      Field& out = next[k + 1];
      for (std::size_t j = 0; j < n; ++j) out[j] = smoothed[j] + sig[j] * forcing[k][j];
      if (!all_finite(out))
        throw NumericalError("picard_solve: non-finite iterate at step " + std::to_string(k + 1));
      res = std::max(res, detail::l2_lambda_diff(out, sol.u[k + 1], w, sg.dx));
    }
    std::swap(sol.u, next);
    sol.iterations = it;
    sol.residuals.push_back(res);
    if (res < opt.tol) return sol;
  }
  throw ConvergenceError("picard_solve: no convergence in " + std::to_string(opt.max_iter) +
                             " iterations (last residual " + std::to_string(sol.residuals.back()) + ")",
                         sol.residuals);
}

// The grid's Gamma^0: the skeleton solution with the unmollified Riesz map,
// computed by a single forward sweep (the Picard fixed point).
inline Path solve_limit(const ControlPath& g, const SigmaSpec& sigma, const ModelContext& ctx) {
  check_control(g, ctx);
  const SpaceGrid& sg = ctx.space_grid();
  const std::size_t N = ctx.n_steps(), n = ctx.n_points();
  std::vector<Field> forcing = control_forcings(g, ctx, 0.0);
  HeatStepper heat(ctx);
  Path u(N + 1, Field(n, 1.0));
  Field sig(n);
  for (std::size_t k = 0; k < N; ++k) {
    sigma.apply(ctx.time_grid().time(k), sg, u[k], sig);
    heat.apply(u[k], u[k + 1]);
    for (std::size_t j = 0; j < n; ++j) u[k + 1][j] += sig[j] * forcing[k][j];
    if (!all_finite(u[k + 1]))
      throw NumericalError("solve_limit: non-finite value at step " + std::to_string(k + 1));
  }
  return u;
}

inline const std::vector<double>& default_ladder() {
  static const std::vector<double> ladder{0.2, 0.1, 0.05, 0.025, 0.0125};
  return ladder;
}

struct LadderReport {
  std::vector<double> eps;
  std::vector<std::size_t> iterations;
  std::vector<double> final_residuals;
  std::vector<double> differences;  // d_C between successive rungs
  bool strictly_decreasing = true;
  std::string warning;
};

struct LadderSolution {
  SkeletonSolution final_rung;
  LadderReport report;
};

// Runs picard_solve on each rung of a decreasing mollification ladder.
inline LadderSolution solve(const ControlPath& g, const SigmaSpec& sigma, const ModelContext& ctx,
                            const std::vector<double>& ladder = default_ladder(),
                            const PicardOptions& opt = {}) {
  if (ladder.empty()) throw DomainError("solve: empty eps ladder");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!(ladder[i] > 0.0)) throw DomainError("solve: ladder entries must be positive");
    if (i > 0 && !(ladder[i] < ladder[i - 1]))
      throw DomainError("solve: ladder must be strictly decreasing");
  }
  LadderSolution out;
  SkeletonSolution prev;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    SkeletonSolution cur = picard_solve(g, sigma, ctx, ladder[i], opt);
    out.report.eps.push_back(ladder[i]);
    out.report.iterations.push_back(cur.iterations);
    out.report.final_residuals.push_back(cur.residuals.back());
    if (i > 0) out.report.differences.push_back(path_metric_dC(cur.u, prev.u, ctx.space_grid()));
    prev = std::move(cur);
  }
  const auto& d = out.report.differences;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (!(d[i] < d[i - 1])) out.report.strictly_decreasing = false;
  if (!out.report.strictly_decreasing)
    out.report.warning = "eps-ladder rung differences are not strictly decreasing";
  out.final_rung = std::move(prev);
  return out;
}

}  // namespace rshe
