#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rshe/coefficients.hpp"
#include "rshe/errors.hpp"
#include "rshe/model.hpp"
#include "rshe/norms.hpp"
#include "rshe/rate_function.hpp"
#include "rshe/she_solver.hpp"
#include "rshe/skeleton.hpp"

namespace rshe {

struct WilsonInterval {
  double lo = 0.0, hi = 1.0;
};

inline WilsonInterval wilson_interval(std::size_t hits, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {};
  const double nn = static_cast<double>(n), p = static_cast<double>(hits) / nn;
  const double denom = 1.0 + z * z / nn;
  const double mid = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, mid - half), std::min(1.0, mid + half)};
}

struct MannKendall {
  double s = 0.0;
  double variance = 0.0;
  double z = 0.0;
  double p_value = 1.0;  // one-sided, alternative: decreasing trend
  bool decreasing = false;
};

// One-sided Mann-Kendall test for a downward trend, with the tie correction.
inline MannKendall mann_kendall_decreasing(const std::vector<double>& x, double alpha = 0.05) {
  MannKendall r;
  const std::size_t n = x.size();
  if (n < 3) return r;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) r.s += (x[j] > x[i]) - (x[j] < x[i]);
  auto term = [](double t) { return t * (t - 1.0) * (2.0 * t + 5.0); };
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    ties += term(static_cast<double>(j - i));
    i = j;
  }
  r.variance = (term(static_cast<double>(n)) - ties) / 18.0;
  if (r.variance <= 0.0) return r;
  double sc = r.s > 0 ? r.s - 1.0 : (r.s < 0 ? r.s + 1.0 : 0.0);
  r.z = sc / std::sqrt(r.variance);
  r.p_value = 0.5 * std::erfc(-r.z / std::sqrt(2.0));
  r.decreasing = r.p_value < alpha;
  return r;
}

// P(N(0, eps V) >= a).
inline double gaussian_tail_oracle(double a, double eps, double variance) {
  return 0.5 * std::erfc(a / std::sqrt(2.0 * eps * variance));
}

struct ProbabilityEstimate {
  double eps = 0.0;
  std::string method;  // "plain" or "importance"
  std::size_t n_paths = 0;
  std::size_t hits = 0;
  double p_hat = 0.0;
  double stderr_ = 0.0;
  double ess = 0.0;  // effective sample size of the weighted hits
  std::string warning;
};

namespace detail {
inline std::uint64_t rung_lane(std::size_t rung) { return static_cast<std::uint64_t>(rung) << 32; }

inline void finish_estimate(ProbabilityEstimate& e, const std::vector<double>& contrib) {
  const double n = static_cast<double>(contrib.size());
  double s = 0.0, s2 = 0.0;
  for (double c : contrib) {
    s += c;
    s2 += c * c;
    if (c > 0.0) ++e.hits;
  }
  e.p_hat = s / n;
  double var = n > 1.0 ? std::max(0.0, (s2 - s * s / n) / (n - 1.0)) : 0.0;
  e.stderr_ = std::sqrt(var / n);
  e.ess = s2 > 0.0 ? s * s / s2 : 0.0;
}
}  // namespace detail

inline ProbabilityEstimate plain_probability(const RateProblem& problem, const SigmaSpec& sigma,
                                             const ModelContext& ctx, double eps, std::size_t n_paths,
                                             std::uint64_t seed, std::size_t workers = 1,
                                             std::uint64_t first_lane = 0) {
  SimulationOptions so;
  so.eps = eps;
  so.n_paths = n_paths;
  so.seed = seed;
  so.first_lane = first_lane;
  so.workers = workers;
  std::vector<double> contrib(n_paths, 0.0);
  solve_stochastic(sigma, ctx, so, [&](std::size_t i, const Path& p, double) {
    double v = problem.observable.evaluate(p.back(), ctx.space_grid());
    contrib[i] = problem.violation(v) <= 0.0 ? 1.0 : 0.0;
  });
  ProbabilityEstimate e;
  e.eps = eps;
  e.method = "plain";
  e.n_paths = n_paths;
  detail::finish_estimate(e, contrib);
  if (e.hits == 0) e.warning = "needs importance sampling";
  return e;
}

// Simulates under the shifted noise W + eps^{-1/2} int g and reweights each hit
// by the exact likelihood ratio of the grid model.
inline ProbabilityEstimate importance_sampled_probability(
    const RateProblem& problem, const SigmaSpec& sigma, const ModelContext& ctx, double eps,
    const ControlPath& g, std::size_t n_paths, std::uint64_t seed, std::size_t workers = 1,
    std::uint64_t first_lane = 0) {
  SimulationOptions so;
  so.eps = eps;
  so.n_paths = n_paths;
  so.seed = seed;
  so.first_lane = first_lane;
  so.workers = workers;
  std::vector<double> contrib(n_paths, 0.0);
  solve_controlled(g, sigma, ctx, so, [&](std::size_t i, const Path& p, double logw) {
    double v = problem.observable.evaluate(p.back(), ctx.space_grid());
    contrib[i] = problem.violation(v) <= 0.0 ? std::exp(logw) : 0.0;
  });
  ProbabilityEstimate e;
  e.eps = eps;
  e.method = "importance";
  e.n_paths = n_paths;
  detail::finish_estimate(e, contrib);
  if (e.ess < 10.0)
    e.warning = "weight degeneracy: effective sample size " + std::to_string(e.ess);
  return e;
}

enum class ScanMethod { automatic, plain, importance };

struct LdpScanOptions {
  ScanMethod method = ScanMethod::automatic;
  std::optional<ControlPath> control;  // shift for importance sampling
  std::optional<double> rate;          // used to predict plain-MC hit counts
  std::optional<double> oracle_rate;
  std::optional<double> oracle_variance;  // Gaussian-tail oracle V for sigma = 1
  std::optional<double> oracle_excursion;
  std::size_t workers = 1;
  std::size_t min_paths = 1000;
};

struct LdpScanRow {
  ProbabilityEstimate estimate;
  double log_p = 0.0;
  double log_p_stderr = 0.0;
  std::optional<double> oracle_p;
  std::optional<double> z_vs_oracle;
};

struct LdpScanResult {
  std::vector<LdpScanRow> rows;
  double fitted_slope = 0.0;  // of log P against 1/eps; estimates -inf I
  double fitted_intercept = 0.0;
  std::size_t fitted_rungs = 0;
  std::optional<double> oracle_rate;
  std::vector<std::string> warnings;
};

inline LdpScanResult ldp_scan(const RateProblem& problem, const SigmaSpec& sigma,
                              const ModelContext& ctx, const std::vector<double>& ladder,
                              std::size_t n_paths, std::uint64_t seed, const LdpScanOptions& opt = {}) {
  if (ladder.empty()) throw DomainError("ldp_scan: empty eps ladder");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!(ladder[i] > 0.0)) throw DomainError("ldp_scan: ladder entries must be positive");
    if (i > 0 && !(ladder[i] < ladder[i - 1])) throw DomainError("ldp_scan: ladder must be decreasing");
  }
  if (n_paths < opt.min_paths)
    throw DomainError("ldp_scan: needs at least " + std::to_string(opt.min_paths) + " paths per rung");
  if (opt.method == ScanMethod::importance && !opt.control)
    throw DomainError("ldp_scan: importance sampling needs a control");

  LdpScanResult out;
  out.oracle_rate = opt.oracle_rate;
  std::vector<double> xs, ys;
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    const double eps = ladder[r];
    bool use_is = opt.method == ScanMethod::importance;
    if (opt.method == ScanMethod::automatic && opt.control && opt.rate)
      use_is = static_cast<double>(n_paths) * std::exp(-*opt.rate / eps) < 5.0;
    LdpScanRow row;
    row.estimate = use_is ? importance_sampled_probability(problem, sigma, ctx, eps, *opt.control,
                                                            n_paths, seed, opt.workers,
                                                            detail::rung_lane(r))
                          : plain_probability(problem, sigma, ctx, eps, n_paths, seed, opt.workers,
                                              detail::rung_lane(r));
    const ProbabilityEstimate& e = row.estimate;
    if (e.p_hat > 0.0) {
      row.log_p = std::log(e.p_hat);
      row.log_p_stderr = e.stderr_ / e.p_hat;
      xs.push_back(1.0 / eps);
      ys.push_back(row.log_p);
    } else {
      row.log_p = -std::numeric_limits<double>::infinity();
      out.warnings.push_back("eps=" + std::to_string(eps) + ": no hits, needs importance sampling");
    }
    if (!e.warning.empty() && e.p_hat > 0.0)
      out.warnings.push_back("eps=" + std::to_string(eps) + ": " + e.warning);
    if (opt.oracle_variance && opt.oracle_excursion) {
      row.oracle_p = gaussian_tail_oracle(*opt.oracle_excursion, eps, *opt.oracle_variance);
      if (e.stderr_ > 0.0) row.z_vs_oracle = (e.p_hat - *row.oracle_p) / e.stderr_;
    }
    out.rows.push_back(std::move(row));
  }
  out.fitted_rungs = xs.size();
  if (xs.size() >= 2) {
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i] / n;
      my += ys[i] / n;
    }
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
    }
    out.fitted_slope = sxy / sxx;
    out.fitted_intercept = my - out.fitted_slope * mx;
  } else {
    out.warnings.push_back("fewer than two rungs with hits; no slope fitted");
  }
  return out;
}

struct ConditionBRow {
  double eps = 0.0;
  std::size_t n_paths = 0;
  std::size_t exceedances = 0;
  double frequency = 0.0;
  WilsonInterval interval;
  double mean_distance = 0.0;
};

struct ConditionBReport {
  double delta = 0.0;
  std::vector<ConditionBRow> rows;
  MannKendall trend;
  bool non_increasing_within_intervals = true;
  std::string warning;
};

// Frequency of d_C(u~^eps, u-bar^eps) > delta per rung, where u~ is driven by
// the shifted noise and u-bar solves the skeleton equation for the same control.
// `family` holds one control per rung, or a single control used on every rung.
inline ConditionBReport condition_b_experiment(const std::vector<ControlPath>& family,
                                               const SigmaSpec& sigma, const ModelContext& ctx,
                                               const std::vector<double>& ladder,
                                               std::size_t n_paths, double delta, std::uint64_t seed,
                                               std::size_t workers = 1,
                                               std::optional<double> action_bound = std::nullopt) {
  if (ladder.empty()) throw DomainError("condition_b_experiment: empty eps ladder");
  if (family.size() != 1 && family.size() != ladder.size())
    throw ShapeError("condition_b_experiment: need one control or one per rung");
  if (!(delta > 0.0)) throw DomainError("condition_b_experiment: delta must be positive");
  if (action_bound)
    for (const auto& g : family)
      if (action(g, ctx) > *action_bound)
        throw DomainError("condition_b_experiment: control action exceeds the bound");
  ConditionBReport rep;
  rep.delta = delta;
  std::vector<double> freqs;
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    const ControlPath& g = family.size() == 1 ? family[0] : family[r];
    Path bar = solve_limit(g, sigma, ctx);
    std::vector<double> dist(n_paths, 0.0);
    SimulationOptions so;
    so.eps = ladder[r];
    so.n_paths = n_paths;
    so.seed = seed;
    so.first_lane = detail::rung_lane(r);
    so.workers = workers;
    solve_controlled(g, sigma, ctx, so, [&](std::size_t i, const Path& p, double) {
      dist[i] = path_metric_dC(p, bar, ctx.space_grid());
    });
    ConditionBRow row;
    row.eps = ladder[r];
    row.n_paths = n_paths;
    for (double d : dist) {
      row.exceedances += d > delta;
      row.mean_distance += d / static_cast<double>(n_paths);
    }
    row.frequency = static_cast<double>(row.exceedances) / static_cast<double>(n_paths);
    row.interval = wilson_interval(row.exceedances, n_paths);
    freqs.push_back(row.frequency);
    rep.rows.push_back(row);
  }
  for (std::size_t r = 1; r < rep.rows.size(); ++r)
    if (rep.rows[r].interval.lo > rep.rows[r - 1].interval.hi) rep.non_increasing_within_intervals = false;
  rep.trend = mann_kendall_decreasing(freqs);
  if (!rep.trend.decreasing && freqs.size() >= 3 && freqs.front() > 0.0)
    rep.warning = "Mann-Kendall test finds no significant decreasing trend";
  return rep;
}

}  // namespace rshe
