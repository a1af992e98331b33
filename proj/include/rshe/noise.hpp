#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <random>
#include <vector>

#include "rshe/errors.hpp"
#include "rshe/format.hpp"
#include "rshe/model.hpp"

namespace rshe {

// Independent stream per (seed, lane, step, tag). Lanes index trajectories,
// so any path can be regenerated without replaying the others.
inline std::mt19937_64 keyed_engine(std::uint64_t seed, std::uint64_t lane, std::uint64_t step,
                                    std::uint32_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(lane), static_cast<std::uint32_t>(lane >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), tag};
  return std::mt19937_64(seq);
}

// Standard Gaussian mode coefficients for one step: real N(0,1) at the zero and
// Nyquist modes, complex with E|Z|^2 = 1 elsewhere.
inline void draw_standard_modes(std::uint64_t seed, std::uint64_t lane, std::uint64_t step,
                                Spectrum& z) {
  auto eng = keyed_engine(seed, lane, step);
  std::normal_distribution<double> normal;
  const std::size_t last = z.size() - 1;
  const double s = std::numbers::sqrt2 / 2.0;
  z[0] = {normal(eng), 0.0};
  for (std::size_t m = 1; m < last; ++m) {
    double re = normal(eng);
    double im = normal(eng);
    z[m] = {s * re, s * im};
  }
  z[last] = {normal(eng), 0.0};
}

inline Spectrum draw_standard_modes(std::uint64_t seed, std::uint64_t lane, std::uint64_t step,
                                    std::size_t n_modes) {
  Spectrum z(n_modes);
  draw_standard_modes(seed, lane, step, z);
  return z;
}

enum class IncrementKind {
  raw,       // W(t_{k+1}) - W(t_k), per-mode variance M_m dt
  filtered,  // int_{t_k}^{t_{k+1}} S(t_{k+1}-s) dW(s), per-mode variance M_m phi2_m
};

// Grid samples of the noise increment of step k on trajectory `lane`.
inline Field sample_increment(std::size_t step, const ModelContext& ctx, std::uint64_t seed,
                              std::uint64_t lane = 0, IncrementKind kind = IncrementKind::raw) {
  if (step >= ctx.n_steps()) throw DomainError("sample_increment: step index out of range");
  Spectrum z = draw_standard_modes(seed, lane, step, ctx.n_modes());
  const auto& amp = kind == IncrementKind::raw ? ctx.raw_amp : ctx.filtered_amp;
  for (std::size_t m = 0; m < z.size(); ++m) z[m] *= amp[m];
  return ctx.fft().backward(z);
}

struct CovarianceEstimate {
  double x = 0.0;
  double y = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  double expected = 0.0;  // fBm-in-space covariance t * (|x|^2H + |y|^2H - |x-y|^2H) / 2
  double z_score() const { return (estimate - expected) / stderr_; }
};

// Empirical Cov(W(t,x), W(t,y)) for several probe pairs from shared samples.
// W(t, .) is the spatial antiderivative of the increments summed up to t,
// anchored at W(t, 0) = 0, evaluated from the mode coefficients directly.
inline std::vector<CovarianceEstimate> empirical_covariances(
    const std::vector<std::pair<double, double>>& probes, double t, std::size_t n_samples,
    const ModelContext& ctx, std::uint64_t seed) {
  const SpaceGrid& g = ctx.space_grid();
  const double L = g.half_width;
  for (auto [x, y] : probes)
    if (std::abs(x) > L || std::abs(y) > L)
      throw DomainError("empirical_covariance: probe outside [-L, L]");
  if (n_samples < 2) throw DomainError("empirical_covariance: need at least 2 samples");
  const std::size_t steps = static_cast<std::size_t>(std::floor(t / ctx.grid.time.dt + 1e-9));
  if (steps < 1 || steps > ctx.n_steps())
    throw DomainError("empirical_covariance: t must be a positive grid time");
  const double t_eff = static_cast<double>(steps) * ctx.grid.time.dt;

  std::vector<double> points;
  auto index_of = [&](double v) {
    for (std::size_t i = 0; i < points.size(); ++i)
      if (points[i] == v) return i;
    points.push_back(v);
    return points.size() - 1;
  };
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (auto [x, y] : probes) {
    std::size_t ix = index_of(x);
    pairs.emplace_back(ix, index_of(y));
  }

  // Antiderivative basis a_m(x) = amp_m * e^{i xi L} (e^{i xi x} - 1) / (i xi): the
  // field is Re-synthesised as sum_m mult_m Re(c_m a_m(x)).
  const std::size_t nm = ctx.n_modes(), n = ctx.n_points(), P = points.size();
  std::vector<std::complex<double>> basis(nm * P);
  for (std::size_t m = 0; m < nm; ++m) {
    double xi = g.frequency(m);
    for (std::size_t p = 0; p < P; ++p) {
      double x = points[p];
      std::complex<double> a;
      if (m == 0) {
        a = x;
      } else if (m == nm - 1) {
        a = (std::sin(xi * (x + L)) - std::sin(xi * L)) / xi;
      } else {
        a = std::exp(std::complex<double>(0.0, xi * L)) *
            (std::exp(std::complex<double>(0.0, xi * x)) - 1.0) / std::complex<double>(0.0, xi);
      }
      basis[m * P + p] = ctx.raw_amp[m] * mode_multiplicity(m, n) * a;
    }
  }

  std::vector<double> sum_prod(pairs.size(), 0.0), sum_prod2(pairs.size(), 0.0);
  std::vector<double> sum_pt(P, 0.0);
  Spectrum z(nm);
  std::vector<double> w(P);
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
      draw_standard_modes(seed, s, k, z);
      for (std::size_t m = 0; m < nm; ++m) {
        const std::complex<double> zm = z[m];
        const std::complex<double>* b = &basis[m * P];
        for (std::size_t p = 0; p < P; ++p)
          w[p] += zm.real() * b[p].real() - zm.imag() * b[p].imag();
      }
    }
    for (std::size_t p = 0; p < P; ++p) sum_pt[p] += w[p];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      double prod = w[pairs[i].first] * w[pairs[i].second];
      sum_prod[i] += prod;
      sum_prod2[i] += prod * prod;
    }
  }
  const double ns = static_cast<double>(n_samples);
  std::vector<CovarianceEstimate> out;
  const double H = ctx.params.H;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double x = points[pairs[i].first], y = points[pairs[i].second];
    double mx = sum_pt[pairs[i].first] / ns, my = sum_pt[pairs[i].second] / ns;
    double mprod = sum_prod[i] / ns;
    double cov = (mprod - mx * my) * ns / (ns - 1.0);
    double var_prod = (sum_prod2[i] / ns - mprod * mprod) * ns / (ns - 1.0);
    double expected = 0.5 * t_eff *
                      (std::pow(std::abs(x), 2 * H) + std::pow(std::abs(y), 2 * H) -
                       std::pow(std::abs(x - y), 2 * H));
    out.push_back({x, y, cov, std::sqrt(var_prod / ns), expected});
  }
  return out;
}

inline CovarianceEstimate empirical_covariance(double t, double x, double y, std::size_t n_samples,
                                               const ModelContext& ctx, std::uint64_t seed) {
  return empirical_covariances({{x, y}}, t, n_samples, ctx, seed).front();
}

// CSV dump of raw increments: one row per (step, grid index).
inline void dump_increments(std::ostream& os, const ModelContext& ctx, std::uint64_t seed,
                            std::uint64_t lane) {
  os << "step,index,x,value\n";
  for (std::size_t k = 0; k < ctx.n_steps(); ++k) {
    Field f = sample_increment(k, ctx, seed, lane);
    for (std::size_t j = 0; j < f.size(); ++j) {
      os << k << ',' << j << ',';
      os << format_double(ctx.space_grid().x(j)) << ',' << format_double(f[j]) << '\n';
    }
  }
}

}  // namespace rshe
