#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rshe/coefficients.hpp"
#include "rshe/errors.hpp"
#include "rshe/model.hpp"
#include "rshe/noise.hpp"
#include "rshe/skeleton.hpp"

namespace rshe {

struct SimulationOptions {
  double eps = 0.1;
  std::size_t n_paths = 1;
  std::uint64_t seed = 0;
  std::uint64_t first_lane = 0;  // lane of path i is first_lane + i
  std::size_t workers = 1;
  bool keep_paths = false;
  double blowup_bound = 1e6;
};

struct TrajectoryBatch {
  double eps = 0.0;
  bool controlled = false;
  std::vector<std::uint64_t> lanes;
  std::vector<double> log_weights;  // log dP/dQ per path; zero without control
  std::vector<Path> paths;          // filled only with keep_paths
};

// Called once per finished trajectory, possibly from several threads; writes
// must go to per-index storage.
using PathObserver = std::function<void(std::size_t index, const Path& path, double log_weight)>;

namespace detail {

// Per-step shift of the standard mode coefficients induced by a control:
// theta_m = dx sqrt(M_m phi2_m) Psi_m / sqrt(eps).
inline std::vector<Spectrum> control_shifts(const ControlPath& g, const ModelContext& ctx,
                                            double eps) {
  std::vector<Spectrum> th(g.psi.size());
  const double scale = ctx.space_grid().dx / std::sqrt(eps);
  for (std::size_t k = 0; k < g.psi.size(); ++k) {
    th[k] = ctx.space.transform(g.psi[k]);
    for (std::size_t m = 0; m < th[k].size(); ++m) th[k][m] *= scale * ctx.filtered_amp[m];
  }
  return th;
}

class PathStepper {
public:
  PathStepper(const ModelContext& ctx, const SigmaSpec& sigma, double eps,
              const std::vector<Spectrum>* shifts)
      : ctx_(ctx), sigma_(sigma), sqrt_eps_(std::sqrt(eps)), shifts_(shifts), heat_(ctx),
        z_(ctx.n_modes()), c_(ctx.n_modes()), noise_(ctx.n_points()), sig_(ctx.n_points()) {}

  // Advances u_k to u_{k+1}; returns this step's contribution to log dP/dQ.
  double step(std::size_t k, const Field& u, Field& out, std::uint64_t seed, std::uint64_t lane) {
    draw_standard_modes(seed, lane, k, z_);
    double logw = 0.0;
    const std::size_t last = z_.size() - 1;
    for (std::size_t m = 0; m < z_.size(); ++m) {
      std::complex<double> zm = z_[m];
      if (shifts_) {
        const std::complex<double> th = (*shifts_)[k][m];
        if (m == 0 || m == last)
          logw -= zm.real() * th.real() + 0.5 * th.real() * th.real();
        else
          logw -= 2.0 * (zm.real() * th.real() + zm.imag() * th.imag()) + std::norm(th);
        zm += th;
      }
      c_[m] = sqrt_eps_ * ctx_.filtered_amp[m] * zm;
    }
    ctx_.fft().backward(c_.data(), noise_.data());
    sigma_.apply(ctx_.time_grid().time(k), ctx_.space_grid(), u, sig_);
    heat_.apply(u, out);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += sig_[j] * noise_[j];
    return logw;
  }

private:
  const ModelContext& ctx_;
  const SigmaSpec& sigma_;
  double sqrt_eps_;
  const std::vector<Spectrum>* shifts_;
  HeatStepper heat_;
  Spectrum z_, c_;
  Field noise_, sig_;
};

inline TrajectoryBatch run_batch(const SigmaSpec& sigma, const ModelContext& ctx,
                                 const SimulationOptions& opt, const ControlPath* control,
                                 const PathObserver& observer) {
  if (opt.n_paths == 0) throw DomainError("simulation needs n_paths >= 1");
  if (!(opt.eps > 0.0) || !std::isfinite(opt.eps)) throw DomainError("simulation needs eps > 0");
  std::optional<std::vector<Spectrum>> shifts;
  if (control) {
    check_control(*control, ctx);
    shifts = control_shifts(*control, ctx, opt.eps);
  }
  TrajectoryBatch batch;
  batch.eps = opt.eps;
  batch.controlled = control != nullptr;
  batch.lanes.resize(opt.n_paths);
  batch.log_weights.assign(opt.n_paths, 0.0);
  if (opt.keep_paths) batch.paths.resize(opt.n_paths);

  const std::size_t N = ctx.n_steps(), n = ctx.n_points();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    try {
      PathStepper stepper(ctx, sigma, opt.eps, shifts ? &*shifts : nullptr);
      Path path(N + 1, Field(n, 1.0));
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= opt.n_paths) break;
        {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (failure) break;
        }
        const std::uint64_t lane = opt.first_lane + i;
        std::fill(path[0].begin(), path[0].end(), 1.0);
        double logw = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
          logw += stepper.step(k, path[k], path[k + 1], opt.seed, lane);
          for (double v : path[k + 1])
            if (!(std::abs(v) <= opt.blowup_bound))
              throw BlowUpError("trajectory " + std::to_string(i) + " exceeded |u| <= " +
                                    std::to_string(opt.blowup_bound) + " at step " +
                                    std::to_string(k + 1),
                                k + 1);
        }
        batch.lanes[i] = lane;
        batch.log_weights[i] = logw;
        if (observer) observer(i, path, logw);
        if (opt.keep_paths) batch.paths[i] = path;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.workers, opt.n_paths));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return batch;
}

}  // namespace detail

// Exponential-integrator scheme for du = Laplacian u dt + sqrt(eps) sigma(u) W(dt, dx):
//   u_{k+1} = S(dt) u_k + sqrt(eps) sigma(t_k, ., u_k) * int_{t_k}^{t_{k+1}} S(t_{k+1}-s) dW(s),
// with the stochastic convolution drawn exactly mode by mode.
inline TrajectoryBatch solve_stochastic(const SigmaSpec& sigma, const ModelContext& ctx,
                                        const SimulationOptions& opt,
                                        const PathObserver& observer = {}) {
  return detail::run_batch(sigma, ctx, opt, nullptr, observer);
}

// Same scheme driven by W + eps^{-1/2} int g ds. log_weights hold
// log dP/dQ = -eps^{-1/2} int <g, dW> - (2 eps)^{-1} int ||g||_H^2 ds evaluated
// on the grid model, so E_Q[exp(log_weight) F] = E_P[F].
inline TrajectoryBatch solve_controlled(const ControlPath& g, const SigmaSpec& sigma,
                                        const ModelContext& ctx, const SimulationOptions& opt,
                                        const PathObserver& observer = {}) {
  return detail::run_batch(sigma, ctx, opt, &g, observer);
}

}  // namespace rshe
