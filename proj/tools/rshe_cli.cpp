// Command-line driver: parses a JSON run config, dispatches one subcommand,
// and writes CSV/JSON outputs plus manifest.json into the output directory.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fftw3.h>

#include "rshe/config.hpp"
#include "rshe/experiments.hpp"
#include "rshe/format.hpp"
#include "rshe/heat_kernel.hpp"
#include "rshe/noise.hpp"
#include "rshe/norms.hpp"
#include "rshe/rate_function.hpp"
#include "rshe/rough_space.hpp"
#include "rshe/she_solver.hpp"
#include "rshe/skeleton.hpp"

namespace fs = std::filesystem;
using namespace rshe;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunContext {
  RunConfig cfg;
  fs::path out;
  std::size_t workers = 1;
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
  Json summary = Json::object();

  detail::BlockReader experiment() const {
    return detail::BlockReader(cfg.experiment, "experiment", cfg.text, cfg.source);
  }
  SpaceTimeGrid grid() const {
    return build_grid(cfg.grid.L, cfg.grid.n_points, cfg.grid.T, cfg.grid.n_steps);
  }
};

class Csv {
public:
  Csv(RunContext& run, const std::string& name, std::initializer_list<const char*> header)
      : os_(run.out / name, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot write " + (run.out / name).string());
    run.outputs.push_back(name);
    bool first = true;
    for (const char* h : header) {
      os_ << (first ? "" : ",") << h;
      first = false;
    }
    os_ << '\n';
  }
  Csv& operator<<(double v) { return cell(format_double(v)); }
  Csv& operator<<(std::size_t v) { return cell(std::to_string(v)); }
  Csv& operator<<(const std::string& s) { return cell(s); }
  Csv& operator<<(const char* s) { return cell(s); }
  void end() {
    os_ << '\n';
    first_ = true;
  }

private:
  Csv& cell(const std::string& s) {
    if (!first_) os_ << ',';
    os_ << s;
    first_ = false;
    return *this;
  }
  std::ofstream os_;
  bool first_ = true;
};

void write_json(RunContext& run, const std::string& name, const Json& j) {
  std::ofstream os(run.out / name, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + (run.out / name).string());
  os << j.dump(2) << '\n';
  run.outputs.push_back(name);
}

// Optional<double> as JSON number or null.
Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

ControlPath read_control(const RunContext& run, const SpaceTimeGrid& grid, const ModelContext& ctx) {
  auto ex = run.experiment();
  if (!ex.has("control")) return ControlPath::zero(grid);
  auto c = ex.block("control");
  std::string kind = c.string("kind", "zero");
  if (kind == "zero") {
    c.only({"kind"});
    return ControlPath::zero(grid);
  }
  if (kind == "heat_kernel") {
    // g(t, x) = scale * p_width(x - center)
    c.only({"kind", "scale", "width", "center"});
    double scale = c.number("scale", 1.0), width = c.number("width", 1.0), center = c.number("center", 0.0);
    if (!(width > 0.0)) c.fail("width", "must be positive");
    return ControlPath::from_function(grid, [=](double, double x) { return scale * eval_p(width, x - center); });
  }
  if (kind == "expression") {
    c.only({"kind", "expression"});
    std::string text = c.string("expression", "");
    std::shared_ptr<expr::Expression> e;
    try {
      e = std::make_shared<expr::Expression>(text);
    } catch (const CoefficientError& err) {
      c.fail("expression", err.what());
    }
    if (e->uses_u()) c.fail("expression", "a control may depend on t and x only");
    ControlPath g = ControlPath::from_function(grid, [&](double t, double x) { return (*e)(t, x, 0.0); });
    check_control(g, ctx);
    return g;
  }
  c.fail("kind", "expected one of zero, heat_kernel, expression");
}

RateProblem read_problem(const RunContext& run, const SpaceGrid& sg) {
  auto p = run.experiment().block("problem");
  p.only({"observable", "x0", "width", "level", "sense"});
  std::string obs = p.string("observable", "point");
  double x0 = p.number("x0", 0.0);
  RateProblem pb;
  if (obs == "point") {
    try {
      pb.observable = Observable::point(sg, x0);
    } catch (const DomainError& e) {
      p.fail("x0", e.what());
    }
  } else if (obs == "window") {
    double w = p.number("width", 0.5);
    if (!(w > 0.0)) p.fail("width", "must be positive");
    pb.observable = Observable::window(sg, x0, w);
  } else {
    p.fail("observable", "expected point or window");
  }
  if (!p.has("level")) p.fail("level", "required");
  pb.level = p.number("level", 1.0);
  std::string sense = p.string("sense", "at_least");
  if (sense == "at_least") pb.sense = Sense::at_least;
  else if (sense == "at_most") pb.sense = Sense::at_most;
  else p.fail("sense", "expected at_least or at_most");
  return pb;
}

RateOptions read_rate_options(const RunContext& run, const RateProblem& pb) {
  auto ex = run.experiment();
  RateOptions o;
  o.feasibility_rel_tol = run.cfg.solver.feasibility_rel_tol;
  o.seed = run.cfg.seed;
  o.starts = ex.count("starts", o.starts);
  if (ex.has("budget")) o.budget = ex.number("budget", 0.0);
  o.basis.centers = {pb.observable.center()};
  if (ex.has("basis")) {
    auto b = ex.block("basis");
    b.only({"time_bins", "centers"});
    o.basis.time_bins = b.count("time_bins", o.basis.time_bins);
    o.basis.centers = b.numbers("centers", o.basis.centers);
    if (o.basis.time_bins < 1) b.fail("time_bins", "must be >= 1");
    if (o.basis.centers.empty()) b.fail("centers", "must not be empty");
  }
  return o;
}

// Constant sigma makes the equation Gaussian; returns c when that holds.
std::optional<double> gaussian_amplitude(const RunConfig& cfg) {
  const auto& s = cfg.model.sigma;
  if (s.kind == "constant") return s.c;
  if (s.kind == "affine" && s.a == 0.0) return s.b;
  return std::nullopt;
}

std::size_t paths_option(const detail::BlockReader& ex, const char* key, std::size_t def) {
  std::size_t n = ex.count(key, def);
  if (n < 1) ex.fail(key, "must be >= 1");
  return n;
}

// ---------------------------------------------------------------- subcommands

void run_verify_kernels(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"H_values", "t", "rel_tol", "bound_times", "bound_points", "weighted_points", "box_weighted"});
  std::vector<double> Hs = ex.numbers("H_values", {0.30, 0.35, 0.45});
  double t = ex.number("t", 1.0);
  KernelQuadratureOptions qo;
  qo.rel_tol = ex.number("rel_tol", qo.rel_tol);
  std::vector<double> bt = ex.numbers("bound_times", {0.05, 0.2, 1.0});
  std::vector<double> bx = ex.numbers("bound_points", {0.0, 0.25, 1.0, 3.0});
  std::vector<double> bz = ex.numbers("weighted_points", {0.0, 2.0, 6.0});
  bool box_weighted = ex.boolean("box_weighted", false);
  for (double H : Hs)
    if (!(H > 0.25 && H < 0.5)) ex.fail("H_values", "Hurst parameter must lie in (1/4, 1/2)");

  Csv rep(run, "kernel_reports.csv",
          {"identity", "H", "t", "value", "ratio_2t", "expected_ratio", "ratio_rel_error", "fitted_exponent",
           "reference_exponent", "evaluations", "refinements"});
  Csv bounds(run, "kernel_bounds.csv", {"bound", "H", "t", "x", "lhs", "rhs", "ratio"});
  Json per_h = Json::array();
  for (double H : Hs) {
    for (int which = 0; which < 2; ++which) {
      KernelIntegralReport r = which == 0 ? kernel_identity_D(t, H, qo) : kernel_identity_Box(t, H, qo);
      double ratio = std::exp2(r.fitted_exponent), expected = std::exp2(r.reference_exponent);
      double err = std::abs(ratio / expected - 1.0);
      rep << (which == 0 ? "D" : "Box") << H << t << r.value << ratio << expected << err << r.fitted_exponent
          << r.reference_exponent << r.evaluations << r.refinements;
      rep.end();
      per_h.push_back({{"identity", which == 0 ? "D" : "Box"}, {"H", H}, {"ratio_rel_error", err}});
    }
    KernelBoundReport b = kernel_bound_checks(bt, bx, H, bz, box_weighted);
    for (const auto& s : b.samples) {
      bounds << s.bound << H << s.t << s.x << s.lhs << s.rhs << s.ratio;
      bounds.end();
    }
  }
  run.summary["identities"] = per_h;
}

void run_noise_test(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"t", "n_samples", "probes", "dump_increments", "lane"});
  auto grid = run.grid();
  auto ctx = make_context(grid, run.cfg.model.H);
  double t = ex.number("t", run.cfg.grid.T);
  std::size_t n = paths_option(ex, "n_samples", 10000);
  if (n < 2) ex.fail("n_samples", "must be >= 2");
  std::vector<std::pair<double, double>> probes{{0.5, 0.5}, {1.0, 1.0}, {1.0, -1.0},
                                                {0.5, 2.0}, {2.0, 3.0}, {-1.5, 1.0}};
  if (ex.has("probes")) {
    probes.clear();
    const Json& p = ex.json().at("probes");
    for (const auto& pr : p) {
      if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number() || !pr[1].is_number())
        ex.fail("probes", "expected an array of [x, y] pairs");
      probes.emplace_back(pr[0].get<double>(), pr[1].get<double>());
    }
  }
  auto est = empirical_covariances(probes, t, n, *ctx, run.cfg.seed);
  Csv csv(run, "noise_covariance.csv", {"x", "y", "estimate", "stderr", "expected", "z_score"});
  double max_z = 0.0;
  for (const auto& e : est) {
    csv << e.x << e.y << e.estimate << e.stderr_ << e.expected << e.z_score();
    csv.end();
    max_z = std::max(max_z, std::abs(e.z_score()));
  }
  run.summary["max_abs_z"] = max_z;
  run.summary["n_samples"] = n;
  if (ex.boolean("dump_increments", false)) {
    std::ofstream os(run.out / "increments.csv", std::ios::binary);
    dump_increments(os, *ctx, run.cfg.seed, ex.u64("lane", 0));
    run.outputs.push_back("increments.csv");
  }
}

void run_norms_test(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"p", "n_paths", "eps"});
  const double H = run.cfg.model.H;
  auto grid = run.grid();
  auto ctx = make_context(grid, H);
  double p = ex.number("p", 2.0);
  if (!(p >= 2.0)) ex.fail("p", "weighted norms require p >= 2");
  std::size_t n_paths = paths_option(ex, "n_paths", 16);
  if (n_paths < 2) ex.fail("n_paths", "must be >= 2");

  Csv ip(run, "inner_products.csv",
         {"field", "fourier", "gagliardo", "rel_diff_gagliardo", "fourier_eps", "convolution_eps"});
  auto suite = smooth_test_suite(grid.space);
  const double eps_c = 0.01;
  MollifiedSpace ms = build_mollifier(eps_c, grid.space, ctx->params);
  RoughSpace space_eps = ctx->space.mollified(eps_c);
  double worst = 0.0;
  for (const auto& f : suite) {
    double a = inner_product_fourier(f.values, f.values, ctx->space);
    double b = inner_product_gagliardo(f.values, f.values, grid.space, ctx->params);
    double rel = std::abs(a - b) / a;
    worst = std::max(worst, rel);
    double ae = inner_product_fourier(f.values, f.values, space_eps);
    double ce = inner_product_convolution(f.values, f.values, ms, grid.space, ctx->params);
    ip << f.name << a << b << rel << ae << ce;
    ip.end();
  }
  run.summary["max_form_rel_diff"] = worst;

  SimulationOptions so;
  so.eps = ex.number("eps", run.cfg.model.eps);
  so.n_paths = n_paths;
  so.seed = run.cfg.seed;
  so.workers = run.workers;
  SigmaSpec sigma = run.cfg.model.sigma.build();
  std::vector<WeightedNormReport> per(n_paths);
  std::vector<Field> terminal(n_paths);
  solve_stochastic(sigma, *ctx, so, [&](std::size_t i, const Path& path, double) {
    per[i] = z_norm(path, p, grid.space, H);
    terminal[i] = path.back();
  });
  Csv nc(run, "norms.csv", {"path", "lp_lambda", "n_star", "z_norm"});
  for (std::size_t i = 0; i < n_paths; ++i) {
    nc << i << per[i].lp_lambda << per[i].n_star << per[i].z_norm;
    nc.end();
  }
  MonteCarloNorm mc = mc_lp_lambda_norm(terminal, p, grid.space, H);
  double ns = mc_n_star_norm(terminal, p, grid.space, H);
  WeightQuadrature wq = weight_quadrature(grid.space, H);
  run.summary["terminal_lp_lambda"] = {{"value", mc.value}, {"stderr", mc.stderr_}};
  run.summary["terminal_n_star"] = ns;
  run.summary["weight_grid_integral"] = wq.grid_integral;
  run.summary["weight_tail_mass"] = wq.tail_mass;
}

void run_skeleton(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"control"});
  auto grid = run.grid();
  auto ctx = make_context(grid, run.cfg.model.H);
  SigmaSpec sigma = run.cfg.model.sigma.build();
  ControlPath g = read_control(run, grid, *ctx);
  PicardOptions po{run.cfg.solver.tol, run.cfg.solver.max_iter};
  LadderSolution sol = solve(g, sigma, *ctx, run.cfg.solver.ladder, po);
  Path limit = solve_limit(g, sigma, *ctx);

  Csv lad(run, "skeleton_ladder.csv", {"eps", "iterations", "final_residual", "dC_to_previous"});
  for (std::size_t i = 0; i < sol.report.eps.size(); ++i) {
    lad << sol.report.eps[i] << sol.report.iterations[i] << sol.report.final_residuals[i];
    lad << (i == 0 ? std::string("") : format_double(sol.report.differences[i - 1]));
    lad.end();
  }
  Csv term(run, "skeleton_terminal.csv", {"x", "u_limit", "u_last_rung"});
  for (std::size_t j = 0; j < grid.space.n_points; ++j) {
    term << grid.space.x(j) << limit.back()[j] << sol.final_rung.u.back()[j];
    term.end();
  }
  run.summary["action"] = action(g, *ctx);
  run.summary["dC_last_rung_to_limit"] = path_metric_dC(sol.final_rung.u, limit, grid.space);
  run.summary["ladder_strictly_decreasing"] = sol.report.strictly_decreasing;
  if (!sol.report.warning.empty()) run.warnings.push_back(sol.report.warning);
}

void run_simulate(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"n_paths", "eps", "control", "observe_x", "dump_trajectories"});
  auto grid = run.grid();
  auto ctx = make_context(grid, run.cfg.model.H);
  SigmaSpec sigma = run.cfg.model.sigma.build();
  SimulationOptions so;
  so.eps = ex.number("eps", run.cfg.model.eps);
  if (!(so.eps > 0.0)) ex.fail("eps", "must be positive");
  so.n_paths = ex.count("n_paths", 1000);
  if (so.n_paths < 1) ex.fail("n_paths", "must be >= 1");
  so.seed = run.cfg.seed;
  so.workers = run.workers;
  bool dump = ex.boolean("dump_trajectories", false);
  const std::size_t N = grid.time.n_steps, n = grid.space.n_points;
  if (dump) {
    double bytes = 8.0 * static_cast<double>(so.n_paths) * static_cast<double>(N + 1) * static_cast<double>(n);
    if (bytes > 1.0 * (1 << 30)) ex.fail("dump_trajectories", "trajectory dump would exceed 1 GiB");
  }
  so.keep_paths = dump;
  const double x0 = ex.number("observe_x", 0.0);
  const std::size_t j0 = grid.space.nearest_index(x0);
  const std::size_t stride = std::max<std::size_t>(1, n / 256);
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < n; j += stride) cols.push_back(j);

  std::vector<double> at_x0(so.n_paths);
  std::vector<Field> slices(so.n_paths);
  auto observer = [&](std::size_t i, const Path& path, double) {
    at_x0[i] = path.back()[j0];
    slices[i].resize(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) slices[i][c] = path.back()[cols[c]];
  };
  bool controlled = ex.has("control");
  TrajectoryBatch batch = controlled
                              ? solve_controlled(read_control(run, grid, *ctx), sigma, *ctx, so, observer)
                              : solve_stochastic(sigma, *ctx, so, observer);

  Csv pc(run, "simulate_paths.csv", {"path", "lane", "u_T_x0", "log_weight"});
  for (std::size_t i = 0; i < so.n_paths; ++i) {
    pc << i << static_cast<std::size_t>(batch.lanes[i]) << at_x0[i] << batch.log_weights[i];
    pc.end();
  }
  Csv mc(run, "simulate_moments.csv", {"x", "mean", "variance"});
  const double np = static_cast<double>(so.n_paths);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < so.n_paths; ++i) s += slices[i][c];
    double mean = s / np;
    for (std::size_t i = 0; i < so.n_paths; ++i) s2 += (slices[i][c] - mean) * (slices[i][c] - mean);
    mc << grid.space.x(cols[c]) << mean << (so.n_paths > 1 ? s2 / (np - 1.0) : 0.0);
    mc.end();
  }
  double s = 0.0, s2 = 0.0;
  for (double v : at_x0) s += v;
  double mean = s / np;
  for (double v : at_x0) s2 += (v - mean) * (v - mean);
  double var = so.n_paths > 1 ? s2 / (np - 1.0) : 0.0;
  run.summary["x0"] = grid.space.x(j0);
  run.summary["mean"] = mean;
  run.summary["mean_stderr"] = std::sqrt(var / np);
  run.summary["variance"] = var;
  if (auto c = gaussian_amplitude(run.cfg); c && !controlled) {
    run.summary["oracle_variance"] = so.eps * (*c) * (*c) * linear_variance(run.cfg.model.H, grid.time.horizon);
    run.summary["lattice_variance"] = so.eps * (*c) * (*c) * discrete_linear_variance(*ctx, grid.time.horizon);
  }
  if (dump) {
    std::ofstream os(run.out / "trajectories.bin", std::ios::binary);
    for (const Path& p : batch.paths)
      for (const Field& f : p) os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
    run.outputs.push_back("trajectories.bin");
    write_json(run, "trajectories.json",
               {{"dims", {so.n_paths, N + 1, n}},
                {"dtype", "float64"},
                {"order", "row-major"},
                {"axes", {"path", "time_index", "space_index"}},
                {"seed", run.cfg.seed},
                {"config_hash", run.cfg.hash()}});
  }
}

Json rate_json(const RateResult& r) {
  return {{"rate", r.rate},
          {"achieved_observable", r.achieved_observable},
          {"feasibility_residual", r.feasibility_residual},
          {"coefficients", r.coefficients},
          {"basis_centers", r.basis_centers},
          {"time_bins", r.time_bins},
          {"optimizer_iterations", r.optimizer_iterations},
          {"converged", r.converged},
          {"exceeds_budget", r.exceeds_budget},
          {"stationarity", r.stationarity},
          {"multistart_spread", r.multistart_spread},
          {"start_rates", r.start_rates},
          {"warning", r.warning}};
}

void run_rate(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"problem", "basis", "budget", "starts"});
  auto grid = run.grid();
  auto ctx = make_context(grid, run.cfg.model.H);
  SigmaSpec sigma = run.cfg.model.sigma.build();
  RateProblem pb = read_problem(run, grid.space);
  RateOptions ro = read_rate_options(run, pb);
  RateResult r = minimize_rate(pb, sigma, *ctx, ro);
  RateCertificate cert = rate_certificate(pb, r, sigma, *ctx);
  Json j = rate_json(r);
  j["certificate"] = {{"certified", cert.certified},
                      {"upper_bound", cert.certified ? Json(cert.upper_bound) : Json(nullptr)},
                      {"resolved_observable", cert.resolved_observable},
                      {"picard_iterations", cert.picard_iterations},
                      {"reason", cert.reason}};
  if (auto c = gaussian_amplitude(run.cfg); c && pb.observable.is_point() && *c != 0.0) {
    double a = pb.level - 1.0;
    j["oracle_rate"] = a * a / (2.0 * (*c) * (*c) * linear_variance(run.cfg.model.H, grid.time.horizon));
    j["lattice_oracle_rate"] = a * a / (2.0 * (*c) * (*c) * discrete_linear_variance(*ctx, grid.time.horizon));
  }
  j["config_hash"] = run.cfg.hash();
  write_json(run, "rate.json", j);
  Csv csv(run, "rate_control.csv", {"step", "t", "x", "g"});
  for (std::size_t k = 0; k < r.optimal_g.psi.size(); ++k)
    for (std::size_t i = 0; i < grid.space.n_points; ++i) {
      csv << k << grid.time.time(k + 1) << grid.space.x(i) << r.optimal_g.psi[k][i];
      csv.end();
    }
  run.summary["rate"] = r.rate;
  run.summary["certified"] = cert.certified;
  if (!r.warning.empty()) run.warnings.push_back(r.warning);
  if (!cert.certified) run.warnings.push_back("certificate refused: " + cert.reason);
}

void run_ldp_scan(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"problem", "basis", "budget", "starts", "ladder", "n_paths", "method"});
  auto grid = run.grid();
  auto ctx = make_context(grid, run.cfg.model.H);
  SigmaSpec sigma = run.cfg.model.sigma.build();
  RateProblem pb = read_problem(run, grid.space);
  std::vector<double> ladder = ex.numbers("ladder", {0.2, 0.1, 0.05, 0.025});
  std::size_t n_paths = ex.count("n_paths", 2000);
  if (n_paths < 1000) ex.fail("n_paths", "needs at least 1000 paths per rung");
  std::string method = ex.string("method", "auto");
  LdpScanOptions so;
  so.workers = run.workers;
  if (method == "auto") so.method = ScanMethod::automatic;
  else if (method == "plain") so.method = ScanMethod::plain;
  else if (method == "importance") so.method = ScanMethod::importance;
  else ex.fail("method", "expected auto, plain or importance");

  RateResult r;
  if (so.method != ScanMethod::plain) {
    r = minimize_rate(pb, sigma, *ctx, read_rate_options(run, pb));
    so.control = r.optimal_g;
    so.rate = r.rate;
    if (!r.warning.empty()) run.warnings.push_back("rate: " + r.warning);
  }
  double V = 0.0, Vh = 0.0;
  auto c = gaussian_amplitude(run.cfg);
  bool oracle = c && *c != 0.0 && pb.observable.is_point();
  if (oracle) {
    V = (*c) * (*c) * linear_variance(run.cfg.model.H, grid.time.horizon);
    Vh = (*c) * (*c) * discrete_linear_variance(*ctx, grid.time.horizon);
    double a = std::abs(pb.level - 1.0);
    so.oracle_variance = V;
    so.oracle_excursion = a;
    so.oracle_rate = a * a / (2.0 * V);
  }
  LdpScanResult res = ldp_scan(pb, sigma, *ctx, ladder, n_paths, run.cfg.seed, so);

  Csv csv(run, "ldp_scan.csv",
          {"eps", "n_paths", "p_hat", "stderr", "ess", "method", "hits", "log_p", "eps_log_p", "oracle_p", "z_vs_oracle"});
  Json rows = Json::array();
  for (const auto& row : res.rows) {
    const auto& e = row.estimate;
    bool hit = e.p_hat > 0.0;
    csv << e.eps << e.n_paths << e.p_hat << e.stderr_ << e.ess << e.method << e.hits;
    csv << (hit ? format_double(row.log_p) : std::string("-inf"));
    csv << (hit ? format_double(e.eps * row.log_p) : std::string("-inf"));
    csv << (row.oracle_p ? format_double(*row.oracle_p) : std::string(""));
    csv << (row.z_vs_oracle ? format_double(*row.z_vs_oracle) : std::string(""));
    csv.end();
  }
  Json summary = {{"fitted_slope", res.fitted_slope},
                  {"fitted_rate", -res.fitted_slope},
                  {"fitted_intercept", res.fitted_intercept},
                  {"fitted_rungs", res.fitted_rungs},
                  {"oracle_rate", opt(res.oracle_rate)},
                  {"minimized_rate", so.rate ? Json(*so.rate) : Json(nullptr)},
                  {"warnings", res.warnings},
                  {"config_hash", run.cfg.hash()}};
  if (oracle) {
    summary["oracle_variance"] = V;
    summary["lattice_variance"] = Vh;
    summary["slope_rel_error"] = std::abs(-res.fitted_slope / *res.oracle_rate - 1.0);
  }
  write_json(run, "summary.json", summary);
  run.summary = summary;
  for (const auto& w : res.warnings) run.warnings.push_back(w);
}

void run_condition_b(RunContext& run) {
  auto ex = run.experiment();
  ex.only({"control", "ladder", "n_paths", "delta", "action_bound"});
  auto grid = run.grid();
  auto ctx = make_context(grid, run.cfg.model.H);
  SigmaSpec sigma = run.cfg.model.sigma.build();
  ControlPath g = read_control(run, grid, *ctx);
  std::vector<double> ladder = ex.numbers("ladder", {0.2, 0.1, 0.05, 0.025});
  std::size_t n_paths = paths_option(ex, "n_paths", 2000);
  double delta = ex.number("delta", 0.05);
  std::optional<double> bound;
  if (ex.has("action_bound")) bound = ex.number("action_bound", 0.0);
  ConditionBReport rep = condition_b_experiment({g}, sigma, *ctx, ladder, n_paths, delta, run.cfg.seed,
                                                run.workers, bound);
  Csv csv(run, "condition_b.csv",
          {"eps", "n_paths", "exceedances", "frequency", "wilson_lo", "wilson_hi", "mean_dC"});
  for (const auto& r : rep.rows) {
    csv << r.eps << r.n_paths << r.exceedances << r.frequency << r.interval.lo << r.interval.hi
        << r.mean_distance;
    csv.end();
  }
  Json summary = {{"delta", delta},
                  {"action", action(g, *ctx)},
                  {"mann_kendall", {{"s", rep.trend.s}, {"z", rep.trend.z}, {"p_value", rep.trend.p_value},
                                    {"decreasing", rep.trend.decreasing}}},
                  {"non_increasing_within_intervals", rep.non_increasing_within_intervals},
                  {"warning", rep.warning},
                  {"config_hash", run.cfg.hash()}};
  write_json(run, "summary.json", summary);
  run.summary = summary;
  if (!rep.warning.empty()) run.warnings.push_back(rep.warning);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rough-noise stochastic heat equation: solvers, rate functions and experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out_dir;
  app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "RNG seed (overrides the config)");
  app.add_option("--workers", workers, "Worker threads (default: available parallelism)");
  app.add_option("--out", out_dir, "Output directory (overrides the config)");

  struct Sub {
    const char* name;
    const char* help;
    void (*fn)(RunContext&);
  };
  const Sub subs[] = {
      {"verify-kernels", "Heat-kernel identity ratio tests and bound checks", run_verify_kernels},
      {"noise-test", "Empirical covariance of the rough noise", run_noise_test},
      {"norms-test", "Inner-product forms and weighted norms of simulated paths", run_norms_test},
      {"skeleton", "Solve the skeleton equation over an eps ladder", run_skeleton},
      {"simulate", "Simulate the stochastic heat equation", run_simulate},
      {"rate", "Minimize the rate function for a terminal target", run_rate},
      {"ldp-scan", "Rare-event probabilities over an eps ladder", run_ldp_scan},
      {"condition-b", "Exceedance frequencies of shifted solutions", run_condition_b},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  const auto start = std::chrono::steady_clock::now();
  std::string name = app.get_subcommands().front()->get_name();
  RunContext run;
  try {
    run.cfg = parse_config(config_path);
    if (seed) run.cfg.seed = *seed;
    if (out_dir) run.cfg.output = *out_dir;
    run.workers = workers ? std::max<std::size_t>(1, *workers)
                          : std::max(1u, std::thread::hardware_concurrency());
    enforce_hypothesis(run.cfg);
    run.out = run.cfg.output;
    fs::create_directories(run.out);
    for (const auto& s : subs)
      if (name == s.name) s.fn(run);
  } catch (const ValidationError& e) {
    std::cerr << "rshe_cli " << name << ": validation error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "rshe_cli " << name << ": numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "rshe_cli " << name << ": error: " << e.what() << '\n';
    return 3;
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Json versions = Json::object();
  versions["rshe"] = kVersion;
  versions["fftw"] = std::string(fftw_version);
  versions["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION);
  versions["compiler"] = std::string(__VERSION__);
  Json manifest = Json::object();
  manifest["subcommand"] = name;
  manifest["config_hash"] = run.cfg.hash();
  manifest["config"] = run.cfg.effective();
  manifest["seed"] = run.cfg.seed;
  manifest["workers"] = run.workers;
  manifest["versions"] = versions;
  manifest["wall_time_seconds"] = wall;
  manifest["outputs"] = run.outputs;
  manifest["summary"] = run.summary;
  manifest["warnings"] = run.warnings;
  write_json(run, "manifest.json", manifest);
  for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << name << ": ok (" << run.outputs.size() << " files in " << run.out.string() << ")\n";
  return 0;
}
