#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rshe/coefficients.hpp"
#include "rshe/discretization.hpp"
#include "rshe/errors.hpp"
#include "rshe/skeleton.hpp"

namespace rshe {

using Json = nlohmann::json;

struct GridConfig {
  double L = 8.0;
  std::size_t n_points = 1024;
  double T = 1.0;
  std::size_t n_steps = 10;
};

struct SigmaConfig {
  std::string kind = "constant";
  double c = 1.0;
  double a = 0.0;
  double b = 1.0;
  double omega = 1.0;
  std::string expression;

  SigmaSpec build() const {
    if (kind == "constant") return SigmaSpec::constant(c);
    if (kind == "affine") return SigmaSpec::affine(a, b);
    if (kind == "smooth") return SigmaSpec::smooth(a, b, omega);
    return SigmaSpec::expression(expression);
  }
};

struct ModelConfig {
  double H = 0.3;
  SigmaConfig sigma;
  double eps = 0.1;
  double p0 = 0.0;
  double hypothesis_constant = 10.0;
};

struct SolverConfig {
  double tol = 1e-8;
  std::size_t max_iter = 50;
  std::vector<double> ladder = default_ladder();
  double feasibility_rel_tol = 1e-4;
};

struct RunConfig {
  GridConfig grid;
  ModelConfig model;
  SolverConfig solver;
  Json experiment = Json::object();
  std::uint64_t seed = 0;
  std::string output = "out";
  std::string source = "<config>";
  std::string text;  // raw source, for line numbers in later diagnostics

  // Canonical form with every default filled in; keys are sorted.
  Json effective() const;
  std::string hash() const;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline Json RunConfig::effective() const {
  Json sigma = {{"kind", model.sigma.kind}};
  if (model.sigma.kind == "constant") sigma["c"] = model.sigma.c;
  if (model.sigma.kind == "affine" || model.sigma.kind == "smooth") {
    sigma["a"] = model.sigma.a;
    sigma["b"] = model.sigma.b;
  }
  if (model.sigma.kind == "smooth") sigma["omega"] = model.sigma.omega;
  if (model.sigma.kind == "expression") sigma["expression"] = model.sigma.expression;
  return Json{
      {"grid", {{"L", grid.L}, {"n_points", grid.n_points}, {"T", grid.T}, {"n_steps", grid.n_steps}}},
      {"model",
       {{"H", model.H},
        {"sigma", sigma},
        {"eps", model.eps},
        {"p0", model.p0},
        {"hypothesis_constant", model.hypothesis_constant}}},
      {"solver",
       {{"tol", solver.tol},
        {"max_iter", solver.max_iter},
        {"ladder", solver.ladder},
        {"feasibility_rel_tol", solver.feasibility_rel_tol}}},
      {"experiment", experiment},
      {"seed", seed},
      {"output", output},
  };
}

inline std::string RunConfig::hash() const { return hex64(fnv1a64(effective().dump())); }

namespace detail {

// Reads typed fields of one config block and reports errors as
// "<source>:<line>: <block>.<key>: <problem>".
class BlockReader {
public:
  BlockReader(const Json& obj, std::string path, const std::string& text, const std::string& source)
      : obj_(obj), path_(std::move(path)), text_(text), source_(source) {}

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    std::string where = source_;
    if (std::size_t line = line_of(key)) where += ":" + std::to_string(line);
    std::string name = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    throw ConfigError(where + ": " + name + ": " + what);
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  double number(const std::string& key, double def) const {
    if (!has(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "must be finite");
    return d;
  }
  std::size_t count(const std::string& key, std::size_t def) const {
    if (!has(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(key, "expected a non-negative integer");
    return v.get<std::size_t>();
  }
  std::uint64_t u64(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_number_unsigned()) fail(key, "expected an unsigned integer");
    return v.get<std::uint64_t>();
  }
  std::string string(const std::string& key, const std::string& def) const {
    if (!has(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }
  bool boolean(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }
  std::vector<double> numbers(const std::string& key, const std::vector<double>& def) const {
    if (!has(key)) return def;
    const Json& v = obj_.at(key);
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  BlockReader block(const std::string& key) const {
    if (!has(key)) fail(key, "missing block");
    const Json& v = obj_.at(key);
    if (!v.is_object()) fail(key, "expected an object");
    return BlockReader(v, path_.empty() ? key : path_ + "." + key, text_, source_);
  }
  void only(std::initializer_list<const char*> keys) const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) fail(it.key(), "unknown key");
    }
  }
  const Json& json() const { return obj_; }

private:
  // 1-based line of the first occurrence of "key" in the source text, 0 if absent.
  std::size_t line_of(const std::string& key) const {
    std::string leaf = key.empty() ? path_.substr(path_.rfind('.') == std::string::npos ? 0 : path_.rfind('.') + 1) : key;
    if (leaf.empty()) return 0;
    std::size_t pos = text_.find("\"" + leaf + "\"");
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + static_cast<long>(pos), '\n'));
  }

  const Json& obj_;
  std::string path_;
  const std::string& text_;
  const std::string& source_;
};

}  // namespace detail

// Parses and validates a run configuration. Blocks "grid", "solver" and
// "experiment" are optional; "model" and its "sigma" block are required.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
    byte = std::min(byte, text.size());
    std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
    std::size_t nl = text.rfind('\n', byte == 0 ? 0 : byte - 1);
    std::size_t col = nl == std::string::npos ? byte + 1 : byte - nl;
    std::string msg = e.what();
    if (auto p = msg.find("parse error"); p != std::string::npos) msg = msg.substr(p);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": malformed JSON: " + msg);
  }
  if (!root.is_object()) throw ConfigError(source + ":1: top level must be a JSON object");

  RunConfig cfg;
  cfg.source = source;
  cfg.text = text;
  detail::BlockReader top(root, "", text, source);
  top.only({"grid", "model", "solver", "experiment", "seed", "output"});

  if (top.has("grid")) {
    auto g = top.block("grid");
    g.only({"L", "n_points", "T", "n_steps"});
    cfg.grid.L = g.number("L", cfg.grid.L);
    cfg.grid.n_points = g.count("n_points", cfg.grid.n_points);
    cfg.grid.T = g.number("T", cfg.grid.T);
    cfg.grid.n_steps = g.count("n_steps", cfg.grid.n_steps);
    if (!(cfg.grid.L > 0.0)) g.fail("L", "must be positive");
    if (!is_power_of_two(cfg.grid.n_points) || cfg.grid.n_points < 8)
      g.fail("n_points", "must be a power of two >= 8");
    if (!(cfg.grid.T > 0.0)) g.fail("T", "must be positive");
    if (cfg.grid.n_steps < 1) g.fail("n_steps", "must be >= 1");
  }

  auto m = top.block("model");
  m.only({"H", "sigma", "eps", "p0", "hypothesis_constant"});
  cfg.model.H = m.number("H", cfg.model.H);
  if (!(cfg.model.H > 0.25 && cfg.model.H < 0.5))
    m.fail("H", "Hurst parameter must lie in (1/4, 1/2)");
  cfg.model.eps = m.number("eps", cfg.model.eps);
  if (!(cfg.model.eps > 0.0)) m.fail("eps", "must be positive");
  const double threshold = p0_threshold(cfg.model.H);
  cfg.model.p0 = m.number("p0", std::floor(threshold) + 1.0);
  if (!(cfg.model.p0 > threshold)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "coefficient hypothesis violation: condition p0_threshold requires p0 > 6/(4H-1) = %.6g, got %.6g",
                  threshold, cfg.model.p0);
    m.fail("p0", buf);
  }
  cfg.model.hypothesis_constant = m.number("hypothesis_constant", cfg.model.hypothesis_constant);
  if (!(cfg.model.hypothesis_constant > 0.0)) m.fail("hypothesis_constant", "must be positive");

  auto s = m.block("sigma");
  SigmaConfig& sc = cfg.model.sigma;
  sc.kind = s.string("kind", "");
  if (sc.kind == "constant") {
    s.only({"kind", "c"});
    sc.c = s.number("c", 1.0);
  } else if (sc.kind == "affine") {
    s.only({"kind", "a", "b"});
    sc.a = s.number("a", 0.0);
    sc.b = s.number("b", 1.0);
  } else if (sc.kind == "smooth") {
    s.only({"kind", "a", "b", "omega"});
    sc.a = s.number("a", 0.0);
    sc.b = s.number("b", 1.0);
    sc.omega = s.number("omega", 1.0);
  } else if (sc.kind == "expression") {
    s.only({"kind", "expression"});
    sc.expression = s.string("expression", "");
    try {
      (void)expr::Expression(sc.expression);
    } catch (const CoefficientError& e) {
      s.fail("expression", e.what());
    }
  } else {
    s.fail("kind", "expected one of constant, affine, smooth, expression");
  }

  if (top.has("solver")) {
    auto v = top.block("solver");
    v.only({"tol", "max_iter", "ladder", "feasibility_rel_tol"});
    cfg.solver.tol = v.number("tol", cfg.solver.tol);
    cfg.solver.max_iter = v.count("max_iter", cfg.solver.max_iter);
    cfg.solver.ladder = v.numbers("ladder", cfg.solver.ladder);
    cfg.solver.feasibility_rel_tol = v.number("feasibility_rel_tol", cfg.solver.feasibility_rel_tol);
    if (!(cfg.solver.tol > 0.0)) v.fail("tol", "must be positive");
    if (!(cfg.solver.feasibility_rel_tol > 0.0)) v.fail("feasibility_rel_tol", "must be positive");
    if (cfg.solver.max_iter < 1) v.fail("max_iter", "must be >= 1");
    if (cfg.solver.ladder.empty()) v.fail("ladder", "must not be empty");
    for (std::size_t i = 0; i < cfg.solver.ladder.size(); ++i) {
      if (!(cfg.solver.ladder[i] > 0.0)) v.fail("ladder", "entries must be positive");
      if (i > 0 && !(cfg.solver.ladder[i] < cfg.solver.ladder[i - 1]))
        v.fail("ladder", "must be strictly decreasing");
    }
  }
  if (top.has("experiment")) cfg.experiment = top.block("experiment").json();
  cfg.seed = top.u64("seed", 0);
  cfg.output = top.string("output", cfg.output);
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

// Checks sigma against the coefficient hypothesis with the declared constant
// and throws a ValidationError naming every failed condition.
inline HypothesisReport enforce_hypothesis(const RunConfig& cfg) {
  SigmaSpec sigma = cfg.model.sigma.build();
  HypothesisReport rep = validate_hypothesis(
      sigma, cfg.model.H, HypothesisConstants::uniform(cfg.model.hypothesis_constant, cfg.model.p0),
      HypothesisSweep::standard(cfg.grid.T, cfg.grid.L));
  if (!rep.passed) {
    std::string msg = "sigma " + sigma.describe() + " violates the coefficient hypothesis:";
    for (const auto& c : rep.conditions)
      if (!c.passed) {
        char buf[200];
        std::snprintf(buf, sizeof buf, " %s (measured %.4g > declared %.4g at t=%g, x=%g, u=%g);",
                      c.name.c_str(), c.measured, c.declared, c.t, c.x, c.u);
        msg += buf;
      }
    msg.pop_back();
    throw ValidationError(msg);
  }
  return rep;
}

}  // namespace rshe
