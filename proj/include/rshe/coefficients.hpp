#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "rshe/errors.hpp"
#include "rshe/heat_kernel.hpp"

namespace rshe {

namespace expr {

// Arithmetic expressions in t, x, u: + - * / ^, unary minus, parentheses,
// numbers, the constants pi and e, and the usual one-argument functions.
class Expression {
public:
  explicit Expression(std::string text) : text_(std::move(text)) {
    pos_ = 0;
    root_ = parse_sum();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    uses_u_ = depends_on(root_, Var::u);
    uses_x_ = depends_on(root_, Var::x);
  }

  double operator()(double t, double x, double u) const { return eval(root_, t, x, u); }
  const std::string& text() const { return text_; }
  bool uses_u() const { return uses_u_; }
  bool uses_x() const { return uses_x_; }

private:
  enum class Op { num, var, neg, add, sub, mul, div, pow, fn };
  enum class Var { t, x, u };
  enum class Fn { sin, cos, tan, exp, log, sqrt, abs, tanh, atan, sinh, cosh };
  struct Node {
    Op op;
    double value = 0.0;
    Var var = Var::t;
    Fn fn = Fn::sin;
    int a = -1, b = -1;
  };

  std::string text_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;
  int root_ = -1;
  bool uses_u_ = false, uses_x_ = false;

  [[noreturn]] void fail(const std::string& msg) const {
    throw CoefficientError("sigma expression \"" + text_ + "\": " + msg + " at position " +
                           std::to_string(pos_ + 1));
  }
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  int add(Node n) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }

  int parse_sum() {
    int lhs = parse_product();
    for (;;) {
      if (accept('+')) lhs = add({Op::add, 0, Var::t, Fn::sin, lhs, parse_product()});
      else if (accept('-')) lhs = add({Op::sub, 0, Var::t, Fn::sin, lhs, parse_product()});
      else return lhs;
    }
  }
  int parse_product() {
    int lhs = parse_unary();
    for (;;) {
      if (accept('*')) lhs = add({Op::mul, 0, Var::t, Fn::sin, lhs, parse_unary()});
      else if (accept('/')) lhs = add({Op::div, 0, Var::t, Fn::sin, lhs, parse_unary()});
      else return lhs;
    }
  }
  int parse_unary() {
    if (accept('-')) return add({Op::neg, 0, Var::t, Fn::sin, parse_unary(), -1});
    if (accept('+')) return parse_unary();
    return parse_power();
  }
  int parse_power() {
    int base = parse_primary();
    if (accept('^')) return add({Op::pow, 0, Var::t, Fn::sin, base, parse_unary()});
    return base;
  }
  int parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    if (accept('(')) {
      int inner = parse_sum();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(text_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("malformed number");
      }
      pos_ += used;
      return add({Op::num, v});
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      std::string id = text_.substr(start, pos_ - start);
      if (id == "t") return add({Op::var, 0, Var::t});
      if (id == "x") return add({Op::var, 0, Var::x});
      if (id == "u") return add({Op::var, 0, Var::u});
      if (id == "pi") return add({Op::num, std::acos(-1.0)});
      if (id == "e") return add({Op::num, std::exp(1.0)});
      static const std::pair<const char*, Fn> fns[] = {
          {"sin", Fn::sin},   {"cos", Fn::cos},   {"tan", Fn::tan},   {"exp", Fn::exp},
          {"log", Fn::log},   {"sqrt", Fn::sqrt}, {"abs", Fn::abs},   {"tanh", Fn::tanh},
          {"atan", Fn::atan}, {"sinh", Fn::sinh}, {"cosh", Fn::cosh}};
      for (auto& [name, fn] : fns) {
        if (id == name) {
          if (!accept('(')) fail("expected '(' after " + id);
          int arg = parse_sum();
          if (!accept(')')) fail("expected ')'");
          return add({Op::fn, 0, Var::t, fn, arg, -1});
        }
      }
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  bool depends_on(int i, Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.op == Op::var) return n.var == v;
    return (n.a >= 0 && depends_on(n.a, v)) || (n.b >= 0 && depends_on(n.b, v));
  }

  double eval(int i, double t, double x, double u) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::num: return n.value;
      case Op::var: return n.var == Var::t ? t : (n.var == Var::x ? x : u);
      case Op::neg: return -eval(n.a, t, x, u);
      case Op::add: return eval(n.a, t, x, u) + eval(n.b, t, x, u);
      case Op::sub: return eval(n.a, t, x, u) - eval(n.b, t, x, u);
      case Op::mul: return eval(n.a, t, x, u) * eval(n.b, t, x, u);
      case Op::div: return eval(n.a, t, x, u) / eval(n.b, t, x, u);
      case Op::pow: return std::pow(eval(n.a, t, x, u), eval(n.b, t, x, u));
      case Op::fn: {
        double a = eval(n.a, t, x, u);
        switch (n.fn) {
          case Fn::sin: return std::sin(a);
          case Fn::cos: return std::cos(a);
          case Fn::tan: return std::tan(a);
          case Fn::exp: return std::exp(a);
          case Fn::log: return std::log(a);
          case Fn::sqrt: return std::sqrt(a);
          case Fn::abs: return std::abs(a);
          case Fn::tanh: return std::tanh(a);
          case Fn::atan: return std::atan(a);
          case Fn::sinh: return std::sinh(a);
          case Fn::cosh: return std::cosh(a);
        }
      }
    }
    return 0.0;
  }
};

}  // namespace expr

enum class SigmaKind { constant, affine, smooth, expression };

// Diffusion coefficient sigma(t, x, u).
//   constant:   c
//   affine:     a u + b
//   smooth:     b + a sin(omega u)
//   expression: user formula in t, x, u
class SigmaSpec {
public:
  static SigmaSpec constant(double c) { return SigmaSpec(SigmaKind::constant, c, 0.0, 0.0); }
  static SigmaSpec affine(double a, double b) { return SigmaSpec(SigmaKind::affine, a, b, 0.0); }
  static SigmaSpec smooth(double a, double b, double omega) {
    return SigmaSpec(SigmaKind::smooth, a, b, omega);
  }
  static SigmaSpec expression(const std::string& text) {
    SigmaSpec s(SigmaKind::expression, 0.0, 0.0, 0.0);
    s.expr_ = std::make_shared<const expr::Expression>(text);
    return s;
  }

  SigmaKind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }
  double omega() const { return omega_; }

  double operator()(double t, double x, double u) const {
    switch (kind_) {
      case SigmaKind::constant: return a_;
      case SigmaKind::affine: return a_ * u + b_;
      case SigmaKind::smooth: return b_ + a_ * std::sin(omega_ * u);
      case SigmaKind::expression: {
        double v = (*expr_)(t, x, u);
        if (!std::isfinite(v))
          throw CoefficientError("sigma expression \"" + expr_->text() +
                                 "\" is not finite at (t, x, u) = (" + std::to_string(t) + ", " +
                                 std::to_string(x) + ", " + std::to_string(u) + ")");
        return v;
      }
    }
    return 0.0;
  }

  // sigma does not depend on u, so the equation is linear with additive noise.
  bool u_independent() const {
    switch (kind_) {
      case SigmaKind::constant: return true;
      case SigmaKind::affine: return a_ == 0.0;
      case SigmaKind::smooth: return a_ == 0.0 || omega_ == 0.0;
      case SigmaKind::expression: return !expr_->uses_u();
    }
    return false;
  }

  bool x_independent() const {
    return kind_ != SigmaKind::expression || !expr_->uses_x();
  }

  // Pointwise evaluation over a slice: out_j = sigma(t, x_j, u_j).
  void apply(double t, const SpaceGrid& g, const Field& u, Field& out) const {
    out.resize(u.size());
    if (kind_ == SigmaKind::constant) {
      std::fill(out.begin(), out.end(), a_);
      return;
    }
    for (std::size_t j = 0; j < u.size(); ++j) out[j] = (*this)(t, g.x(j), u[j]);
  }

  std::string describe() const {
    switch (kind_) {
      case SigmaKind::constant: return "constant(" + std::to_string(a_) + ")";
      case SigmaKind::affine: return "affine(a=" + std::to_string(a_) + ", b=" + std::to_string(b_) + ")";
      case SigmaKind::smooth:
        return "smooth(b + a sin(omega u); a=" + std::to_string(a_) + ", b=" + std::to_string(b_) +
               ", omega=" + std::to_string(omega_) + ")";
      case SigmaKind::expression: return "expression(" + expr_->text() + ")";
    }
    return "";
  }

private:
  SigmaSpec(SigmaKind k, double a, double b, double omega) : kind_(k), a_(a), b_(b), omega_(omega) {}
  SigmaKind kind_;
  double a_, b_, omega_;
  std::shared_ptr<const expr::Expression> expr_;
};

// Declared constants of the coefficient hypothesis. A single C may be used for
// all conditions, as in the usual statement.
struct HypothesisConstants {
  double growth = 1.0;
  double lipschitz = 1.0;
  double du = 1.0;
  double dx_at_zero = 1.0;
  double dxu = 1.0;
  double weighted_du = 1.0;
  double p0 = 0.0;

  static HypothesisConstants uniform(double C, double p0) { return {C, C, C, C, C, C, p0}; }
};

inline double p0_threshold(double H) { return 6.0 / (4.0 * H - 1.0); }

struct HypothesisSweep {
  std::vector<double> ts;
  std::vector<double> xs;
  std::vector<double> us;

  static HypothesisSweep standard(double T, double L) {
    HypothesisSweep s;
    s.ts = {0.0, 0.5 * T, T};
    for (int i = 0; i <= 16; ++i) s.xs.push_back(-L + 2.0 * L * i / 16.0);
    for (int i = 0; i <= 40; ++i) s.us.push_back(-10.0 + 0.5 * i);
    return s;
  }
};

struct ConditionResult {
  std::string name;
  double measured = 0.0;  // largest observed value of the constrained quantity
  double declared = 0.0;
  bool passed = false;
  double t = 0.0, x = 0.0, u = 0.0;  // where the largest value occurs
};

struct HypothesisReport {
  std::vector<ConditionResult> conditions;
  bool passed = true;
  std::vector<std::string> failed() const {
    std::vector<std::string> out;
    for (const auto& c : conditions)
      if (!c.passed) out.push_back(c.name);
    return out;
  }
  const ConditionResult* find(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {
// Central difference at steps h and 2h; a large disagreement means sigma is
// not smooth enough near the point for the derivative to be estimated.
template <class F>
double checked_derivative(F&& f, double v, double h, const char* what, double t, double x, double u) {
  double d1 = (f(v + h) - f(v - h)) / (2.0 * h);
  double d2 = (f(v + 2.0 * h) - f(v - 2.0 * h)) / (4.0 * h);
  if (!std::isfinite(d1) || std::abs(d1 - d2) > 1e-3 * (1.0 + std::abs(d1)))
    throw ValidationError(std::string("cannot estimate ") + what + " of sigma at (t, x, u) = (" +
                          std::to_string(t) + ", " + std::to_string(x) + ", " +
                          std::to_string(u) + "): coefficient is not smooth there");
  return d1;
}
}  // namespace detail

inline HypothesisReport validate_hypothesis(const SigmaSpec& sigma, double H,
                                            const HypothesisConstants& c,
                                            const HypothesisSweep& sweep) {
  if (!(H > 0.25 && H < 0.5)) throw DomainError("Hurst parameter must lie in (1/4, 1/2)");
  const double h = 1e-4;
  ConditionResult growth{"linear_growth", 0, c.growth}, lip{"lipschitz", 0, c.lipschitz},
      du{"bounded_du", 0, c.du}, dx0{"bounded_dx_at_zero", 0, c.dx_at_zero},
      dxu{"bounded_dxu", 0, c.dxu}, wdu{"weighted_du_lipschitz", 0, c.weighted_du};
  auto track = [](ConditionResult& r, double v, double t, double x, double u) {
    if (v > r.measured) {
      r.measured = v;
      r.t = t;
      r.x = x;
      r.u = u;
    }
  };
  const double lam_exp = c.p0 > 0.0 ? -1.0 / c.p0 : 0.0;
  // Growth is probed out to |u| = 2(C+1) so super-linear sigma cannot hide inside the sweep.
  std::vector<double> us = sweep.us;
  double u_reach = 0.0;
  for (double u : us) u_reach = std::max(u_reach, std::abs(u));
  const double u_need = 2.0 * (c.growth + 1.0);
  if (std::isfinite(u_need) && u_reach < u_need) {
    for (int i = 1; i <= 8; ++i) {
      double u = u_reach + (u_need - u_reach) * i / 8.0;
      us.push_back(u);
      us.push_back(-u);
    }
  }
  for (double t : sweep.ts) {
    for (double x : sweep.xs) {
      std::vector<double> s(us.size()), su(us.size());
      for (std::size_t i = 0; i < us.size(); ++i) {
        double u = us[i];
        s[i] = sigma(t, x, u);
        track(growth, std::abs(s[i]) / (1.0 + std::abs(u)), t, x, u);
        su[i] = detail::checked_derivative([&](double v) { return sigma(t, x, v); }, u, h,
                                           "d/du", t, x, u);
        track(du, std::abs(su[i]), t, x, u);
        auto sig_u = [&](double xv) {
          return (sigma(t, xv, u + h) - sigma(t, xv, u - h)) / (2.0 * h);
        };
        track(dxu, std::abs(detail::checked_derivative(sig_u, x, 10.0 * h, "d2/dxdu", t, x, u)), t, x, u);
      }
      double sx = detail::checked_derivative([&](double xv) { return sigma(t, xv, 0.0); }, x, h,
                                             "d/dx", t, x, 0.0);
      track(dx0, std::abs(sx), t, x, 0.0);
      const double wfac = std::pow(weight_lambda(x, H), lam_exp);
      for (std::size_t i = 0; i < us.size(); ++i) {
        for (std::size_t j = i + 1; j < us.size(); ++j) {
          double gap = std::abs(us[i] - us[j]);
          if (gap == 0.0) continue;
          track(lip, std::abs(s[i] - s[j]) / gap, t, x, us[i]);
          track(wdu, wfac * std::abs(su[i] - su[j]) / gap, t, x, us[i]);
        }
      }
    }
  }
  HypothesisReport rep;
  const double slack = 1e-6;  // finite-difference noise
  for (ConditionResult* r : {&growth, &lip, &du, &dx0, &dxu, &wdu}) {
    r->passed = r->measured <= r->declared * (1.0 + slack) + slack;
    rep.conditions.push_back(*r);
  }
  ConditionResult p0{"p0_threshold", c.p0, p0_threshold(H)};
  p0.passed = c.p0 > p0_threshold(H);
  rep.conditions.push_back(p0);
  for (const auto& r : rep.conditions) rep.passed = rep.passed && r.passed;
  return rep;
}

}  // namespace rshe
