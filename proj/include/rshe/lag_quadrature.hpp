#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace rshe {

struct LagIntegral {
  double value = 0.0;
  std::size_t evaluations = 0;
};

// Lags used by integrate_lags: every lag up to `dense`, then a geometric
// progression (ratio ~1.03) of distinct integers up to max_lag.
inline std::vector<std::size_t> lag_nodes(std::size_t max_lag, std::size_t dense = 64) {
  std::vector<std::size_t> nodes;
  for (std::size_t j = 1; j <= max_lag && j <= dense; ++j) nodes.push_back(j);
  double next = static_cast<double>(dense);
  while (nodes.back() < max_lag) {
    next *= 1.03;
    std::size_t j = static_cast<std::size_t>(std::ceil(next));
    if (j > max_lag) j = max_lag;
    if (j > nodes.back()) nodes.push_back(j);
  }
  return nodes;
}

// int_0^inf G(y) y^{2H-2} dy for G sampled at lags y = j*dx, 1 <= j <= max_lag.
// G is taken quadratic on [0, dx], piecewise linear between nodes (integrated
// against the exact weight moments), and equal to g_inf beyond max_lag*dx.
template <class LagFn>
LagIntegral integrate_lags(LagFn&& lag_value, std::size_t max_lag, double dx, double H,
                           double g_inf) {
  const double beta = 2.0 * H - 2.0;
  std::vector<std::size_t> nodes = lag_nodes(max_lag);
  std::vector<double> vals(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) vals[i] = lag_value(nodes[i]);

  double total = vals[0] * std::pow(dx, beta + 1.0) / (beta + 3.0);
  auto moment = [](double a, double b, double e) { return (std::pow(b, e) - std::pow(a, e)) / e; };
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    double a = static_cast<double>(nodes[i]) * dx;
    double b = static_cast<double>(nodes[i + 1]) * dx;
    double slope = (vals[i + 1] - vals[i]) / (b - a);
    total += (vals[i] - slope * a) * moment(a, b, beta + 1.0) + slope * moment(a, b, beta + 2.0);
  }
  double y_end = static_cast<double>(nodes.back()) * dx;
  total += g_inf * std::pow(y_end, beta + 1.0) / -(beta + 1.0);
  return {total, nodes.size()};
}

}  // namespace rshe
