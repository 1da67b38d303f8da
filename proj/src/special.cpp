// Copyright 2026 The attnfilter Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "attn/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "attn/error.hpp"

namespace attn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lgamma_positive(double x) {
#if defined(__GLIBC__)
  // lgamma() writes the global signgam; the reentrant form does not.
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

}  // namespace

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("digamma: argument must be finite and > 0, got " +
                      std::to_string(x));
  }
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli series: B_2k / (2k x^2k), k = 1..7
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 -
                                                      inv2 / 12.0))))));
  return shift + (std::log(x) - 0.5 * inv - series);
}

double trigamma_fd(double x, double step) {
  return (digamma(x + step) - digamma(x - step)) / (2.0 * step);
}

double log_beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw DomainError("log_beta: arguments must be > 0");
  }
  return lgamma_positive(a) + lgamma_positive(b) - lgamma_positive(a + b);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw DomainError("log_sum_exp: empty input");
  const double top = *std::max_element(values.begin(), values.end());
  if (top == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

QuadratureGrid::QuadratureGrid(std::size_t num_nodes) {
  if (num_nodes < 2) throw DomainError("QuadratureGrid: need at least 2 nodes");
  std::vector<double> nodes(num_nodes);
  std::vector<double> weights(num_nodes);
  const auto last = num_nodes - 1;
  const double h = 1.0 / static_cast<double>(last);
  for (std::size_t k = 0; k < num_nodes; ++k) {
    nodes[k] = static_cast<double>(k) / static_cast<double>(last);
    weights[k] = (k == 0 || k == last) ? 0.5 * h : h;
  }
  nodes[last] = 1.0;
  std::vector<double> log_weights(num_nodes);
  std::transform(weights.begin(), weights.end(), log_weights.begin(),
                 [](double w) { return std::log(w); });
  nodes_ = std::make_shared<const std::vector<double>>(std::move(nodes));
  weights_ = std::make_shared<const std::vector<double>>(std::move(weights));
  log_weights_ =
      std::make_shared<const std::vector<double>>(std::move(log_weights));
}

BetaLogMoments beta_log_moments(double alpha, double beta) {
  const double total = digamma(alpha + beta);
  return {digamma(alpha) - total, digamma(beta) - total};
}

BetaSolution solve_beta_system(double rhs_log_eta, double rhs_log_1m_eta) {
  if (!(rhs_log_eta < 0.0) || !(rhs_log_1m_eta < 0.0) ||
      !std::isfinite(rhs_log_eta) || !std::isfinite(rhs_log_1m_eta)) {
    throw DomainError("solve_beta_system: right-hand sides must be finite and < 0");
  }
  constexpr int kMaxIters = 200;
  constexpr double kTarget = 1e-13;
  constexpr double kAccept = 1e-9;

  auto residual = [&](double a, double b) {
    const double total = digamma(a + b);
    return std::pair{digamma(a) - total - rhs_log_eta,
                     digamma(b) - total - rhs_log_1m_eta};
  };
  auto norm = [](std::pair<double, double> r) {
    return std::max(std::abs(r.first), std::abs(r.second));
  };

  // psi(x) ~ log(x - 1/2) turns the system into a closed form start point.
  // By Jensen, exp(E log eta) + exp(E log(1 - eta)) < 1 for every Beta; the
  // moments of all Betas fill exactly that set.
  const double slack = 1.0 - std::exp(rhs_log_eta) - std::exp(rhs_log_1m_eta);
  if (!(slack > 0.0)) {
    throw DomainError("solve_beta_system: no Beta distribution has these log-moments");
  }
  const double total = 0.5 / slack;
  double a = std::max(0.5 + total * std::exp(rhs_log_eta), 1e-3);
  double b = std::max(0.5 + total * std::exp(rhs_log_1m_eta), 1e-3);

  double u = std::log(a);
  double v = std::log(b);
  auto r = residual(a, b);
  int iter = 0;
  for (; iter < kMaxIters && norm(r) > kTarget; ++iter) {
    // Jacobian with respect to (u, v) = (log a, log b).
    const double t_ab = trigamma_fd(a + b);
    const double j11 = (trigamma_fd(a) - t_ab) * a;
    const double j12 = -t_ab * b;
    const double j21 = -t_ab * a;
    const double j22 = (trigamma_fd(b) - t_ab) * b;
    const double det = j11 * j22 - j12 * j21;
    if (!(std::abs(det) > 0.0)) break;
    const double du = (j22 * r.first - j12 * r.second) / det;
    const double dv = (j11 * r.second - j21 * r.first) / det;

    double step = 1.0;
    const double current = norm(r);
    bool improved = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      const double nu = u - step * du;
      const double nv = v - step * dv;
      const double na = std::exp(nu);
      const double nb = std::exp(nv);
      if (!(na > 0.0) || !(nb > 0.0) || !std::isfinite(na + nb)) continue;
      const auto nr = residual(na, nb);
      if (norm(nr) < current) {
        u = nu;
        v = nv;
        a = na;
        b = nb;
        r = nr;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }

  if (!(norm(r) <= kAccept)) {
    throw SolverError("solve_beta_system: no convergence after " +
                          std::to_string(iter) + " iterations",
                      a, b, r.first, r.second);
  }

  BetaSolution out{a, b, iter, r.first, r.second, false};
  if (a >= kBetaShapeFloor && b >= kBetaShapeFloor) return out;

  // The Newton root lies outside the admissible box. Maximize the concave
  // objective a r1 + b r2 - log B(a, b) over [floor, inf)^2 instead of
  // clipping, which would not be the constrained maximizer: the optimum
  // is on an edge (one shape fixed at the floor) or at the corner.
  auto objective = [&](double x, double y) {
    return x * rhs_log_eta + y * rhs_log_1m_eta - log_beta(x, y);
  };
  // Maximizer over x >= floor of the slice with the other shape fixed;
  // the derivative rhs - psi(x) + psi(x + fixed) decreases in x.
  auto edge = [&](double rhs, double fixed) {
    auto slope = [&](double x) { return rhs - digamma(x) + digamma(x + fixed); };
    double lo = kBetaShapeFloor;
    if (slope(lo) <= 0.0) return lo;
    double hi = 2.0 * lo;
    while (slope(hi) > 0.0) {
      lo = hi;
      hi *= 2.0;
    }
    for (int k = 0; k < 200 && hi - lo > 1e-14 * hi; ++k) {
      const double mid = 0.5 * (lo + hi);
      (slope(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double a_edge = edge(rhs_log_eta, kBetaShapeFloor);
  const double b_edge = edge(rhs_log_1m_eta, kBetaShapeFloor);
  double best_a = a_edge, best_b = kBetaShapeFloor;
  if (objective(kBetaShapeFloor, b_edge) > objective(best_a, best_b)) {
    best_a = kBetaShapeFloor;
    best_b = b_edge;
  }
  const auto cr = residual(best_a, best_b);
  return {best_a, best_b, iter, cr.first, cr.second, true};
}

}  // namespace attn
