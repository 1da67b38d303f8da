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

#pragma once

#include <memory>
#include <span>
#include <vector>

namespace attn {

// Digamma function psi(x) = Gamma'(x) / Gamma(x) for x > 0.
// Upward recurrence to x >= 6, then the asymptotic Bernoulli series.
double digamma(double x);

// Trigamma approximated by a central difference of digamma.
double trigamma_fd(double x, double step = 1e-6);

// log B(a, b) = lgamma(a) + lgamma(b) - lgamma(a + b).
double log_beta(double a, double b);

// log(sum(exp(v))) with max shift. -inf entries are allowed; returns -inf
// iff every entry is -inf. Throws DomainError on empty input.
double log_sum_exp(std::span<const double> values);

// Trapezoidal rule on a uniform grid over [0, 1]. Copies share storage.
class QuadratureGrid {
 public:
  static constexpr std::size_t kDefaultNodes = 1025;

  explicit QuadratureGrid(std::size_t num_nodes = kDefaultNodes);

  std::size_t size() const { return nodes_->size(); }
  std::span<const double> nodes() const { return *nodes_; }
  std::span<const double> weights() const { return *weights_; }
  std::span<const double> log_weights() const { return *log_weights_; }
  double spacing() const { return 1.0 / static_cast<double>(size() - 1); }

 private:
  std::shared_ptr<const std::vector<double>> nodes_;
  std::shared_ptr<const std::vector<double>> weights_;
  std::shared_ptr<const std::vector<double>> log_weights_;
};

// (E[log eta], E[log(1 - eta)]) for eta ~ Beta(alpha, beta).
struct BetaLogMoments {
  double log_eta;
  double log_1m_eta;
};

BetaLogMoments beta_log_moments(double alpha, double beta);

struct BetaSolution {
  double alpha;
  double beta;
  int iterations;
  double residual_log_eta;
  double residual_log_1m_eta;
  bool clamped;  // the root lies outside alpha, beta >= 1 + 1e-6; the result
                 // is the constrained maximizer on that box instead
};

inline constexpr double kBetaShapeFloor = 1.0 + 1e-6;

// Solves psi(a) - psi(a + b) = rhs_log_eta and
//        psi(b) - psi(a + b) = rhs_log_1m_eta
// by damped Newton in (log a, log b). Throws DomainError when either
// right-hand side is not strictly negative, SolverError after 200
// iterations without convergence.
BetaSolution solve_beta_system(double rhs_log_eta, double rhs_log_1m_eta);

}  // namespace attn
