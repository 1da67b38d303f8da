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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "attn/model.hpp"
#include "attn/posterior.hpp"
#include "attn/special.hpp"

namespace attn {

// Regularizer R(theta) added to Q in the M-step. Only mu is regularized.
struct NoRegularizer {};

// R = (a - 1) log mu + (b - 1) log(1 - mu): a Beta(a, b) log-prior on mu.
struct LogPriorOnMu {
  double a = 8.0;
  double b = 2.0;
};

// R = 0 on [lo, hi], -inf elsewhere.
struct BoxOnMu {
  double lo = 0.5;
  double hi = 1.0;
};

using RegularizerSpec = std::variant<NoRegularizer, LogPriorOnMu, BoxOnMu>;

void validate(const RegularizerSpec& reg);
double regularizer_value(const RegularizerSpec& reg, double mu);

struct EmConfig {
  int max_iters = 500;
  double tol_param = 1e-6;
  double tol_loglik = 1e-9;
  QuadratureGrid grid;
  RegularizerSpec regularizer = NoRegularizer{};
  ModelParams init;
  // Abort with StopReason::LikelihoodDecrease on a monotonicity violation.
  bool strict = false;
};

// Initial parameters used when the caller has none: q1 = 0.5,
// eta = (0.25, 0.75); Beta(2, 2); three logistic-normal components at
// logit means (-1.5, 0, 1.5); mu starts at the pooled label frequency
// clipped to [0.55, 0.95] when free.
ModelParams default_init(PriorFamily family, std::span<const UserHistory> histories,
                         double mu, MuMode mu_mode, int mixture_components = 3);

enum class StopReason { ParamTol, MaxIters, LikelihoodDecrease };
const char* stop_reason_name(StopReason reason);

struct IterationRecord {
  int iteration = 0;
  ModelParams params;
  double loglik = 0.0;     // observed-data log-likelihood
  double objective = 0.0;  // loglik + R(mu)
};

struct ClampEvent {
  int iteration = 0;
  std::string parameter;
  double value = 0.0;
};

struct FitReport {
  std::vector<IterationRecord> trajectory;
  bool converged = false;
  StopReason stop_reason = StopReason::MaxIters;
  std::vector<ClampEvent> clamp_events;
  // Iterations whose objective dropped by more than tol_loglik.
  std::vector<int> decrease_iterations;

  const ModelParams& final_params() const { return trajectory.back().params; }
  double final_loglik() const { return trajectory.back().loglik; }
};

// E-step for the two-point prior: (gamma1, gamma2), the posterior
// probabilities of the casual and attentive support points.
std::pair<double, double> posterior_two_point(const UserHistory& history,
                                              const ModelParams& params);

// E-step for continuous priors on the quadrature grid.
PosteriorSummary posterior_grid(const UserHistory& history, const ModelParams& params,
                                const QuadratureGrid& grid);

struct TwoPointUpdate {
  TwoPointPrior prior;
  bool swapped = false;
  bool clipped_lo = false;
  bool clipped_hi = false;
};

// Closed-form M-step for (q1, eta_lo, eta_hi) with mu held fixed.
// Throws DegenerateError when a component has zero expected label count.
TwoPointUpdate m_step_two_point(std::span<const std::pair<double, double>> posteriors,
                                std::span<const UserHistory> histories, double mu);

struct BetaUpdate {
  BetaPrior prior;
  BetaSolution solution;
};

// M-step for the Beta prior from per-user E[log eta], E[log(1 - eta)].
BetaUpdate m_step_beta(std::span<const PosteriorSummary> posteriors);
BetaUpdate m_step_beta(double mean_log_eta, double mean_log_1m_eta);

// Expected label counts at each support point, aggregated over users:
// ones[k] = sum_j P(eta_j = support[k]) * sum_z_j, zeros likewise.
struct ExpectedCounts {
  std::vector<double> support;
  std::vector<double> ones;
  std::vector<double> zeros;
};

ExpectedCounts expected_counts(std::span<const PosteriorSummary> posteriors,
                               std::span<const UserHistory> histories);

struct MuUpdate {
  double mu = 0.0;
  bool at_boundary = false;
};

inline constexpr double kMuSearchLo = 0.5 + 1e-4;
inline constexpr double kMuSearchHi = 1.0 - 1e-4;

// argmax over mu of the expected log-likelihood plus R(mu), by golden
// section to 1e-7 on [0.5 + 1e-4, 1 - 1e-4] intersected with any box.
MuUpdate m_step_mu(const ExpectedCounts& counts, const RegularizerSpec& reg);
MuUpdate m_step_mu(std::span<const PosteriorSummary> posteriors,
                   std::span<const UserHistory> histories, const RegularizerSpec& reg);

// Runs the EM iteration until the sup-norm parameter change drops below
// tol_param or max_iters is reached. Supports the two-point and Beta
// families; mixtures go through fit_mixture_prior.
FitReport em_fit(std::span<const UserHistory> histories, const EmConfig& config);

struct MixtureFit {
  LogisticNormalMixture mixture;
  double loglik = 0.0;  // of the logit-transformed samples
  int clipped_inputs = 0;
};

// Fits a K-component Gaussian mixture to logit(eta_hats): 5 seeded
// restarts, variance floor 1e-6, best likelihood kept. Components come back
// sorted by mean. Throws DegenerateError when a weight falls below 1/(10 m).
MixtureFit fit_logistic_normal_mixture(std::span<const double> eta_hats, int components,
                                       std::uint64_t seed = 0x5eed);

struct MixturePriorFit {
  ModelParams params;          // fitted mixture with the given mu
  MixtureFit gaussian;         // the logit-space Gaussian fit
  std::vector<double> eta_hats;  // per-user grid MAP under the base prior
  double loglik = 0.0;         // observed log-likelihood under the fit
};

// One plug-in M-step for the logistic-normal mixture family: per-user grid
// MAP under `base`, then a K-component Gaussian fit in logit space.
// Repeating the step shrinks every sigma to the variance floor, because the
// plug-in drops the posterior spread of each eta.
MixturePriorFit fit_mixture_prior(std::span<const UserHistory> histories, double mu,
                                  const QuadratureGrid& grid, int components,
                                  const LogisticNormalMixture& base,
                                  std::uint64_t seed = 0x5eed);

}  // namespace attn
