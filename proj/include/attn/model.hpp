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
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "attn/special.hpp"

namespace attn {

// One binary preference judgement. label == 1 means the response from
// model A was preferred. Item payloads (prompt and responses) stay opaque.
struct AnnotationRecord {
  std::string user_id;
  std::string item_id;
  int label = 0;

  friend bool operator==(const AnnotationRecord&,
                         const AnnotationRecord&) = default;
};

// A user's ordered labels plus the cached count of ones.
class UserHistory {
 public:
  UserHistory() = default;
  UserHistory(std::string user_id, std::vector<std::uint8_t> labels);

  const std::string& user_id() const { return user_id_; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  int num_labels() const { return static_cast<int>(labels_.size()); }
  int sum_z() const { return sum_z_; }

 private:
  std::string user_id_;
  std::vector<std::uint8_t> labels_;
  int sum_z_ = 0;
};

// Groups records by user in order of first appearance. Throws
// ValidationError on labels outside {0, 1} or duplicate (user, item) pairs.
std::vector<UserHistory> group_by_user(std::span<const AnnotationRecord> records);

// Attentiveness distribution P_eta families.

// q1 * delta(eta_lo) + (1 - q1) * delta(eta_hi)
struct TwoPointPrior {
  double q1 = 0.5;
  double eta_lo = 0.25;
  double eta_hi = 0.75;

  double q2() const { return 1.0 - q1; }
  friend bool operator==(const TwoPointPrior&, const TwoPointPrior&) = default;
};

struct BetaPrior {
  double alpha = 2.0;
  double beta = 2.0;
  friend bool operator==(const BetaPrior&, const BetaPrior&) = default;
};

struct LogisticNormalComponent {
  double weight = 1.0;
  double mean = 0.0;   // in logit space
  double sigma = 1.0;  // in logit space
  friend bool operator==(const LogisticNormalComponent&,
                         const LogisticNormalComponent&) = default;
};

// eta = sigmoid(X), X ~ sum_k weight_k N(mean_k, sigma_k^2)
struct LogisticNormalMixture {
  std::vector<LogisticNormalComponent> components;
  friend bool operator==(const LogisticNormalMixture&,
                         const LogisticNormalMixture&) = default;
};

using AttentivenessPrior =
    std::variant<TwoPointPrior, BetaPrior, LogisticNormalMixture>;

enum class PriorFamily { TwoPoint, Beta, LogisticNormalMixture };

PriorFamily family_of(const AttentivenessPrior& prior);
const char* family_name(PriorFamily family);

// Throws DomainError when the prior violates its family invariants.
// allow_degenerate_two_point admits eta_lo == eta_hi.
void validate(const AttentivenessPrior& prior,
              bool allow_degenerate_two_point = false);

// Log density of a continuous prior at eta, -inf outside the support.
// Throws DomainError for the two-point family.
double log_prior_density(const AttentivenessPrior& prior, double eta);

enum class MuMode { Fixed, Free };

struct ModelParams {
  AttentivenessPrior prior = TwoPointPrior{};
  double mu = 0.8;
  MuMode mu_mode = MuMode::Fixed;
};

// Throws DomainError unless 1/2 < mu < 1 and the prior is valid.
void validate(const ModelParams& params, bool allow_degenerate_two_point = false);

// Flattened scalar parameters, in a fixed order per family, with mu last
// when it is free. Used for sup-norm convergence and relative error.
std::vector<double> flatten(const ModelParams& params);
std::vector<std::string> parameter_names(const ModelParams& params);

// 1/2 + eta (mu - 1/2): probability a user with attentiveness eta labels 1.
double bernoulli_response_prob(double eta, double mu);

// Log-probability of one label.
double obs_loglik(int z, double mu, double eta);

// Log-likelihood of a whole history from (sum_z, n) only.
double user_loglik(int sum_z, int num_labels, double mu, double eta);
double user_loglik(const UserHistory& history, double mu, double eta);

// Distinct (n, sum_z) pairs with their multiplicities. The likelihood of a
// user depends on the history only through this pair.
struct CountGroup {
  int num_labels;
  int sum_z;
  int multiplicity;
};

struct SufficientStats {
  std::vector<CountGroup> groups;
  std::vector<std::size_t> group_of_user;  // index into groups, per user
  std::size_t num_users = 0;
};

SufficientStats sufficient_stats(std::span<const UserHistory> histories);

// log g and log(1 - g) at each support point, g = bernoulli_response_prob.
struct ResponseLogProbs {
  std::vector<double> log_g;
  std::vector<double> log_1mg;

  ResponseLogProbs(std::span<const double> support, double mu);
  double loglik(std::size_t k, int sum_z, int num_labels) const {
    return sum_z * log_g[k] + (num_labels - sum_z) * log_1mg[k];
  }
};

// log of int exp(user_loglik) dP_eta summed over users. Exact for the
// two-point family, trapezoidal on `grid` otherwise.
double observed_loglik(std::span<const UserHistory> histories,
                       const ModelParams& params, const QuadratureGrid& grid);
double observed_loglik(const SufficientStats& stats, const ModelParams& params,
                       const QuadratureGrid& grid);

}  // namespace attn
