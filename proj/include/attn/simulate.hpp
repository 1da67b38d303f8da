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
#include "attn/random.hpp"

namespace attn {

// Generating distributions for eta. Broader than the fitted families so
// that misspecified fits can be studied.
struct BetaMixtureSpec {
  struct Component {
    double weight;
    double alpha;
    double beta;
  };
  std::vector<Component> components;
};

struct LogisticNormalSpec {
  double mean = 0.0;
  double sigma = 1.0;
};

struct DiscreteMassesSpec {
  struct Mass {
    double weight;
    double eta;
  };
  std::vector<Mass> masses;
};

using TruePriorSpec = std::variant<TwoPointPrior, BetaPrior, BetaMixtureSpec,
                                   LogisticNormalSpec, DiscreteMassesSpec>;

void validate(const TruePriorSpec& spec);
double sample_eta(const TruePriorSpec& spec, Rng& rng);
double prior_mean(const TruePriorSpec& spec);
double prior_cdf(const TruePriorSpec& spec, double eta);
// Smallest eta with CDF(eta) >= q.
double prior_quantile(const TruePriorSpec& spec, double q);

// The matching fitted-family parameters, when the spec lies in one.
std::optional<AttentivenessPrior> as_model_prior(const TruePriorSpec& spec);

// Per-item preference probability p ~ Beta(a, b); its mean must equal mu.
struct PerItemBeta {
  double a;
  double b;
};

struct SimulationScenario {
  std::string name;
  TruePriorSpec prior = BetaPrior{3.0, 5.0};
  double mu = 0.8;
  int num_users = 400;
  int n_min = 50;
  int n_max = 100;
  std::uint64_t seed = 1;
  std::optional<PerItemBeta> per_item_p;
};

void validate(const SimulationScenario& scenario);

struct SimulatedData {
  std::vector<AnnotationRecord> records;
  std::vector<std::pair<std::string, double>> truth;  // (user_id, eta)
};

// Each user draws from its own stream derived from (seed, user index), so
// the output does not depend on `workers`.
SimulatedData simulate_dataset(const SimulationScenario& scenario, int workers = 1);

std::string user_id_for(int index);

// Named scenarios. Throws ValidationError for unknown names.
SimulationScenario misspecification_suite(const std::string& name);
SimulationScenario scenario_preset(const std::string& name);
std::vector<std::string> preset_names();

struct ScoredPair {
  std::string item_id;
  double score_a = 0.0;
  double score_b = 0.0;
};

struct MuEstimate {
  double mu_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t num_pairs = 0;
  std::size_t ties = 0;
};

// Share of pairs where A outscores B, exact ties counting one half, with a
// Wilson 95% interval.
MuEstimate estimate_mu(std::span<const ScoredPair> pairs);

// Reward-model preference probabilities between generation models, by
// dataset. Throws ValidationError for unknown combinations.
double mu_preset(const std::string& dataset, const std::string& model_a,
                 const std::string& model_b);

}  // namespace attn
