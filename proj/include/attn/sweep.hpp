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
#include <vector>

#include "attn/em.hpp"
#include "attn/inference.hpp"
#include "attn/model.hpp"
#include "attn/simulate.hpp"

namespace attn {

// How a simulated dataset is fitted.
struct FitVariant {
  std::string label = "known_mu";
  PriorFamily family = PriorFamily::Beta;
  MuMode mu_mode = MuMode::Fixed;
  RegularizerSpec regularizer = NoRegularizer{};
  int mixture_components = 3;
  int max_iters = 500;
  double tol_param = 1e-6;
  int grid_nodes = 1025;
};

struct LabeledRule {
  std::string label;
  FilterRule rule;
};

// One (m, n, mu, true prior, fit) combination; every rule is scored on the
// same fit.
struct SweepCell {
  int num_users = 400;
  int n_min = 50;
  int n_max = 100;
  double mu = 0.8;
  std::string prior_label;
  TruePriorSpec prior = BetaPrior{3.0, 5.0};
  FitVariant fit;
  std::vector<LabeledRule> rules;
};

struct RuleOutcome {
  std::string rule_label;
  double accuracy = 0.0;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  ModelParams params;
  // NaN when the true prior is outside the fitted family.
  double delta = 0.0;
  int iterations = 0;
  std::string stop_reason;
  std::vector<RuleOutcome> rules;
};

// ThresholdRule with a prior_quantile resolves to that quantile of `truth`.
FilterRule resolve_rule(const FilterRule& rule, const TruePriorSpec& truth);

// Fits one dataset with the given variant. Mixture variants take a single
// plug-in step from the default three-component start.
struct VariantFit {
  ModelParams params;
  int iterations = 0;
  std::string stop_reason;
};
VariantFit fit_variant(std::span<const UserHistory> histories, const FitVariant& variant,
                       double mu);

// simulate -> fit -> filter for one seed. Errors are captured, not thrown.
SeedOutcome run_seed(const SweepCell& cell, std::uint64_t seed);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for fewer than two values
};
// Ignores NaN entries.
Summary summarize(std::span<const double> values);

}  // namespace attn
