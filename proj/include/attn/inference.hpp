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

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "attn/model.hpp"
#include "attn/posterior.hpp"

namespace attn {

// Attentive iff P(eta >= eta_star | data) >= level.
struct TailProbabilityRule {
  double eta_star = 0.5;
  double level = 0.95;
};

// Keep the top ceil(fraction * m) users by score.
struct TopFractionRule {
  double fraction = 0.5;
};

// Keep users whose score is at least `value`. When the threshold came from
// a quantile of the generating prior, `prior_quantile` records which one.
struct ThresholdRule {
  double value = 0.5;
  std::optional<double> prior_quantile;
};

using FilterRule = std::variant<TailProbabilityRule, TopFractionRule, ThresholdRule>;

enum class RankScore { Map, Mean };

struct FilterDecision {
  std::string user_id;
  bool attentive = false;
  FilterRule rule;
  double score = 0.0;
};

PosteriorSummary summarize_posterior(const UserHistory& history, const ModelParams& params,
                                     const QuadratureGrid& grid,
                                     std::span<const double> eta_stars = {});

bool classify_attentive(const PosteriorSummary& summary, double eta_star,
                        double level = 0.95);

// One decision per summary, in input order. TopFraction ranks by score
// descending, then mean_eta descending, then user_id ascending.
std::vector<FilterDecision> select_users(std::span<const PosteriorSummary> summaries,
                                         const FilterRule& rule,
                                         RankScore score = RankScore::Map);

struct FilterResult {
  std::vector<AnnotationRecord> records;
  std::vector<std::size_t> kept_indices;  // positions in the input
  std::size_t users_kept = 0;
  std::size_t records_kept = 0;
};

// Keeps records of attentive users in input order. Throws OrphanUsersError
// when a record's user has no decision.
FilterResult filter_dataset(std::span<const AnnotationRecord> records,
                            std::span<const FilterDecision> decisions);

// |selected and truly above| / |truly above|, where truly above means a
// ground-truth eta strictly greater than eta_threshold. Throws
// ValidationError when no user lies above the threshold.
double recovery_accuracy(std::span<const FilterDecision> decisions,
                         std::span<const std::pair<std::string, double>> true_etas,
                         double eta_threshold);

// max_k |theta_hat_k - theta_k| / |theta_k|; absolute error where the true
// value is zero. mu is included only when it is free.
double relative_error(const ModelParams& theta_hat, const ModelParams& theta_star);

}  // namespace attn
