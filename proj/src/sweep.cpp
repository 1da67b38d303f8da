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

#include "attn/sweep.hpp"

#include <cmath>
#include <exception>
#include <limits>

#include "attn/error.hpp"

namespace attn {

FilterRule resolve_rule(const FilterRule& rule, const TruePriorSpec& truth) {
  if (const auto* thr = std::get_if<ThresholdRule>(&rule); thr && thr->prior_quantile) {
    return ThresholdRule{prior_quantile(truth, *thr->prior_quantile), thr->prior_quantile};
  }
  return rule;
}

VariantFit fit_variant(std::span<const UserHistory> histories, const FitVariant& variant,
                       double mu) {
  VariantFit out;
  const QuadratureGrid grid(variant.grid_nodes);
  if (variant.family == PriorFamily::LogisticNormalMixture) {
    const auto base = default_init(PriorFamily::LogisticNormalMixture, histories, mu,
                                   MuMode::Fixed);
    auto fit = fit_mixture_prior(histories, mu, grid, variant.mixture_components,
                                 std::get<LogisticNormalMixture>(base.prior));
    out.params = std::move(fit.params);
    out.iterations = 1;
    out.stop_reason = "plug_in_step";
    return out;
  }
  EmConfig config;
  config.max_iters = variant.max_iters;
  config.tol_param = variant.tol_param;
  config.grid = grid;
  config.regularizer = variant.regularizer;
  config.init = default_init(variant.family, histories, mu, variant.mu_mode);
  const FitReport report = em_fit(histories, config);
  out.params = report.final_params();
  out.iterations = report.trajectory.back().iteration;
  out.stop_reason = stop_reason_name(report.stop_reason);
  return out;
}

SeedOutcome run_seed(const SweepCell& cell, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  try {
    SimulationScenario sc;
    sc.name = cell.prior_label;
    sc.prior = cell.prior;
    sc.mu = cell.mu;
    sc.num_users = cell.num_users;
    sc.n_min = cell.n_min;
    sc.n_max = cell.n_max;
    sc.seed = seed;
    const SimulatedData data = simulate_dataset(sc);
    const auto histories = group_by_user(data.records);

    const VariantFit fit = fit_variant(histories, cell.fit, cell.mu);
    out.params = fit.params;
    out.iterations = fit.iterations;
    out.stop_reason = fit.stop_reason;

    out.delta = std::numeric_limits<double>::quiet_NaN();
    if (auto truth = as_model_prior(cell.prior);
        truth && family_of(*truth) == family_of(fit.params.prior)) {
      out.delta = relative_error(fit.params, ModelParams{*truth, cell.mu, fit.params.mu_mode});
    }

    const QuadratureGrid grid(cell.fit.grid_nodes);
    std::vector<PosteriorSummary> summaries;
    summaries.reserve(histories.size());
    for (const auto& h : histories) summaries.push_back(summarize_posterior(h, fit.params, grid));
    const double median = prior_quantile(cell.prior, 0.5);
    for (const auto& r : cell.rules) {
      const auto decisions = select_users(summaries, resolve_rule(r.rule, cell.prior));
      out.rules.push_back({r.label, recovery_accuracy(decisions, data.truth, median)});
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    ++s.count;
    sum += v;
  }
  if (s.count == 0) {
    s.mean = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = sum / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) {
      if (!std::isnan(v)) ss += (v - s.mean) * (v - s.mean);
    }
    s.sd = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

}  // namespace attn
