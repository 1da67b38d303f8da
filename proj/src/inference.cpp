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

#include "attn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "attn/em.hpp"
#include "attn/error.hpp"

namespace attn {

PosteriorSummary summarize_posterior(const UserHistory& history, const ModelParams& params,
                                     const QuadratureGrid& grid,
                                     std::span<const double> eta_stars) {
  PosteriorSummary out;
  if (const auto* tp = std::get_if<TwoPointPrior>(&params.prior)) {
    const auto [g1, g2] = posterior_two_point(history, params);
    out.user_id = history.user_id();
    out.kind = PosteriorSummary::Kind::PointMasses;
    out.support = {tp->eta_lo, tp->eta_hi};
    out.masses = {g1, g2};
    out.map_eta = g2 > g1 ? tp->eta_hi : tp->eta_lo;
    out.mean_eta = g1 * tp->eta_lo + g2 * tp->eta_hi;
    out.expected_log_eta = std::nan("");
    out.expected_log_1m_eta = std::nan("");
  } else {
    out = posterior_grid(history, params, grid);
  }
  for (double s : eta_stars) out.tail_probs.emplace_back(s, out.tail_prob(s));
  return out;
}

bool classify_attentive(const PosteriorSummary& summary, double eta_star, double level) {
  return summary.tail_prob(eta_star) >= level;
}

std::vector<FilterDecision> select_users(std::span<const PosteriorSummary> summaries,
                                         const FilterRule& rule, RankScore score) {
  if (summaries.empty()) throw ValidationError("select_users: no summaries");
  auto score_of = [score](const PosteriorSummary& s) {
    return score == RankScore::Map ? s.map_eta : s.mean_eta;
  };

  std::vector<FilterDecision> out;
  out.reserve(summaries.size());
  for (const auto& s : summaries) out.push_back({s.user_id, false, rule, score_of(s)});

  if (const auto* top = std::get_if<TopFractionRule>(&rule)) {
    if (!(top->fraction > 0.0 && top->fraction <= 1.0)) {
      throw ValidationError("select_users: fraction must lie in (0, 1]");
    }
    const std::size_t m = summaries.size();
    const auto keep = std::min<std::size_t>(
        m, static_cast<std::size_t>(std::ceil(top->fraction * static_cast<double>(m) - 1e-9)));
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = out[a].score, sb = out[b].score;
      if (sa != sb) return sa > sb;
      if (summaries[a].mean_eta != summaries[b].mean_eta) {
        return summaries[a].mean_eta > summaries[b].mean_eta;
      }
      return summaries[a].user_id < summaries[b].user_id;
    });
    for (std::size_t i = 0; i < keep; ++i) out[order[i]].attentive = true;
  } else if (const auto* thr = std::get_if<ThresholdRule>(&rule)) {
    for (auto& d : out) d.attentive = d.score >= thr->value;
  } else {
    const auto& tail = std::get<TailProbabilityRule>(rule);
    for (std::size_t j = 0; j < summaries.size(); ++j) {
      out[j].attentive = classify_attentive(summaries[j], tail.eta_star, tail.level);
    }
  }
  return out;
}

FilterResult filter_dataset(std::span<const AnnotationRecord> records,
                            std::span<const FilterDecision> decisions) {
  std::unordered_map<std::string, bool> attentive;
  for (const auto& d : decisions) attentive[d.user_id] = d.attentive;

  std::vector<std::string> orphans;
  std::unordered_set<std::string> orphan_set;
  for (const auto& r : records) {
    if (!attentive.contains(r.user_id) && orphan_set.insert(r.user_id).second) {
      orphans.push_back(r.user_id);
    }
  }
  if (!orphans.empty()) {
    std::string msg = "filter_dataset: users without a decision:";
    for (const auto& id : orphans) msg += " " + id;
    throw OrphanUsersError(msg, std::move(orphans));
  }

  FilterResult out;
  std::unordered_set<std::string> kept_users;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!attentive.at(records[i].user_id)) continue;
    out.records.push_back(records[i]);
    out.kept_indices.push_back(i);
    kept_users.insert(records[i].user_id);
  }
  out.users_kept = kept_users.size();
  out.records_kept = out.records.size();
  return out;
}

double recovery_accuracy(std::span<const FilterDecision> decisions,
                         std::span<const std::pair<std::string, double>> true_etas,
                         double eta_threshold) {
  std::unordered_map<std::string, bool> selected;
  for (const auto& d : decisions) selected[d.user_id] = d.attentive;
  std::size_t above = 0, hit = 0;
  for (const auto& [id, eta] : true_etas) {
    if (!(eta > eta_threshold)) continue;
    ++above;
    if (auto it = selected.find(id); it != selected.end() && it->second) ++hit;
  }
  if (above == 0) throw ValidationError("recovery_accuracy: no user lies above the threshold");
  return static_cast<double>(hit) / static_cast<double>(above);
}

double relative_error(const ModelParams& theta_hat, const ModelParams& theta_star) {
  if (family_of(theta_hat.prior) != family_of(theta_star.prior) ||
      theta_hat.mu_mode != theta_star.mu_mode) {
    throw ValidationError("relative_error: parameter families differ");
  }
  const auto a = flatten(theta_hat);
  const auto b = flatten(theta_star);
  if (a.size() != b.size()) throw ValidationError("relative_error: parameter counts differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double err = std::abs(a[k] - b[k]);
    worst = std::max(worst, b[k] == 0.0 ? err : err / std::abs(b[k]));
  }
  return worst;
}

}  // namespace attn
