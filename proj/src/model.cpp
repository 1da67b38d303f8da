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

#include "attn/model.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <unordered_map>

#include "attn/error.hpp"

namespace attn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// x * log(y) with 0 * log(0) = 0.
double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DomainError(std::string(what) + " must lie in [0, 1], got " +
                      std::to_string(v));
  }
}

}  // namespace

UserHistory::UserHistory(std::string user_id, std::vector<std::uint8_t> labels)
    : user_id_(std::move(user_id)), labels_(std::move(labels)) {
  for (auto z : labels_) {
    if (z > 1) throw ValidationError("label must be 0 or 1 for user " + user_id_);
    sum_z_ += z;
  }
}

std::vector<UserHistory> group_by_user(std::span<const AnnotationRecord> records) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::uint8_t>> labels;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (r.label != 0 && r.label != 1) {
      throw ValidationError("label must be 0 or 1 (user " + r.user_id +
                            ", item " + r.item_id + ")");
    }
    if (!seen.emplace(r.user_id, r.item_id).second) {
      throw ValidationError("duplicate (user_id, item_id) pair: (" + r.user_id +
                            ", " + r.item_id + ")");
    }
    auto [it, inserted] = labels.try_emplace(r.user_id);
    if (inserted) order.push_back(r.user_id);
    it->second.push_back(static_cast<std::uint8_t>(r.label));
  }
  std::vector<UserHistory> out;
  out.reserve(order.size());
  for (auto& id : order) out.emplace_back(id, std::move(labels[id]));
  return out;
}

PriorFamily family_of(const AttentivenessPrior& prior) {
  return static_cast<PriorFamily>(prior.index());
}

const char* family_name(PriorFamily family) {
  switch (family) {
    case PriorFamily::TwoPoint: return "two_point";
    case PriorFamily::Beta: return "beta";
    case PriorFamily::LogisticNormalMixture: return "logistic_normal_mixture";
  }
  return "unknown";
}

void validate(const AttentivenessPrior& prior, bool allow_degenerate_two_point) {
  std::visit(
      Overloaded{
          [&](const TwoPointPrior& p) {
            check_unit(p.q1, "q1");
            check_unit(p.eta_lo, "eta_lo");
            check_unit(p.eta_hi, "eta_hi");
            const bool ordered = allow_degenerate_two_point
                                     ? p.eta_lo <= p.eta_hi
                                     : p.eta_lo < p.eta_hi;
            if (!ordered) throw DomainError("two-point prior requires eta_lo < eta_hi");
          },
          [](const BetaPrior& p) {
            if (!(p.alpha > 1.0) || !(p.beta > 1.0) || !std::isfinite(p.alpha) ||
                !std::isfinite(p.beta)) {
              throw DomainError("beta prior requires alpha > 1 and beta > 1");
            }
          },
          [](const LogisticNormalMixture& p) {
            if (p.components.empty()) throw DomainError("mixture has no components");
            double total = 0.0;
            for (const auto& c : p.components) {
              if (!(c.weight > 0.0 && c.weight <= 1.0)) {
                throw DomainError("mixture weights must lie in (0, 1]");
              }
              if (!(c.sigma > 0.0) || !std::isfinite(c.mean)) {
                throw DomainError("mixture components need sigma > 0 and a finite mean");
              }
              total += c.weight;
            }
            if (std::abs(total - 1.0) > 1e-12) {
              throw DomainError("mixture weights must sum to 1");
            }
          }},
      prior);
}

double log_prior_density(const AttentivenessPrior& prior, double eta) {
  return std::visit(
      Overloaded{
          [](const TwoPointPrior&) -> double {
            throw DomainError("two-point prior has no density");
          },
          [eta](const BetaPrior& p) -> double {
            if (eta < 0.0 || eta > 1.0) return kNegInf;
            return xlogy(p.alpha - 1.0, eta) + xlogy(p.beta - 1.0, 1.0 - eta) -
                   log_beta(p.alpha, p.beta);
          },
          [eta](const LogisticNormalMixture& p) -> double {
            if (!(eta > 0.0 && eta < 1.0)) return kNegInf;
            const double x = std::log(eta / (1.0 - eta));
            std::vector<double> terms;
            terms.reserve(p.components.size());
            for (const auto& c : p.components) {
              const double u = (x - c.mean) / c.sigma;
              terms.push_back(std::log(c.weight) - std::log(c.sigma) -
                              0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * u * u);
            }
            return log_sum_exp(terms) - std::log(eta) - std::log1p(-eta);
          }},
      prior);
}

void validate(const ModelParams& params, bool allow_degenerate_two_point) {
  if (!(params.mu > 0.5 && params.mu < 1.0)) {
    throw DomainError("mu must lie strictly between 1/2 and 1, got " +
                      std::to_string(params.mu));
  }
  validate(params.prior, allow_degenerate_two_point);
}

std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> out = std::visit(
      Overloaded{[](const TwoPointPrior& p) {
                   return std::vector<double>{p.q1, p.eta_lo, p.eta_hi};
                 },
                 [](const BetaPrior& p) { return std::vector<double>{p.alpha, p.beta}; },
                 [](const LogisticNormalMixture& p) {
                   std::vector<double> v;
                   for (const auto& c : p.components) {
                     v.insert(v.end(), {c.weight, c.mean, c.sigma});
                   }
                   return v;
                 }},
      params.prior);
  if (params.mu_mode == MuMode::Free) out.push_back(params.mu);
  return out;
}

std::vector<std::string> parameter_names(const ModelParams& params) {
  std::vector<std::string> out = std::visit(
      Overloaded{[](const TwoPointPrior&) {
                   return std::vector<std::string>{"q1", "eta_lo", "eta_hi"};
                 },
                 [](const BetaPrior&) { return std::vector<std::string>{"alpha", "beta"}; },
                 [](const LogisticNormalMixture& p) {
                   std::vector<std::string> v;
                   for (std::size_t k = 0; k < p.components.size(); ++k) {
                     const auto s = std::to_string(k);
                     v.insert(v.end(), {"weight" + s, "mean" + s, "sigma" + s});
                   }
                   return v;
                 }},
      params.prior);
  if (params.mu_mode == MuMode::Free) out.emplace_back("mu");
  return out;
}

double bernoulli_response_prob(double eta, double mu) {
  check_unit(eta, "eta");
  if (!(mu > 0.0 && mu < 1.0)) {
    throw DomainError("mu must lie in (0, 1), got " + std::to_string(mu));
  }
  return 0.5 + eta * (mu - 0.5);
}

double obs_loglik(int z, double mu, double eta) {
  if (z != 0 && z != 1) throw DomainError("label must be 0 or 1");
  const double g = bernoulli_response_prob(eta, mu);
  return z == 1 ? std::log(g) : std::log(1.0 - g);
}

double user_loglik(int sum_z, int num_labels, double mu, double eta) {
  if (sum_z < 0 || sum_z > num_labels) {
    throw DomainError("user_loglik: need 0 <= sum_z <= n");
  }
  const double g = bernoulli_response_prob(eta, mu);
  return xlogy(sum_z, g) + xlogy(num_labels - sum_z, 1.0 - g);
}

double user_loglik(const UserHistory& history, double mu, double eta) {
  return user_loglik(history.sum_z(), history.num_labels(), mu, eta);
}

SufficientStats sufficient_stats(std::span<const UserHistory> histories) {
  SufficientStats out;
  out.num_users = histories.size();
  out.group_of_user.reserve(histories.size());
  std::map<std::pair<int, int>, std::size_t> index;
  for (const auto& h : histories) {
    auto [it, inserted] =
        index.try_emplace({h.num_labels(), h.sum_z()}, out.groups.size());
    if (inserted) out.groups.push_back({h.num_labels(), h.sum_z(), 0});
    ++out.groups[it->second].multiplicity;
    out.group_of_user.push_back(it->second);
  }
  return out;
}

ResponseLogProbs::ResponseLogProbs(std::span<const double> support, double mu) {
  log_g.reserve(support.size());
  log_1mg.reserve(support.size());
  for (double eta : support) {
    const double g = bernoulli_response_prob(eta, mu);
    log_g.push_back(std::log(g));
    log_1mg.push_back(std::log1p(-g));
  }
}

double observed_loglik(std::span<const UserHistory> histories,
                       const ModelParams& params, const QuadratureGrid& grid) {
  return observed_loglik(sufficient_stats(histories), params, grid);
}

double observed_loglik(const SufficientStats& stats, const ModelParams& params,
                       const QuadratureGrid& grid) {
  validate(params, /*allow_degenerate_two_point=*/true);
  double total = 0.0;
  if (const auto* tp = std::get_if<TwoPointPrior>(&params.prior)) {
    const double support[2] = {tp->eta_lo, tp->eta_hi};
    const ResponseLogProbs lp(support, params.mu);
    const double log_q1 = std::log(tp->q1);
    const double log_q2 = std::log(tp->q2());
    for (const auto& g : stats.groups) {
      const double terms[2] = {log_q1 + lp.loglik(0, g.sum_z, g.num_labels),
                               log_q2 + lp.loglik(1, g.sum_z, g.num_labels)};
      total += g.multiplicity * log_sum_exp(terms);
    }
    return total;
  }

  const auto nodes = grid.nodes();
  const auto log_w = grid.log_weights();
  const ResponseLogProbs lp(nodes, params.mu);
  std::vector<double> base(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    base[k] = log_w[k] + log_prior_density(params.prior, nodes[k]);
  }
  std::vector<double> terms(nodes.size());
  for (const auto& g : stats.groups) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      terms[k] = base[k] + lp.loglik(k, g.sum_z, g.num_labels);
    }
    const double marginal = log_sum_exp(terms);
    if (!std::isfinite(marginal)) {
      throw NumericError("observed_loglik: marginal likelihood underflowed");
    }
    total += g.multiplicity * marginal;
  }
  return total;
}

}  // namespace attn
