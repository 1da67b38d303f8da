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

#include "attn/simulate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>

#include "attn/error.hpp"

namespace attn {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void check_weights(double total) {
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("prior weights must sum to 1");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<AnnotationRecord> simulate_user(const SimulationScenario& sc, int j,
                                            double& eta_out) {
  Rng rng(derive_seed(sc.seed, static_cast<std::uint64_t>(j)));
  const double eta = sample_eta(sc.prior, rng);
  eta_out = eta;
  const auto n = static_cast<int>(rng.uniform_int(sc.n_min, sc.n_max));
  const std::string uid = user_id_for(j);
  std::vector<AnnotationRecord> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    int z;
    if (rng.uniform() < eta) {
      // Attentive on this item: follow the item's preference probability.
      const double p = sc.per_item_p ? rng.beta(sc.per_item_p->a, sc.per_item_p->b) : sc.mu;
      z = rng.uniform() < p ? 1 : 0;
    } else {
      z = rng.uniform() < 0.5 ? 1 : 0;
    }
    out.push_back({uid, uid + ":" + std::to_string(i), z});
  }
  return out;
}

SimulationScenario base_scenario(std::string name, TruePriorSpec prior, int m, int n_min,
                                 int n_max) {
  SimulationScenario s;
  s.name = std::move(name);
  s.prior = std::move(prior);
  s.mu = 0.8;
  s.num_users = m;
  s.n_min = n_min;
  s.n_max = n_max;
  return s;
}

struct MuTableRow {
  const char* dataset;
  const char* model_a;
  std::array<double, 4> mu;  // against qwen7b, llama8b, llama1b, qwen0.5b
};

constexpr std::array<const char*, 4> kModels = {"qwen7b", "llama8b", "llama1b", "qwen0.5b"};

constexpr MuTableRow kMuTable[] = {
    {"ultrafeedback", "qwen7b", {0.5, 0.74, 0.90, 0.98}},
    {"ultrafeedback", "llama8b", {0.26, 0.5, 0.75, 0.92}},
    {"ultrafeedback", "llama1b", {0.10, 0.25, 0.5, 0.79}},
    {"ultrafeedback", "qwen0.5b", {0.02, 0.18, 0.21, 0.5}},
    {"helpsteer3", "qwen7b", {0.5, 0.72, 0.93, 0.98}},
    {"helpsteer3", "llama8b", {0.28, 0.5, 0.80, 0.96}},
    {"helpsteer3", "llama1b", {0.07, 0.20, 0.5, 0.79}},
    {"helpsteer3", "qwen0.5b", {0.02, 0.04, 0.21, 0.5}},
    {"hh", "qwen7b", {0.5, 0.75, 0.90, 0.99}},
    {"hh", "llama8b", {0.25, 0.5, 0.7, 0.93}},
    {"hh", "llama1b", {0.10, 0.30, 0.5, 0.82}},
    {"hh", "qwen0.5b", {0.01, 0.07, 0.18, 0.5}},
};

}  // namespace

void validate(const TruePriorSpec& spec) {
  std::visit(Overloaded{
                 [](const TwoPointPrior& p) { validate(AttentivenessPrior{p}, true); },
                 [](const BetaPrior& p) {
                   if (!(p.alpha > 0.0) || !(p.beta > 0.0)) {
                     throw DomainError("Beta shapes must be > 0");
                   }
                 },
                 [](const BetaMixtureSpec& p) {
                   if (p.components.empty()) throw DomainError("empty Beta mixture");
                   double total = 0.0;
                   for (const auto& c : p.components) {
                     if (!(c.weight >= 0.0) || !(c.alpha > 0.0) || !(c.beta > 0.0)) {
                       throw DomainError("Beta mixture needs weights >= 0 and shapes > 0");
                     }
                     total += c.weight;
                   }
                   check_weights(total);
                 },
                 [](const LogisticNormalSpec& p) {
                   if (!(p.sigma > 0.0) || !std::isfinite(p.mean)) {
                     throw DomainError("logistic-normal needs sigma > 0");
                   }
                 },
                 [](const DiscreteMassesSpec& p) {
                   if (p.masses.empty()) throw DomainError("no point masses");
                   double total = 0.0;
                   for (const auto& m : p.masses) {
                     if (!(m.weight >= 0.0) || !(m.eta >= 0.0 && m.eta <= 1.0)) {
                       throw DomainError("point masses need weights >= 0 and eta in [0, 1]");
                     }
                     total += m.weight;
                   }
                   check_weights(total);
                 }},
             spec);
}

double sample_eta(const TruePriorSpec& spec, Rng& rng) {
  return std::visit(
      Overloaded{[&](const TwoPointPrior& p) { return rng.uniform() < p.q1 ? p.eta_lo : p.eta_hi; },
                 [&](const BetaPrior& p) { return rng.beta(p.alpha, p.beta); },
                 [&](const BetaMixtureSpec& p) {
                   const double u = rng.uniform();
                   double acc = 0.0;
                   const auto* pick = &p.components.back();
                   for (const auto& c : p.components) {
                     acc += c.weight;
                     if (u < acc) {
                       pick = &c;
                       break;
                     }
                   }
                   return rng.beta(pick->alpha, pick->beta);
                 },
                 [&](const LogisticNormalSpec& p) { return sigmoid(p.mean + p.sigma * rng.normal()); },
                 [&](const DiscreteMassesSpec& p) {
                   const double u = rng.uniform();
                   double acc = 0.0;
                   for (const auto& m : p.masses) {
                     acc += m.weight;
                     if (u < acc) return m.eta;
                   }
                   return p.masses.back().eta;
                 }},
      spec);
}

double prior_mean(const TruePriorSpec& spec) {
  return std::visit(
      Overloaded{[](const TwoPointPrior& p) { return p.q1 * p.eta_lo + p.q2() * p.eta_hi; },
                 [](const BetaPrior& p) { return p.alpha / (p.alpha + p.beta); },
                 [](const BetaMixtureSpec& p) {
                   double s = 0.0;
                   for (const auto& c : p.components) s += c.weight * c.alpha / (c.alpha + c.beta);
                   return s;
                 },
                 [](const LogisticNormalSpec& p) {
                   // E[sigmoid(m + s Z)] by the midpoint rule over normal quantiles.
                   const boost::math::normal_distribution<double> z;
                   double s = 0.0;
                   constexpr int kSteps = 20000;
                   for (int i = 0; i < kSteps; ++i) {
                     const double u = (i + 0.5) / kSteps;
                     s += sigmoid(p.mean + p.sigma * boost::math::quantile(z, u));
                   }
                   return s / kSteps;
                 },
                 [](const DiscreteMassesSpec& p) {
                   double s = 0.0;
                   for (const auto& m : p.masses) s += m.weight * m.eta;
                   return s;
                 }},
      spec);
}

double prior_cdf(const TruePriorSpec& spec, double eta) {
  if (eta < 0.0) return 0.0;
  if (eta >= 1.0) return 1.0;
  return std::visit(
      Overloaded{[eta](const TwoPointPrior& p) {
                   return (p.eta_lo <= eta ? p.q1 : 0.0) + (p.eta_hi <= eta ? p.q2() : 0.0);
                 },
                 [eta](const BetaPrior& p) {
                   return boost::math::cdf(boost::math::beta_distribution<double>(p.alpha, p.beta), eta);
                 },
                 [eta](const BetaMixtureSpec& p) {
                   double s = 0.0;
                   for (const auto& c : p.components) {
                     s += c.weight *
                          boost::math::cdf(boost::math::beta_distribution<double>(c.alpha, c.beta), eta);
                   }
                   return s;
                 },
                 [eta](const LogisticNormalSpec& p) {
                   if (eta <= 0.0) return 0.0;
                   const double x = std::log(eta / (1.0 - eta));
                   return boost::math::cdf(boost::math::normal_distribution<double>(p.mean, p.sigma), x);
                 },
                 [eta](const DiscreteMassesSpec& p) {
                   double s = 0.0;
                   for (const auto& m : p.masses) s += m.eta <= eta ? m.weight : 0.0;
                   return s;
                 }},
      spec);
}

double prior_quantile(const TruePriorSpec& spec, double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  if (const auto* b = std::get_if<BetaPrior>(&spec)) {
    return boost::math::quantile(boost::math::beta_distribution<double>(b->alpha, b->beta), q);
  }
  if (const auto* ln = std::get_if<LogisticNormalSpec>(&spec)) {
    if (q == 0.0) return 0.0;
    if (q == 1.0) return 1.0;
    return sigmoid(boost::math::quantile(boost::math::normal_distribution<double>(ln->mean, ln->sigma), q));
  }
  // Discrete supports: smallest support point reaching q.
  std::vector<double> support;
  if (const auto* tp = std::get_if<TwoPointPrior>(&spec)) {
    support = {tp->eta_lo, tp->eta_hi};
  } else if (const auto* dm = std::get_if<DiscreteMassesSpec>(&spec)) {
    for (const auto& m : dm->masses) support.push_back(m.eta);
  }
  if (!support.empty()) {
    std::sort(support.begin(), support.end());
    for (double s : support) {
      if (prior_cdf(spec, s) >= q - 1e-12) return s;
    }
    return support.back();
  }
  // Continuous mixtures: bisection on the CDF.
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (prior_cdf(spec, mid) >= q ? hi : lo) = mid;
  }
  return hi;
}

std::optional<AttentivenessPrior> as_model_prior(const TruePriorSpec& spec) {
  if (const auto* tp = std::get_if<TwoPointPrior>(&spec)) return AttentivenessPrior{*tp};
  if (const auto* b = std::get_if<BetaPrior>(&spec)) return AttentivenessPrior{*b};
  if (const auto* ln = std::get_if<LogisticNormalSpec>(&spec)) {
    return AttentivenessPrior{LogisticNormalMixture{{{1.0, ln->mean, ln->sigma}}}};
  }
  return std::nullopt;
}

void validate(const SimulationScenario& sc) {
  validate(sc.prior);
  if (!(sc.mu > 0.0 && sc.mu < 1.0)) throw DomainError("scenario mu must lie in (0, 1)");
  if (sc.num_users < 1) throw DomainError("scenario needs at least one user");
  if (sc.n_min < 1 || sc.n_min > sc.n_max) {
    throw DomainError("scenario needs 1 <= n_min <= n_max");
  }
  if (sc.per_item_p) {
    const auto [a, b] = *sc.per_item_p;
    if (!(a > 0.0) || !(b > 0.0)) throw DomainError("per-item Beta shapes must be > 0");
    if (std::abs(a / (a + b) - sc.mu) > 1e-9) {
      throw DomainError("per-item preference model mean must equal mu");
    }
  }
}

std::string user_id_for(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%06d", index);
  return buf;
}

SimulatedData simulate_dataset(const SimulationScenario& scenario, int workers) {
  validate(scenario);
  const int m = scenario.num_users;
  std::vector<std::vector<AnnotationRecord>> per_user(m);
  std::vector<double> etas(m);
  workers = std::clamp(workers, 1, m);
  if (workers == 1) {
    for (int j = 0; j < m; ++j) per_user[j] = simulate_user(scenario, j, etas[j]);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int j = w; j < m; j += workers) per_user[j] = simulate_user(scenario, j, etas[j]);
      });
    }
  }
  SimulatedData out;
  for (int j = 0; j < m; ++j) {
    out.truth.emplace_back(user_id_for(j), etas[j]);
    std::move(per_user[j].begin(), per_user[j].end(), std::back_inserter(out.records));
  }
  return out;
}

SimulationScenario misspecification_suite(const std::string& name) {
  if (name == "beta_mixture_fig4") {
    return base_scenario(name, BetaMixtureSpec{{{0.6, 4, 16}, {0.4, 16, 4}}}, 400, 50, 100);
  }
  if (name == "logistic_normal_fig4") {
    return base_scenario(name, LogisticNormalSpec{-0.6, 0.8}, 400, 50, 100);
  }
  if (name == "three_mass_d2") {
    return base_scenario(name, DiscreteMassesSpec{{{0.2, 0.2}, {0.6, 0.6}, {0.2, 0.9}}}, 4000,
                         500, 500);
  }
  if (name == "three_beta_d2") {
    return base_scenario(name, BetaMixtureSpec{{{0.2, 8, 32}, {0.6, 20, 20}, {0.2, 32, 8}}},
                         4000, 500, 500);
  }
  throw ValidationError("unknown misspecification scenario: " + name);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (auto [m, n] : {std::pair{200, 50}, {400, 50}, {200, 100}, {400, 100}, {800, 100}, {800, 200}}) {
    const auto suffix = "_" + std::to_string(m) + "_" + std::to_string(n);
    out.push_back("table3_twopoint" + suffix);
    out.push_back("table3_beta" + suffix);
  }
  out.insert(out.end(), {"fig3_twopoint", "fig3_beta", "beta_mixture_fig4", "logistic_normal_fig4",
                         "three_mass_d2", "three_beta_d2", "ultrafeedback_qwen7b_qwen0.5b"});
  return out;
}

SimulationScenario scenario_preset(const std::string& name) {
  int m = 0, n = 0;
  char family[16] = {};
  if (std::sscanf(name.c_str(), "table3_%15[a-z]_%d_%d", family, &m, &n) == 3) {
    const std::string fam = family;
    if (fam == "twopoint") return base_scenario(name, TwoPointPrior{0.6, 0.4, 0.98}, m, n, n);
    if (fam == "beta") return base_scenario(name, BetaPrior{3, 5}, m, n, n);
  }
  if (name == "fig3_twopoint") return base_scenario(name, TwoPointPrior{0.6, 0.4, 0.98}, 400, 50, 100);
  if (name == "fig3_beta") return base_scenario(name, BetaPrior{3, 5}, 400, 50, 100);
  if (name == "ultrafeedback_qwen7b_qwen0.5b") {
    auto s = base_scenario(name, TwoPointPrior{0.2, 0.2, 0.98}, 400, 100, 100);
    s.mu = mu_preset("ultrafeedback", "qwen7b", "qwen0.5b");
    return s;
  }
  return misspecification_suite(name);
}

MuEstimate estimate_mu(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw ValidationError("estimate_mu: no scored pairs");
  MuEstimate out;
  double wins = 0.0;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.score_a) || !std::isfinite(p.score_b)) {
      throw ValidationError("estimate_mu: non-finite score for item " + p.item_id);
    }
    if (p.score_a > p.score_b) {
      wins += 1.0;
    } else if (p.score_a == p.score_b) {
      wins += 0.5;
      ++out.ties;
    }
  }
  const double n = static_cast<double>(pairs.size());
  out.num_pairs = pairs.size();
  out.mu_hat = wins / n;
  constexpr double z = 1.959963984540054;
  const double z2 = z * z;
  const double p = out.mu_hat;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
  out.ci_lo = std::max(0.0, centre - half);
  out.ci_hi = std::min(1.0, centre + half);
  return out;
}

double mu_preset(const std::string& dataset, const std::string& model_a,
                 const std::string& model_b) {
  const auto col = std::find(kModels.begin(), kModels.end(), model_b);
  if (col != kModels.end()) {
    for (const auto& row : kMuTable) {
      if (dataset == row.dataset && model_a == row.model_a) return row.mu[col - kModels.begin()];
    }
  }
  throw ValidationError("no preference-probability preset for " + dataset + ": " + model_a +
                        " vs " + model_b);
}

}  // namespace attn
