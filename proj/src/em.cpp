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

#include "attn/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "attn/error.hpp"

namespace attn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

// Compensated (Neumaier) summation; the monotonicity check compares
// log-likelihoods of order 1e4 at a 1e-9 tolerance.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <class F>
double golden_section_max(F&& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  // Endpoints are candidates too: the objective may peak on the boundary.
  double best = 0.5 * (a + b);
  double best_value = f(best);
  for (double x : {lo, hi}) {
    const double v = f(x);
    if (v > best_value) {
      best = x;
      best_value = v;
    }
  }
  return best;
}

std::pair<double, double> mu_search_range(const RegularizerSpec& reg) {
  double lo = kMuSearchLo;
  double hi = kMuSearchHi;
  if (const auto* box = std::get_if<BoxOnMu>(&reg)) {
    lo = std::max(lo, box->lo);
    hi = std::min(hi, box->hi);
  }
  return {lo, hi};
}

double mu_objective(const ExpectedCounts& counts, const RegularizerSpec& reg,
                    double mu) {
  CompensatedSum acc;
  for (std::size_t k = 0; k < counts.support.size(); ++k) {
    const double g = 0.5 + counts.support[k] * (mu - 0.5);
    if (counts.ones[k] != 0.0) acc.add(counts.ones[k] * std::log(g));
    if (counts.zeros[k] != 0.0) acc.add(counts.zeros[k] * std::log1p(-g));
  }
  acc.add(regularizer_value(reg, mu));
  return acc.value();
}

double sup_norm_change(const ModelParams& a, const ModelParams& b) {
  const auto va = flatten(a);
  const auto vb = flatten(b);
  if (va.size() != vb.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) d = std::max(d, std::abs(va[i] - vb[i]));
  return d;
}

TwoPointUpdate two_point_closed_form(double num_users, double sum_g1, double dev_g1,
                                     double n_g1, double dev_g2, double n_g2,
                                     double mu) {
  if (!(n_g1 > 0.0) || !(n_g2 > 0.0)) {
    throw DegenerateError(
        "two-point M-step: a component has zero expected label count "
        "(sum_j n_j gamma_j1 = " + std::to_string(n_g1) +
        ", sum_j n_j gamma_j2 = " + std::to_string(n_g2) + ")");
  }
  TwoPointUpdate out;
  const double scale = 2.0 * mu - 1.0;
  const double raw_lo = dev_g1 / (scale * n_g1);
  const double raw_hi = dev_g2 / (scale * n_g2);
  out.prior.q1 = std::clamp(sum_g1 / num_users, 0.0, 1.0);
  out.prior.eta_lo = std::clamp(raw_lo, 0.0, 1.0);
  out.prior.eta_hi = std::clamp(raw_hi, 0.0, 1.0);
  out.clipped_lo = out.prior.eta_lo != raw_lo;
  out.clipped_hi = out.prior.eta_hi != raw_hi;
  if (out.prior.eta_lo > out.prior.eta_hi) {
    std::swap(out.prior.eta_lo, out.prior.eta_hi);
    std::swap(out.clipped_lo, out.clipped_hi);
    out.prior.q1 = 1.0 - out.prior.q1;
    out.swapped = true;
  }
  return out;
}

// Everything the M-step needs from one pass over the users.
struct EStep {
  double loglik = 0.0;
  // two-point
  double sum_g1 = 0.0;
  double dev_g1 = 0.0;  // sum_j (2 s_j - n_j) gamma_j1
  double dev_g2 = 0.0;
  double n_g1 = 0.0;  // sum_j n_j gamma_j1
  double n_g2 = 0.0;
  double ones_g1 = 0.0;  // sum_j s_j gamma_j1
  double ones_g2 = 0.0;
  double zeros_g1 = 0.0;
  double zeros_g2 = 0.0;
  // grid
  double mean_log_eta = 0.0;
  double mean_log_1m_eta = 0.0;
  ExpectedCounts counts;
  std::vector<double> map_per_group;
};

EStep e_step(const SufficientStats& stats, const ModelParams& params,
             const QuadratureGrid& grid, bool need_counts, bool need_maps) {
  EStep out;
  CompensatedSum loglik;
  const double m = static_cast<double>(stats.num_users);

  if (const auto* tp = std::get_if<TwoPointPrior>(&params.prior)) {
    const double support[2] = {tp->eta_lo, tp->eta_hi};
    const ResponseLogProbs lp(support, params.mu);
    const double log_q1 = std::log(tp->q1);
    const double log_q2 = std::log(tp->q2());
    for (const auto& g : stats.groups) {
      const double t1 = log_q1 + lp.loglik(0, g.sum_z, g.num_labels);
      const double t2 = log_q2 + lp.loglik(1, g.sum_z, g.num_labels);
      const double terms[2] = {t1, t2};
      const double z = log_sum_exp(terms);
      if (!std::isfinite(z)) throw NumericError("E-step: marginal likelihood underflowed");
      double g1, g2;
      if (t1 <= t2) {
        g1 = std::exp(t1 - z);
        g2 = 1.0 - g1;
      } else {
        g2 = std::exp(t2 - z);
        g1 = 1.0 - g2;
      }
      const double w = g.multiplicity;
      const double dev = 2.0 * g.sum_z - g.num_labels;
      loglik.add(w * z);
      out.sum_g1 += w * g1;
      out.dev_g1 += w * dev * g1;
      out.dev_g2 += w * dev * g2;
      out.n_g1 += w * g.num_labels * g1;
      out.n_g2 += w * g.num_labels * g2;
      out.ones_g1 += w * g.sum_z * g1;
      out.ones_g2 += w * g.sum_z * g2;
      out.zeros_g1 += w * (g.num_labels - g.sum_z) * g1;
      out.zeros_g2 += w * (g.num_labels - g.sum_z) * g2;
    }
    out.loglik = loglik.value();
    return out;
  }

  const auto nodes = grid.nodes();
  const auto log_w = grid.log_weights();
  const std::size_t nk = nodes.size();
  const ResponseLogProbs lp(nodes, params.mu);
  std::vector<double> base(nk), log_eta(nk), log_1m_eta(nk);
  for (std::size_t k = 0; k < nk; ++k) {
    base[k] = log_w[k] + log_prior_density(params.prior, nodes[k]);
    log_eta[k] = std::log(nodes[k]);
    log_1m_eta[k] = std::log1p(-nodes[k]);
  }
  if (need_counts) {
    out.counts.support.assign(nodes.begin(), nodes.end());
    out.counts.ones.assign(nk, 0.0);
    out.counts.zeros.assign(nk, 0.0);
  }
  CompensatedSum sum_log_eta, sum_log_1m_eta;
  std::vector<double> post(nk);
  for (const auto& g : stats.groups) {
    for (std::size_t k = 0; k < nk; ++k) {
      post[k] = base[k] + lp.loglik(k, g.sum_z, g.num_labels);
    }
    const double z = log_sum_exp(post);
    if (!std::isfinite(z)) throw NumericError("E-step: marginal likelihood underflowed");
    const double w = g.multiplicity;
    loglik.add(w * z);

    double e_log = 0.0, e_log1m = 0.0;
    std::size_t map_k = 0;
    double map_density = kNegInf;
    for (std::size_t k = 0; k < nk; ++k) {
      if (need_maps && post[k] - log_w[k] > map_density) {
        map_density = post[k] - log_w[k];
        map_k = k;
      }
      const double mass = std::exp(post[k] - z);
      if (mass == 0.0) continue;
      e_log += mass * log_eta[k];
      e_log1m += mass * log_1m_eta[k];
      if (need_counts) {
        out.counts.ones[k] += w * g.sum_z * mass;
        out.counts.zeros[k] += w * (g.num_labels - g.sum_z) * mass;
      }
    }
    sum_log_eta.add(w * e_log);
    sum_log_1m_eta.add(w * e_log1m);
    if (need_maps) out.map_per_group.push_back(nodes[map_k]);
  }
  out.loglik = loglik.value();
  out.mean_log_eta = sum_log_eta.value() / m;
  out.mean_log_1m_eta = sum_log_1m_eta.value() / m;
  return out;
}

}  // namespace

void validate(const RegularizerSpec& reg) {
  std::visit(Overloaded{[](const NoRegularizer&) {},
                        [](const LogPriorOnMu& r) {
                          if (!(r.a > 0.0) || !(r.b > 0.0)) {
                            throw DomainError("log-prior regularizer needs a, b > 0");
                          }
                        },
                        [](const BoxOnMu& r) {
                          if (!(r.lo >= 0.5 && r.lo < r.hi && r.hi <= 1.0)) {
                            throw DomainError("box regularizer needs 1/2 <= lo < hi <= 1");
                          }
                        }},
             reg);
}

double regularizer_value(const RegularizerSpec& reg, double mu) {
  return std::visit(
      Overloaded{[](const NoRegularizer&) { return 0.0; },
                 [mu](const LogPriorOnMu& r) {
                   return (r.a - 1.0) * std::log(mu) + (r.b - 1.0) * std::log1p(-mu);
                 },
                 [mu](const BoxOnMu& r) { return (mu >= r.lo && mu <= r.hi) ? 0.0 : kNegInf; }},
      reg);
}

const char* stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::ParamTol: return "param_tol";
    case StopReason::MaxIters: return "max_iters";
    case StopReason::LikelihoodDecrease: return "likelihood_decrease";
  }
  return "unknown";
}

ModelParams default_init(PriorFamily family, std::span<const UserHistory> histories,
                         double mu, MuMode mu_mode, int mixture_components) {
  ModelParams p;
  p.mu_mode = mu_mode;
  p.mu = mu;
  if (mu_mode == MuMode::Free) {
    double ones = 0.0, total = 0.0;
    for (const auto& h : histories) {
      ones += h.sum_z();
      total += h.num_labels();
    }
    const double freq = total > 0.0 ? ones / total : 0.75;
    p.mu = std::clamp(freq, 0.55, 0.95);
  }
  switch (family) {
    case PriorFamily::TwoPoint:
      p.prior = TwoPointPrior{0.5, 0.25, 0.75};
      break;
    case PriorFamily::Beta:
      p.prior = BetaPrior{2.0, 2.0};
      break;
    case PriorFamily::LogisticNormalMixture: {
      if (mixture_components < 1) throw DomainError("mixture needs at least one component");
      LogisticNormalMixture mix;
      const int k_count = mixture_components;
      for (int k = 0; k < k_count; ++k) {
        const double mean = k_count == 1 ? 0.0 : -1.5 + 3.0 * k / (k_count - 1);
        mix.components.push_back({1.0 / k_count, mean, 1.0});
      }
      // Make the weights sum to exactly one.
      double rest = 1.0;
      for (int k = 0; k + 1 < k_count; ++k) rest -= mix.components[k].weight;
      mix.components.back().weight = rest;
      p.prior = std::move(mix);
      break;
    }
  }
  return p;
}

std::pair<double, double> posterior_two_point(const UserHistory& history,
                                              const ModelParams& params) {
  validate(params, /*allow_degenerate_two_point=*/true);
  const auto* tp = std::get_if<TwoPointPrior>(&params.prior);
  if (tp == nullptr) throw DomainError("posterior_two_point: prior is not two-point");
  const double t1 = std::log(tp->q1) + user_loglik(history, params.mu, tp->eta_lo);
  const double t2 = std::log(tp->q2()) + user_loglik(history, params.mu, tp->eta_hi);
  const double terms[2] = {t1, t2};
  const double z = log_sum_exp(terms);
  if (t1 <= t2) {
    const double g1 = std::exp(t1 - z);
    return {g1, 1.0 - g1};
  }
  const double g2 = std::exp(t2 - z);
  return {1.0 - g2, g2};
}

PosteriorSummary posterior_grid(const UserHistory& history, const ModelParams& params,
                                const QuadratureGrid& grid) {
  validate(params);
  if (family_of(params.prior) == PriorFamily::TwoPoint) {
    throw DomainError("posterior_grid: prior must be continuous");
  }
  const auto nodes = grid.nodes();
  const auto log_w = grid.log_weights();
  const std::size_t nk = nodes.size();
  std::vector<double> log_density(nk), log_mass(nk);
  for (std::size_t k = 0; k < nk; ++k) {
    log_density[k] = log_prior_density(params.prior, nodes[k]) +
                     user_loglik(history, params.mu, nodes[k]);
    log_mass[k] = log_density[k] + log_w[k];
  }
  const double z = log_sum_exp(log_mass);
  if (!std::isfinite(z)) throw NumericError("posterior_grid: density is -inf everywhere");

  PosteriorSummary out;
  out.user_id = history.user_id();
  out.kind = PosteriorSummary::Kind::GridDensity;
  out.grid = grid;
  out.density.resize(nk);
  std::size_t map_k = 0;
  double mean = 0.0, e_log = 0.0, e_log1m = 0.0;
  for (std::size_t k = 0; k < nk; ++k) {
    out.density[k] = std::exp(log_density[k] - z);
    if (log_density[k] > log_density[map_k]) map_k = k;
    const double mass = std::exp(log_mass[k] - z);
    if (mass == 0.0) continue;
    mean += mass * nodes[k];
    e_log += mass * std::log(nodes[k]);
    e_log1m += mass * std::log1p(-nodes[k]);
  }
  out.map_eta = nodes[map_k];
  out.mean_eta = std::clamp(mean, 0.0, 1.0);
  out.expected_log_eta = e_log;
  out.expected_log_1m_eta = e_log1m;
  return out;
}

TwoPointUpdate m_step_two_point(std::span<const std::pair<double, double>> posteriors,
                                std::span<const UserHistory> histories, double mu) {
  if (posteriors.size() != histories.size() || histories.empty()) {
    throw ValidationError("m_step_two_point: posteriors and histories must align");
  }
  if (!(mu > 0.5 && mu < 1.0)) throw DomainError("m_step_two_point: mu must lie in (1/2, 1)");
  double sum_g1 = 0.0, dev_g1 = 0.0, dev_g2 = 0.0, n_g1 = 0.0, n_g2 = 0.0;
  for (std::size_t j = 0; j < histories.size(); ++j) {
    const auto [g1, g2] = posteriors[j];
    const double n = histories[j].num_labels();
    const double dev = 2.0 * histories[j].sum_z() - n;
    sum_g1 += g1;
    dev_g1 += dev * g1;
    dev_g2 += dev * g2;
    n_g1 += n * g1;
    n_g2 += n * g2;
  }
  return two_point_closed_form(static_cast<double>(histories.size()), sum_g1, dev_g1,
                               n_g1, dev_g2, n_g2, mu);
}

BetaUpdate m_step_beta(double mean_log_eta, double mean_log_1m_eta) {
  const auto sol = solve_beta_system(mean_log_eta, mean_log_1m_eta);
  return {BetaPrior{sol.alpha, sol.beta}, sol};
}

BetaUpdate m_step_beta(std::span<const PosteriorSummary> posteriors) {
  if (posteriors.empty()) throw ValidationError("m_step_beta: no posteriors");
  double a = 0.0, b = 0.0;
  for (const auto& p : posteriors) {
    if (p.kind != PosteriorSummary::Kind::GridDensity) {
      throw ValidationError("m_step_beta: posteriors must carry log moments");
    }
    a += p.expected_log_eta;
    b += p.expected_log_1m_eta;
  }
  const double m = static_cast<double>(posteriors.size());
  return m_step_beta(a / m, b / m);
}

ExpectedCounts expected_counts(std::span<const PosteriorSummary> posteriors,
                               std::span<const UserHistory> histories) {
  if (posteriors.size() != histories.size()) {
    throw ValidationError("expected_counts: posteriors and histories must align");
  }
  ExpectedCounts out;
  for (std::size_t j = 0; j < posteriors.size(); ++j) {
    auto [support, masses] = posteriors[j].point_masses();
    if (j == 0) {
      out.support = support;
      out.ones.assign(support.size(), 0.0);
      out.zeros.assign(support.size(), 0.0);
    } else if (support != out.support) {
      throw ValidationError("expected_counts: posteriors have different supports");
    }
    const double s = histories[j].sum_z();
    const double f = histories[j].num_labels() - s;
    for (std::size_t k = 0; k < support.size(); ++k) {
      out.ones[k] += masses[k] * s;
      out.zeros[k] += masses[k] * f;
    }
  }
  return out;
}

MuUpdate m_step_mu(const ExpectedCounts& counts, const RegularizerSpec& reg) {
  validate(reg);
  const auto [lo, hi] = mu_search_range(reg);
  if (!(lo <= hi)) throw DomainError("m_step_mu: empty search interval");
  const double mu = golden_section_max(
      [&](double x) { return mu_objective(counts, reg, x); }, lo, hi, 1e-7);
  return {mu, mu - lo < 1e-6 || hi - mu < 1e-6};
}

MuUpdate m_step_mu(std::span<const PosteriorSummary> posteriors,
                   std::span<const UserHistory> histories, const RegularizerSpec& reg) {
  return m_step_mu(expected_counts(posteriors, histories), reg);
}

FitReport em_fit(std::span<const UserHistory> histories, const EmConfig& config) {
  if (histories.empty()) throw ValidationError("em_fit: no users");
  if (config.max_iters < 1 || !(config.tol_param > 0.0) || !(config.tol_loglik > 0.0)) {
    throw ValidationError("em_fit: invalid tolerances or iteration budget");
  }
  validate(config.regularizer);
  ModelParams params = config.init;
  if (auto* tp = std::get_if<TwoPointPrior>(&params.prior);
      tp != nullptr && tp->eta_lo > tp->eta_hi) {
    std::swap(tp->eta_lo, tp->eta_hi);
    tp->q1 = 1.0 - tp->q1;
  }
  if (params.mu_mode == MuMode::Free) {
    const auto [lo, hi] = mu_search_range(config.regularizer);
    params.mu = std::clamp(params.mu, lo, hi);
  }
  validate(params);

  const auto stats = sufficient_stats(histories);
  const auto family = family_of(params.prior);
  const bool free_mu = params.mu_mode == MuMode::Free;
  const double m = static_cast<double>(histories.size());

  if (family == PriorFamily::LogisticNormalMixture) {
    throw ValidationError("em_fit: use fit_mixture_prior for the logistic-normal mixture family");
  }

  FitReport report;
  double change = std::numeric_limits<double>::infinity();

  for (int t = 0;; ++t) {
    const bool need_counts = free_mu && family != PriorFamily::TwoPoint;
    EStep e = e_step(stats, params, config.grid, need_counts, /*need_maps=*/false);
    const double objective =
        free_mu ? e.loglik + regularizer_value(config.regularizer, params.mu) : e.loglik;
    report.trajectory.push_back({t, params, e.loglik, objective});

    if (t > 0) {
      const double previous = report.trajectory[t - 1].objective;
      if (objective < previous - config.tol_loglik) {
        report.decrease_iterations.push_back(t);
        if (config.strict) {
          report.stop_reason = StopReason::LikelihoodDecrease;
          report.converged = false;
          return report;
        }
      }
      if (change < config.tol_param) {
        report.converged = true;
        report.stop_reason = StopReason::ParamTol;
        return report;
      }
    }
    if (t == config.max_iters) {
      report.converged = false;
      report.stop_reason = StopReason::MaxIters;
      return report;
    }

    ModelParams next = params;
    const int iteration = t + 1;
    switch (family) {
      case PriorFamily::TwoPoint: {
        auto upd = two_point_closed_form(m, e.sum_g1, e.dev_g1, e.n_g1, e.dev_g2,
                                         e.n_g2, params.mu);
        if (upd.clipped_lo) report.clamp_events.push_back({iteration, "eta_lo", upd.prior.eta_lo});
        if (upd.clipped_hi) report.clamp_events.push_back({iteration, "eta_hi", upd.prior.eta_hi});
        next.prior = upd.prior;
        if (free_mu) {
          ExpectedCounts counts;
          counts.support = {upd.prior.eta_lo, upd.prior.eta_hi};
          counts.ones = {e.ones_g1, e.ones_g2};
          counts.zeros = {e.zeros_g1, e.zeros_g2};
          if (upd.swapped) {
            std::swap(counts.ones[0], counts.ones[1]);
            std::swap(counts.zeros[0], counts.zeros[1]);
          }
          e.counts = std::move(counts);
        }
        break;
      }
      case PriorFamily::Beta: {
        auto upd = m_step_beta(e.mean_log_eta, e.mean_log_1m_eta);
        if (upd.solution.clamped) {
          if (upd.prior.alpha == kBetaShapeFloor) report.clamp_events.push_back({iteration, "alpha", upd.prior.alpha});
          if (upd.prior.beta == kBetaShapeFloor) report.clamp_events.push_back({iteration, "beta", upd.prior.beta});
        }
        next.prior = upd.prior;
        break;
      }
      case PriorFamily::LogisticNormalMixture:
        break;
    }

    if (free_mu) {
      const auto upd = m_step_mu(e.counts, config.regularizer);
      // Keep the current mu unless the search strictly improves on it.
      if (mu_objective(e.counts, config.regularizer, upd.mu) >
          mu_objective(e.counts, config.regularizer, params.mu)) {
        next.mu = upd.mu;
      }
      if (upd.at_boundary) report.clamp_events.push_back({iteration, "mu", next.mu});
    }

    change = sup_norm_change(params, next);
    params = std::move(next);
  }
}

MixturePriorFit fit_mixture_prior(std::span<const UserHistory> histories, double mu,
                                  const QuadratureGrid& grid, int components,
                                  const LogisticNormalMixture& base, std::uint64_t seed) {
  if (histories.empty()) throw ValidationError("fit_mixture_prior: no users");
  const ModelParams base_params{base, mu, MuMode::Fixed};
  validate(base_params);
  const auto stats = sufficient_stats(histories);
  const EStep e = e_step(stats, base_params, grid, /*need_counts=*/false, /*need_maps=*/true);

  MixturePriorFit out;
  out.eta_hats.reserve(histories.size());
  for (std::size_t j = 0; j < histories.size(); ++j) {
    out.eta_hats.push_back(e.map_per_group[stats.group_of_user[j]]);
  }
  out.gaussian = fit_logistic_normal_mixture(out.eta_hats, components, seed);
  out.params = ModelParams{out.gaussian.mixture, mu, MuMode::Fixed};
  out.loglik = observed_loglik(stats, out.params, grid);
  return out;
}

}  // namespace attn
