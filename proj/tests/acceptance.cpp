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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "attn/cli.hpp"
#include "attn/em.hpp"
#include "attn/inference.hpp"
#include "attn/io.hpp"
#include "attn/random.hpp"
#include "attn/simulate.hpp"
#include "attn/special.hpp"
#include "attn/sweep.hpp"

using namespace attn;
using attn::io::Json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

std::vector<UserHistory> simulate_histories(SimulationScenario sc, std::uint64_t seed,
                                            std::vector<std::pair<std::string, double>>* truth = nullptr) {
  sc.seed = seed;
  auto data = simulate_dataset(sc);
  if (truth) *truth = std::move(data.truth);
  return group_by_user(data.records);
}

FitReport fit_known_mu(const std::vector<UserHistory>& hs, PriorFamily family, double mu) {
  EmConfig cfg;
  cfg.init = default_init(family, hs, mu, MuMode::Fixed);
  return em_fit(hs, cfg);
}

// Median relative error over seeds 1..10 for a Table 3 cell.
double table3_median_delta(const std::string& preset, PriorFamily family, double* worst_seconds) {
  const auto sc = scenario_preset(preset);
  const auto truth = *as_model_prior(sc.prior);
  std::vector<double> deltas;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto hs = simulate_histories(sc, seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = fit_known_mu(hs, family, sc.mu);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (worst_seconds) *worst_seconds = std::max(*worst_seconds, secs);
    deltas.push_back(relative_error(rep.final_params(), ModelParams{truth, sc.mu}));
  }
  return median(deltas);
}

Verdict criterion1() {
  double worst = 0.0;
  const double med = table3_median_delta("table3_twopoint_400_100", PriorFamily::TwoPoint, &worst);
  return {med <= 0.04 && worst <= 60.0,
          "median delta " + fmt(med) + " (<= 0.04), slowest fit " + fmt(worst, 3) + " s (<= 60)"};
}

Verdict criterion2() {
  const double big = table3_median_delta("table3_beta_800_200", PriorFamily::Beta, nullptr);
  const double small = table3_median_delta("table3_beta_200_100", PriorFamily::Beta, nullptr);
  const double ratio = small / big;
  return {big <= 0.03 && ratio >= 5.0, "median delta (800,200) " + fmt(big) + " (<= 0.03); (200,100) " +
                                           fmt(small) + ", ratio " + fmt(ratio, 3) + " (>= 5)"};
}

Verdict criterion3() {
  Rng rng(2024);
  double worst = INFINITY;
  int fits = 0;
  for (int t = 0; t < 100; ++t) {
    const int kind = t % 3;  // two-point, Beta, Beta with free mu
    SimulationScenario sc;
    sc.mu = 0.6 + 0.35 * rng.uniform();
    sc.num_users = 50 + static_cast<int>(rng.uniform_int(0, 150));
    sc.n_min = 10 + static_cast<int>(rng.uniform_int(0, 20));
    sc.n_max = sc.n_min + static_cast<int>(rng.uniform_int(0, 40));
    if (kind == 0) {
      const double lo = 0.5 * rng.uniform();
      sc.prior = TwoPointPrior{0.1 + 0.8 * rng.uniform(), lo, lo + 0.1 + (0.9 - lo) * rng.uniform()};
    } else {
      sc.prior = BetaPrior{1.2 + 8 * rng.uniform(), 1.2 + 8 * rng.uniform()};
    }
    const auto hs = simulate_histories(sc, rng.next_u64());
    EmConfig cfg;
    cfg.max_iters = 200;
    const MuMode mode = kind == 2 ? MuMode::Free : MuMode::Fixed;
    cfg.init = default_init(kind == 0 ? PriorFamily::TwoPoint : PriorFamily::Beta, hs, sc.mu, mode);
    const auto rep = em_fit(hs, cfg);
    ++fits;
    for (std::size_t i = 1; i < rep.trajectory.size(); ++i) {
      worst = std::min(worst, rep.trajectory[i].loglik - rep.trajectory[i - 1].loglik);
    }
  }
  return {worst >= -1e-9, std::to_string(fits) + " fits, smallest step in loglik " + fmt(worst)};
}

Verdict criterion4() {
  Rng rng(77);
  std::ostringstream detail;
  bool pass = true;
  for (auto family : {PriorFamily::TwoPoint, PriorFamily::Beta}) {
    const auto sc = scenario_preset(family == PriorFamily::TwoPoint ? "fig3_twopoint" : "fig3_beta");
    const auto hs = simulate_histories(sc, 5);
    std::vector<std::vector<double>> finals;
    bool all_converged = true;
    for (int r = 0; r < 8; ++r) {
      EmConfig cfg;
      cfg.max_iters = 20000;
      cfg.tol_param = 1e-9;
      if (family == PriorFamily::TwoPoint) {
        const double lo = 0.5 * rng.uniform();
        cfg.init = ModelParams{TwoPointPrior{0.05 + 0.9 * rng.uniform(), lo, lo + 0.05 + (0.95 - lo) * rng.uniform()},
                               sc.mu};
      } else {
        cfg.init = ModelParams{BetaPrior{1.1 + 14 * rng.uniform(), 1.1 + 14 * rng.uniform()}, sc.mu};
      }
      const auto rep = em_fit(hs, cfg);
      all_converged = all_converged && rep.converged;
      finals.push_back(flatten(rep.final_params()));
    }
    double spread = 0.0;
    for (const auto& a : finals)
      for (const auto& b : finals)
        for (std::size_t k = 0; k < a.size(); ++k) spread = std::max(spread, std::abs(a[k] - b[k]));
    pass = pass && all_converged && spread <= 1e-3;
    detail << family_name(family) << " sup-norm spread " << fmt(spread)
           << (all_converged ? "" : " (not all converged)") << "; ";
  }
  return {pass, detail.str() + "bound 1e-3"};
}

double q_two_point(const std::vector<UserHistory>& hs, const std::vector<std::pair<double, double>>& post,
                   double mu, double q1, double lo, double hi) {
  double q = 0.0;
  for (std::size_t j = 0; j < hs.size(); ++j) {
    const auto [g1, g2] = post[j];
    const int s = hs[j].sum_z(), n = hs[j].num_labels();
    if (g1 > 0) q += g1 * (std::log(q1) + user_loglik(s, n, mu, lo));
    if (g2 > 0) q += g2 * (std::log(1 - q1) + user_loglik(s, n, mu, hi));
  }
  return q;
}

Verdict criterion5() {
  Rng rng(555);
  const QuadratureGrid grid;
  double worst_tp = -INFINITY, worst_beta = -INFINITY;
  for (int inst = 0; inst < 20; ++inst) {
    SimulationScenario sc;
    sc.mu = 0.65 + 0.3 * rng.uniform();
    sc.num_users = 100;
    sc.n_min = 20;
    sc.n_max = 80;
    const double lo = 0.4 * rng.uniform();
    sc.prior = TwoPointPrior{0.2 + 0.6 * rng.uniform(), lo, 0.55 + 0.45 * rng.uniform()};
    const auto hs_tp = simulate_histories(sc, rng.next_u64());
    // Posteriors at a perturbed parameter value, as inside an EM iteration.
    const ModelParams at{TwoPointPrior{0.5, 0.1 + 0.3 * rng.uniform(), 0.6 + 0.35 * rng.uniform()}, sc.mu};
    std::vector<std::pair<double, double>> post;
    for (const auto& h : hs_tp) post.push_back(posterior_two_point(h, at));
    const auto upd = m_step_two_point(post, hs_tp, sc.mu);
    auto eval_post = post;
    if (upd.swapped)
      for (auto& p : eval_post) std::swap(p.first, p.second);
    const double best = q_two_point(hs_tp, eval_post, sc.mu, upd.prior.q1, upd.prior.eta_lo, upd.prior.eta_hi);
    for (int p = 0; p < 10000; ++p) {
      const double q1 = 1e-6 + (1 - 2e-6) * rng.uniform();
      const double a = rng.uniform(), b = rng.uniform();
      worst_tp = std::max(worst_tp, q_two_point(hs_tp, eval_post, sc.mu, q1, a, b) - best);
    }

    sc.prior = BetaPrior{1.2 + 10 * rng.uniform(), 1.2 + 10 * rng.uniform()};
    const auto hs_b = simulate_histories(sc, rng.next_u64());
    const ModelParams at_b{BetaPrior{1.5 + 5 * rng.uniform(), 1.5 + 5 * rng.uniform()}, sc.mu};
    std::vector<PosteriorSummary> gp;
    for (const auto& h : hs_b) gp.push_back(posterior_grid(h, at_b, grid));
    const auto ub = m_step_beta(gp);
    double r1 = 0, r2 = 0;
    for (const auto& s : gp) {
      r1 += s.expected_log_eta;
      r2 += s.expected_log_1m_eta;
    }
    const double m = static_cast<double>(gp.size());
    auto q_beta = [&](double al, double be) {
      return (al - 1) * r1 + (be - 1) * r2 -
             m * (std::lgamma(al) + std::lgamma(be) - std::lgamma(al + be));
    };
    const double best_b = q_beta(ub.prior.alpha, ub.prior.beta);
    for (int p = 0; p < 10000; ++p) {
      const double al = 1.0 + 49 * rng.uniform(), be = 1.0 + 49 * rng.uniform();
      worst_beta = std::max(worst_beta, q_beta(al, be) - best_b);
    }
  }
  return {worst_tp <= 1e-8 && worst_beta <= 1e-8,
          "largest probe excess: two-point " + fmt(worst_tp) + ", beta " + fmt(worst_beta) + " (<= 1e-8)"};
}

Verdict criterion6() {
  auto sc = misspecification_suite("beta_mixture_fig4");
  sc.n_min = sc.n_max = 100;
  std::vector<double> los, his, q1s;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto hs = simulate_histories(sc, seed);
    const auto rep = fit_known_mu(hs, PriorFamily::TwoPoint, sc.mu);
    const auto& tp = std::get<TwoPointPrior>(rep.final_params().prior);
    los.push_back(tp.eta_lo);
    his.push_back(tp.eta_hi);
    q1s.push_back(tp.q1);
  }
  const double lo = median(los), hi = median(his), q1 = median(q1s);
  return {std::abs(lo - 0.2) <= 0.1 && std::abs(hi - 0.8) <= 0.1 && std::abs(q1 - 0.6) <= 0.15,
          "median eta_lo " + fmt(lo) + " (0.2 +- 0.1), eta_hi " + fmt(hi) + " (0.8 +- 0.1), q1 " + fmt(q1) +
              " (0.6 +- 0.15)"};
}

Verdict criterion7() {
  auto plan = cli::sweep_preset("mu_sweep");
  for (auto& c : plan.cells) {
    c.rules.erase(std::remove_if(c.rules.begin(), c.rules.end(),
                                 [](const LabeledRule& r) { return r.label != "ranking"; }),
                  c.rules.end());
  }
  const auto results = cli::run_sweep(plan, cli::workers_from_env());
  std::vector<double> mus;
  std::vector<double> known, prior;
  int failures = 0;
  for (const auto& r : results) {
    double sum = 0.0;
    int ok = 0;
    for (const auto& s : r.seeds) {
      if (!s.ok) {
        ++failures;
        continue;
      }
      sum += s.rules.at(0).accuracy;
      ++ok;
    }
    const double mean = ok ? sum / ok : NAN;
    if (r.cell.fit.label == "known_mu") {
      mus.push_back(r.cell.mu);
      known.push_back(mean);
    } else {
      prior.push_back(mean);
    }
  }
  bool pass = failures == 0 && known.size() == 4 && prior.size() == 4;
  std::ostringstream detail;
  for (std::size_t i = 0; i < known.size() && i < prior.size(); ++i) {
    detail << "mu " << fmt(mus[i], 2) << ": known " << fmt(100 * known[i], 4) << "%, prior "
           << fmt(100 * prior[i], 4) << "%; ";
    if (i > 0) pass = pass && known[i] >= known[i - 1] && prior[i] >= prior[i - 1];
    pass = pass && std::abs(known[i] - prior[i]) <= 0.05;
  }
  detail << failures << " failed runs";
  return {pass, detail.str()};
}

// Digamma by upward recurrence to x >= 20 and the asymptotic series, in
// long double.
long double digamma_oracle(long double x) {
  long double acc = 0.0L;
  while (x < 20.0L) {
    acc -= 1.0L / x;
    x += 1.0L;
  }
  const long double z = 1.0L / (x * x);
  const long double series =
      z * (1.0L / 12 - z * (1.0L / 120 - z * (1.0L / 252 - z * (1.0L / 240 - z * (1.0L / 132 - z * (691.0L / 32760 - z / 12.0L))))));
  return acc + std::log(x) - 0.5L / x - series;
}

Verdict criterion8() {
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = std::pow(10.0, -3.0 + 6.0 * i / 999.0);
    worst = std::max(worst, static_cast<double>(std::abs(static_cast<long double>(digamma(x)) - digamma_oracle(x))));
  }
  double worst_rt = 0.0;
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double a = 1.1 + 18.9 * rng.uniform(), b = 1.1 + 18.9 * rng.uniform();
    const auto m = beta_log_moments(a, b);
    const auto s = solve_beta_system(m.log_eta, m.log_1m_eta);
    worst_rt = std::max({worst_rt, std::abs(s.alpha - a), std::abs(s.beta - b)});
  }
  return {worst <= 1e-10 && worst_rt <= 1e-5,
          "digamma max abs error " + fmt(worst) + " (<= 1e-10); beta round trip " + fmt(worst_rt) + " (<= 1e-5)"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ATTN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// simulate -> fit -> infer in `dir`, through the command-line binary.
bool pipeline(const fs::path& dir, double fraction) {
  fs::create_directories(dir);
  io::write_atomic(dir / "simulate.json",
                   Json{{"scenario", {{"preset", "table3_twopoint_400_100"}, {"seed", 3}}}, {"output_dir", "data"}}.dump());
  io::write_atomic(dir / "fit.json", Json{{"annotations", "data/annotations.jsonl"},
                                          {"truth", "data/truth.csv"},
                                          {"scenario", "data/scenario.json"},
                                          {"model", {{"family", "two_point"}, {"mu", 0.8}}},
                                          {"output_dir", "fit"}}
                                         .dump());
  io::write_atomic(dir / "infer.json", Json{{"annotations", "data/annotations.jsonl"},
                                            {"fit", "fit/fit.json"},
                                            {"rule", {{"kind", "top_fraction"}, {"fraction", fraction}}},
                                            {"output_dir", "infer"}}
                                           .dump());
  const std::string d = dir.string();
  return run_cli("simulate -c " + d + "/simulate.json") == 0 && run_cli("fit -c " + d + "/fit.json") == 0 &&
         run_cli("infer -c " + d + "/infer.json") == 0;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

const char* const kOutputs[] = {"data/annotations.jsonl", "data/truth.csv",   "data/scenario.json",
                                "fit/fit.json",           "fit/trajectory.csv", "infer/posteriors.csv",
                                "infer/decisions.csv",    "infer/filtered.jsonl", "infer/pairs.jsonl"};

Verdict criterion9(const fs::path& root) {
  const auto a = root / "run_a", b = root / "run_b";
  if (!pipeline(a, 0.8) || !pipeline(b, 0.8)) return {false, "pipeline command failed"};
  int same = 0;
  for (const char* f : kOutputs) same += fnv1a(io::read_text(a / f)) == fnv1a(io::read_text(b / f)) &&
                                         io::read_text(a / f) == io::read_text(b / f);
  const int total = static_cast<int>(std::size(kOutputs));
  return {same == total, std::to_string(same) + " of " + std::to_string(total) + " output files identical"};
}

Verdict criterion10(const fs::path& root) {
  const auto keep_all = root / "keep_all";
  if (!pipeline(keep_all, 1.0)) return {false, "pipeline command failed"};
  const bool identity = io::read_text(keep_all / "infer/filtered.jsonl") == io::read_text(keep_all / "data/annotations.jsonl");

  const auto top = root / "run_a";
  const auto decisions = io::parse_decisions(io::read_text(top / "infer/decisions.csv"), "decisions.csv");
  const auto attentive = std::count_if(decisions.begin(), decisions.end(), [](const auto& d) { return d.attentive; });

  const auto kept = io::read_annotations(top / "infer/filtered.jsonl");
  const std::string pairs = io::read_text(top / "infer/pairs.jsonl");
  std::istringstream in(pairs);
  std::string line;
  std::size_t i = 0, matches = 0;
  bool fields_ok = true;
  while (std::getline(in, line)) {
    const Json p = Json::parse(line);
    fields_ok = fields_ok && p.size() == 2 && p.contains("item_id") && p.contains("chosen");
    if (i < kept.records.size() && p["item_id"] == kept.records[i].item_id &&
        p["chosen"] == (kept.records[i].label == 1 ? "A" : "B")) {
      ++matches;
    }
    ++i;
  }
  const bool pairs_ok = fields_ok && i == kept.records.size() && matches == i && i > 0;
  return {identity && attentive == 320 && pairs_ok,
          std::string("keep-all identity ") + (identity ? "yes" : "no") + ", attentive at 0.8: " +
              std::to_string(attentive) + " of " + std::to_string(decisions.size()) + " (320), pairs " +
              std::to_string(matches) + "/" + std::to_string(kept.records.size()) + " consistent"};
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "attn_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"two-point parameter recovery (400 users x 100 labels)", criterion1},
      {"Beta parameter recovery and sample-size trend", criterion2},
      {"monotone likelihood over 100 randomized fits", criterion3},
      {"common limit from 8 random initializations", criterion4},
      {"M-steps beat random Q probes", criterion5},
      {"two-point fit of a bimodal Beta mixture", criterion6},
      {"recovery accuracy across mu, known vs Beta(8,2) prior", criterion7},
      {"digamma accuracy and Beta moment round trip", criterion8},
      {"simulate -> fit -> filter determinism", [&] { return criterion9(root); }},
      {"filtered-dataset export contract", [&] { return criterion10(root); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::printf("%s criterion %zu: %s -- %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  fs::remove_all(root);
  std::printf("%zu of %zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
