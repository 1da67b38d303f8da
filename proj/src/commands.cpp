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

#include "attn/cli.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "attn/error.hpp"

namespace attn::cli {
namespace {

using io::Json;

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path input_path(const Json& config, const char* key, const fs::path& base,
                    const char* context) {
  const fs::path path = resolve(base, io::json_string(config, key, context));
  if (!fs::exists(path)) {
    throw IoError(std::string(context) + ": '" + key + "' file not found: " + path.string());
  }
  return path;
}

fs::path output_dir(const Json& config, const fs::path& base) {
  return resolve(base, io::json_string_or(config, "output_dir", ".", "config"));
}

const Json& section(const Json& config, const char* key) {
  static const Json kEmpty = Json::object();
  if (!config.contains(key)) return kEmpty;
  const Json& s = config[key];
  if (!s.is_object()) throw ValidationError(std::string("config: '") + key + "' must be an object");
  return s;
}

void write(Outcome& out, const fs::path& path, std::string_view content) {
  io::write_atomic(path, content);
  out.written.push_back(path);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

PriorFamily family_from_name(const std::string& name) {
  for (auto f : {PriorFamily::TwoPoint, PriorFamily::Beta, PriorFamily::LogisticNormalMixture}) {
    if (name == family_name(f)) return f;
  }
  throw ValidationError("unknown prior family '" + name + "'");
}

MuMode mu_mode_from_name(const std::string& name) {
  if (name == "fixed") return MuMode::Fixed;
  if (name == "free") return MuMode::Free;
  throw ValidationError("mu_mode must be 'fixed' or 'free'");
}

double pooled_frequency(std::span<const AnnotationRecord> records) {
  if (records.empty()) return 0.5;
  double ones = 0.0;
  for (const auto& r : records) ones += r.label;
  return ones / static_cast<double>(records.size());
}

void flip_labels(std::vector<AnnotationRecord>& records) {
  for (auto& r : records) r.label = 1 - r.label;
}

// Orientation of the labels relative to the fitted model: model A is
// always the stronger one, so data where B wins are relabeled on the way in.
struct Orientation {
  bool flipped = false;
  std::optional<double> mu;  // already in the canonical orientation
};

Orientation decide_orientation(const Json& model, std::span<const AnnotationRecord> records,
                               MuMode mode) {
  Orientation o;
  if (model.contains("mu")) o.mu = io::json_number(model, "mu", "model");
  if (model.contains("flip_labels")) {
    o.flipped = io::json_bool_or(model, "flip_labels", false, "model");
  } else if (o.mu) {
    o.flipped = *o.mu < 0.5;
  } else if (mode == MuMode::Free) {
    o.flipped = pooled_frequency(records) < 0.5;
  }
  if (o.mu && *o.mu < 0.5) {
    if (!o.flipped) throw ValidationError("model: mu < 0.5 requires flipped labels");
    o.mu = 1.0 - *o.mu;
  }
  return o;
}

Json clamp_events_json(std::span<const ClampEvent> events) {
  Json arr = Json::array();
  for (const auto& e : events) {
    arr.push_back(Json{{"iteration", e.iteration}, {"parameter", e.parameter}, {"value", e.value}});
  }
  return arr;
}

std::string maybe_number(double v) { return std::isnan(v) ? "" : io::format_double(v); }

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) != nullptr) return kExitIo;
  if (dynamic_cast<const ValidationError*>(&e) != nullptr ||
      dynamic_cast<const DomainError*>(&e) != nullptr) {
    return kExitValidation;
  }
  if (dynamic_cast<const NumericError*>(&e) != nullptr ||
      dynamic_cast<const DegenerateError*>(&e) != nullptr ||
      dynamic_cast<const SolverError*>(&e) != nullptr) {
    return kExitNumeric;
  }
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) != nullptr) return kExitIo;
  return kExitIo;
}

int workers_from_env() {
  const char* v = std::getenv("ATTN_WORKERS");
  if (v == nullptr) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) return 1;
  return static_cast<int>(std::min<long>(n, 256));
}

Outcome run_simulate(const Json& config, const fs::path& base, const Overrides& o) {
  SimulationScenario sc = io::scenario_from_json(io::json_require(config, "scenario", "config"));
  if (o.seed) sc.seed = *o.seed;
  const SimulatedData data = simulate_dataset(sc, o.workers);
  const fs::path dir = output_dir(config, base);

  Outcome out;
  write(out, dir / "annotations.jsonl", io::serialize_annotations(data.records));
  write(out, dir / "truth.csv", io::serialize_truth(data.truth));
  write(out, dir / "scenario.json", dump(io::to_json(sc)));
  out.summary = "simulated " + std::to_string(data.truth.size()) + " users, " +
                std::to_string(data.records.size()) + " annotations";
  return out;
}

Outcome run_fit(const Json& config, const fs::path& base, const Overrides& o) {
  const fs::path ann_path = input_path(config, "annotations", base, "config");
  const Json& model = io::json_require(config, "model", "config");
  const Json& em = section(config, "em");

  const PriorFamily family = family_from_name(io::json_string(model, "family", "model"));
  const MuMode mode = mu_mode_from_name(io::json_string_or(model, "mu_mode", "fixed", "model"));
  if (mode == MuMode::Fixed && !model.contains("mu")) {
    throw ValidationError("model: 'mu' is required when mu_mode is fixed");
  }
  const auto components = io::json_int_or(model, "components", 3, "model");
  if (components < 1 || components > 64) throw ValidationError("model: components out of range");
  const auto grid_nodes = io::json_int_or(em, "grid_nodes", 1025, "em");
  if (grid_nodes < 2 || grid_nodes > 1'000'001) {
    throw ValidationError("em: grid_nodes must lie in [2, 1000001]");
  }
  const auto max_iters = io::json_int_or(em, "max_iters", 500, "em");
  if (max_iters < 1 || max_iters > 1'000'000) throw ValidationError("em: max_iters out of range");
  const RegularizerSpec reg =
      em.contains("regularizer") ? io::regularizer_from_json(em["regularizer"]) : NoRegularizer{};
  const bool strict = o.strict || io::json_bool_or(em, "strict", false, "em");
  const std::uint64_t seed =
      o.seed.value_or(static_cast<std::uint64_t>(io::json_int_or(em, "seed", 0x5eed, "em")));

  io::AnnotationFile ann = io::read_annotations(ann_path);
  if (ann.records.empty()) throw ValidationError(ann_path.string() + ": no annotations");
  const Orientation orient = decide_orientation(model, ann.records, mode);
  if (orient.flipped) flip_labels(ann.records);
  const auto histories = group_by_user(ann.records);
  const QuadratureGrid grid(static_cast<std::size_t>(grid_nodes));

  FitReport report;
  Json extra = Json::object();
  if (family == PriorFamily::LogisticNormalMixture) {
    if (mode == MuMode::Free) {
      throw ValidationError("model: the logistic-normal mixture family needs a fixed mu");
    }
    const auto base_params = model.contains("init")
        ? ModelParams{io::prior_from_json(model["init"]), *orient.mu, MuMode::Fixed}
        : default_init(family, histories, *orient.mu, MuMode::Fixed);
    if (family_of(base_params.prior) != PriorFamily::LogisticNormalMixture) {
      throw ValidationError("model: init prior must be a logistic-normal mixture");
    }
    auto fit = fit_mixture_prior(histories, *orient.mu, grid, static_cast<int>(components),
                                 std::get<LogisticNormalMixture>(base_params.prior), seed);
    const double base_ll = observed_loglik(histories, base_params, grid);
    report.trajectory.push_back({0, base_params, base_ll, base_ll});
    report.trajectory.push_back({1, fit.params, fit.loglik, fit.loglik});
    report.converged = true;
    extra["clipped_eta_hats"] = fit.gaussian.clipped_inputs;
    extra["logit_space_loglik"] = fit.gaussian.loglik;
  } else {
    EmConfig cfg;
    cfg.max_iters = static_cast<int>(max_iters);
    cfg.tol_param = io::json_number_or(em, "tol_param", 1e-6, "em");
    cfg.tol_loglik = io::json_number_or(em, "tol_loglik", 1e-9, "em");
    cfg.grid = grid;
    cfg.regularizer = reg;
    cfg.strict = strict;
    const double mu0 = orient.mu.value_or(0.75);
    cfg.init = default_init(family, histories, mu0, mode);
    if (mode == MuMode::Free && orient.mu) cfg.init.mu = mu0;
    if (model.contains("init")) cfg.init.prior = io::prior_from_json(model["init"]);
    if (family_of(cfg.init.prior) != family) {
      throw ValidationError("model: init prior family differs from 'family'");
    }
    report = em_fit(histories, cfg);
  }

  const auto& last = report.trajectory.back();
  Json fit;
  fit["family"] = family_name(family);
  fit["params"] = io::to_json(last.params);
  fit["loglik"] = last.loglik;
  fit["objective"] = last.objective;
  fit["iterations"] = last.iteration;
  fit["converged"] = report.converged;
  fit["stop_reason"] = family == PriorFamily::LogisticNormalMixture
                           ? "plug_in_step"
                           : stop_reason_name(report.stop_reason);
  fit["clamp_events"] = clamp_events_json(report.clamp_events);
  fit["decrease_iterations"] = report.decrease_iterations;
  fit["regularizer"] = io::to_json(reg);
  fit["grid_nodes"] = grid_nodes;
  fit["orientation_flipped"] = orient.flipped;
  fit["num_users"] = histories.size();
  fit["num_annotations"] = ann.records.size();
  for (auto& [k, v] : extra.items()) fit[k] = v;

  if (config.contains("truth")) {
    const fs::path truth_path = input_path(config, "truth", base, "config");
    const fs::path sc_path = config.contains("scenario")
                                 ? input_path(config, "scenario", base, "config")
                                 : truth_path.parent_path() / "scenario.json";
    const auto truth_table = io::read_truth(truth_path);
    const SimulationScenario sc = io::scenario_from_json(io::read_json(sc_path));
    Json t;
    t["num_users"] = truth_table.size();
    t["prior"] = io::to_json(sc.prior);
    t["mu"] = sc.mu;
    const auto model_prior = as_model_prior(sc.prior);
    if (model_prior && family_of(*model_prior) == family) {
      const double true_mu = orient.flipped ? 1.0 - sc.mu : sc.mu;
      t["delta"] = relative_error(last.params, ModelParams{*model_prior, true_mu, last.params.mu_mode});
    } else {
      t["delta"] = nullptr;
    }
    fit["truth"] = std::move(t);
  }

  const fs::path dir = output_dir(config, base);
  Outcome out;
  write(out, dir / "fit.json", dump(fit));
  write(out, dir / "trajectory.csv", io::serialize_trajectory(report));
  std::ostringstream msg;
  msg << "fit " << family_name(family) << ": " << fit["stop_reason"].get<std::string>()
      << " after " << last.iteration << " iterations, loglik " << io::format_double(last.loglik);
  out.summary = msg.str();
  if (strict && report.stop_reason == StopReason::LikelihoodDecrease) {
    out.exit_code = kExitNumeric;
    out.summary += " (likelihood decreased at iteration " +
                   std::to_string(report.decrease_iterations.back()) + ")";
  }
  return out;
}

Outcome run_infer(const Json& config, const fs::path& base, const Overrides&) {
  const fs::path ann_path = input_path(config, "annotations", base, "config");
  const fs::path fit_path = input_path(config, "fit", base, "config");
  const Json fit = io::read_json(fit_path);
  const ModelParams params = io::params_from_json(io::json_require(fit, "params", "fit.json"));
  validate(params);
  const bool flipped = io::json_bool_or(fit, "orientation_flipped", false, "fit.json");
  const auto grid_nodes = io::json_int_or(
      config, "grid_nodes", io::json_int_or(fit, "grid_nodes", 1025, "fit.json"), "config");
  if (grid_nodes < 2 || grid_nodes > 1'000'001) {
    throw ValidationError("grid_nodes must lie in [2, 1000001]");
  }

  FilterRule rule = config.contains("rule") ? io::rule_from_json(config["rule"])
                                            : FilterRule{TailProbabilityRule{}};
  if (const auto* thr = std::get_if<ThresholdRule>(&rule); thr && thr->prior_quantile) {
    const fs::path sc_path = input_path(config, "scenario", base, "config");
    rule = resolve_rule(rule, io::scenario_from_json(io::read_json(sc_path)).prior);
  }
  const std::string score_name = io::json_string_or(config, "score", "map", "config");
  if (score_name != "map" && score_name != "mean") {
    throw ValidationError("config: score must be 'map' or 'mean'");
  }
  const RankScore score = score_name == "map" ? RankScore::Map : RankScore::Mean;

  std::vector<double> eta_stars;
  if (config.contains("eta_stars")) {
    const Json& es = config["eta_stars"];
    if (!es.is_array()) throw ValidationError("config: eta_stars must be an array");
    for (const auto& v : es) {
      if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) {
        throw ValidationError("config: eta_stars entries must lie in [0, 1]");
      }
      eta_stars.push_back(v.get<double>());
    }
  } else {
    eta_stars.push_back(0.5);
  }
  if (const auto* tail = std::get_if<TailProbabilityRule>(&rule);
      tail && std::find(eta_stars.begin(), eta_stars.end(), tail->eta_star) == eta_stars.end()) {
    eta_stars.push_back(tail->eta_star);
  }

  const io::AnnotationFile ann = io::read_annotations(ann_path);
  std::vector<AnnotationRecord> oriented = ann.records;
  if (flipped) flip_labels(oriented);
  const auto histories = group_by_user(oriented);
  const QuadratureGrid grid(static_cast<std::size_t>(grid_nodes));
  std::vector<PosteriorSummary> summaries;
  summaries.reserve(histories.size());
  for (const auto& h : histories) summaries.push_back(summarize_posterior(h, params, grid));
  const auto decisions = select_users(summaries, rule, score);
  const FilterResult filtered = filter_dataset(ann.records, decisions);

  std::string filtered_text;
  for (std::size_t i : filtered.kept_indices) filtered_text += ann.lines[i] + "\n";

  const fs::path dir = output_dir(config, base);
  Outcome out;
  write(out, dir / "posteriors.csv", io::serialize_posteriors(summaries, eta_stars));
  write(out, dir / "decisions.csv", io::serialize_decisions(decisions));
  write(out, dir / "filtered.jsonl", filtered_text);
  write(out, dir / "pairs.jsonl", io::serialize_pairs(filtered.records));
  out.summary = "kept " + std::to_string(filtered.users_kept) + " of " +
                std::to_string(histories.size()) + " users, " +
                std::to_string(filtered.records_kept) + " of " +
                std::to_string(ann.records.size()) + " annotations";
  return out;
}

Outcome run_filter(const Json& config, const fs::path& base, const Overrides&) {
  const fs::path ann_path = input_path(config, "annotations", base, "config");
  const fs::path dec_path = input_path(config, "decisions", base, "config");
  const io::AnnotationFile ann = io::read_annotations(ann_path);
  const auto decisions = io::parse_decisions(io::read_text(dec_path), dec_path.string());
  const FilterResult filtered = filter_dataset(ann.records, decisions);

  std::string filtered_text;
  for (std::size_t i : filtered.kept_indices) filtered_text += ann.lines[i] + "\n";
  const fs::path dir = output_dir(config, base);
  Outcome out;
  write(out, dir / "filtered.jsonl", filtered_text);
  write(out, dir / "pairs.jsonl", io::serialize_pairs(filtered.records));
  out.summary = "kept " + std::to_string(filtered.users_kept) + " users, " +
                std::to_string(filtered.records_kept) + " of " +
                std::to_string(ann.records.size()) + " annotations";
  return out;
}

Outcome run_estimate_mu(const Json& config, const fs::path& base, const Overrides&) {
  Json result;
  if (config.contains("preset")) {
    const Json& p = config["preset"];
    const std::string dataset = io::json_string(p, "dataset", "preset");
    const std::string a = io::json_string(p, "model_a", "preset");
    const std::string b = io::json_string(p, "model_b", "preset");
    result["source"] = "preset";
    result["dataset"] = dataset;
    result["model_a"] = a;
    result["model_b"] = b;
    result["mu"] = mu_preset(dataset, a, b);
  } else {
    const fs::path pairs_path = input_path(config, "pairs", base, "config");
    const auto pairs = io::parse_scored_pairs(io::read_text(pairs_path), pairs_path.string());
    const MuEstimate est = estimate_mu(pairs);
    result["source"] = "scored_pairs";
    result["mu"] = est.mu_hat;
    result["ci_lo"] = est.ci_lo;
    result["ci_hi"] = est.ci_hi;
    result["num_pairs"] = est.num_pairs;
    result["ties"] = est.ties;
  }
  const fs::path dir = output_dir(config, base);
  Outcome out;
  write(out, dir / "mu.json", dump(result));
  out.summary = "mu = " + io::format_double(result["mu"].get<double>());
  return out;
}

SweepPlan sweep_preset(const std::string& name) {
  SweepPlan plan;
  for (std::uint64_t s = 1; s <= 10; ++s) plan.seeds.push_back(s);
  const LabeledRule ranking{"ranking", TopFractionRule{0.5}};
  const LabeledRule threshold{"threshold", ThresholdRule{0.0, 0.5}};
  if (name == "table3") {
    const std::pair<int, int> sizes[] = {{200, 50}, {400, 50}, {200, 100},
                                         {400, 100}, {800, 100}, {800, 200}};
    const std::pair<const char*, TruePriorSpec> priors[] = {
        {"two_point", TwoPointPrior{0.6, 0.4, 0.98}}, {"beta", BetaPrior{3.0, 5.0}}};
    for (const auto& [label, prior] : priors) {
      for (const auto& [m, n] : sizes) {
        SweepCell c;
        c.num_users = m;
        c.n_min = c.n_max = n;
        c.mu = 0.8;
        c.prior_label = label;
        c.prior = prior;
        c.fit.label = "known_mu";
        c.fit.family = family_of(*as_model_prior(prior));
        c.rules = {ranking};
        plan.cells.push_back(std::move(c));
      }
    }
    return plan;
  }
  if (name == "mu_sweep") {
    FitVariant known;
    known.label = "known_mu";
    FitVariant prior_on_mu;
    prior_on_mu.label = "beta_prior_on_mu";
    prior_on_mu.mu_mode = MuMode::Free;
    prior_on_mu.regularizer = LogPriorOnMu{8.0, 2.0};
    for (double mu : {0.6, 0.7, 0.8, 0.9}) {
      for (const auto& fit : {known, prior_on_mu}) {
        SweepCell c;
        c.num_users = 400;
        c.n_min = 50;
        c.n_max = 100;
        c.mu = mu;
        c.prior_label = "beta";
        c.prior = BetaPrior{3.0, 5.0};
        c.fit = fit;
        c.rules = {ranking, threshold};
        plan.cells.push_back(std::move(c));
      }
    }
    return plan;
  }
  throw ValidationError("unknown sweep preset '" + name + "'");
}

SweepPlan sweep_from_json(const Json& j) {
  constexpr const char* ctx = "sweep";
  SweepPlan plan;
  const Json& seeds = io::json_require(j, "seeds", ctx);
  if (!seeds.is_array() || seeds.empty()) throw ValidationError("sweep: 'seeds' must be a non-empty array");
  for (const auto& s : seeds) {
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
      throw ValidationError("sweep: seeds must be non-negative integers");
    }
    plan.seeds.push_back(s.get<std::uint64_t>());
  }

  auto array_of = [&](const char* key) -> const Json& {
    const Json& a = io::json_require(j, key, ctx);
    if (!a.is_array() || a.empty()) {
      throw ValidationError(std::string("sweep: '") + key + "' must be a non-empty array");
    }
    return a;
  };

  // (m, n_min, n_max): either "sizes": [[m, n] | [m, n_min, n_max]] or the
  // cross product of "m" and "n", where each n is an integer or [lo, hi].
  std::vector<std::array<int, 3>> sizes;
  auto to_int = [](const Json& v, const char* what) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1 ||
        v.get<std::int64_t>() > std::numeric_limits<int>::max()) {
      throw ValidationError(std::string("sweep: invalid ") + what);
    }
    return static_cast<int>(v.get<std::int64_t>());
  };
  if (j.contains("sizes")) {
    for (const auto& s : array_of("sizes")) {
      if (!s.is_array() || (s.size() != 2 && s.size() != 3)) {
        throw ValidationError("sweep: sizes entries are [m, n] or [m, n_min, n_max]");
      }
      const int m = to_int(s[0], "m");
      const int lo = to_int(s[1], "n");
      sizes.push_back({m, lo, s.size() == 3 ? to_int(s[2], "n") : lo});
    }
  } else {
    for (const auto& mv : array_of("m")) {
      for (const auto& nv : array_of("n")) {
        if (nv.is_array()) {
          if (nv.size() != 2) throw ValidationError("sweep: n ranges are [lo, hi]");
          sizes.push_back({to_int(mv, "m"), to_int(nv[0], "n"), to_int(nv[1], "n")});
        } else {
          sizes.push_back({to_int(mv, "m"), to_int(nv, "n"), to_int(nv, "n")});
        }
      }
    }
  }

  std::vector<double> mus;
  for (const auto& v : array_of("mu")) {
    if (!v.is_number() || !(v.get<double>() > 0.5 && v.get<double>() < 1.0)) {
      throw ValidationError("sweep: mu values must lie in (0.5, 1)");
    }
    mus.push_back(v.get<double>());
  }

  std::vector<std::pair<std::string, TruePriorSpec>> priors;
  for (const auto& p : array_of("priors")) {
    const std::string fam = io::json_string(p, "family", "sweep prior");
    priors.emplace_back(io::json_string_or(p, "label", fam, "sweep prior"),
                        io::true_prior_from_json(p));
  }

  // A fit family of "match" follows the true prior's family.
  struct FitSpec {
    FitVariant variant;
    bool match = false;
  };
  std::vector<FitSpec> fits;
  for (const auto& f : array_of("fits")) {
    FitSpec spec;
    const std::string fam = io::json_string_or(f, "family", "match", "sweep fit");
    spec.match = fam == "match";
    if (!spec.match) spec.variant.family = family_from_name(fam);
    spec.variant.mu_mode = mu_mode_from_name(io::json_string_or(f, "mu_mode", "fixed", "sweep fit"));
    spec.variant.label = io::json_string_or(
        f, "label", spec.variant.mu_mode == MuMode::Fixed ? "known_mu" : "free_mu", "sweep fit");
    if (f.contains("regularizer")) spec.variant.regularizer = io::regularizer_from_json(f["regularizer"]);
    spec.variant.mixture_components = static_cast<int>(io::json_int_or(f, "components", 3, "sweep fit"));
    spec.variant.max_iters = static_cast<int>(io::json_int_or(f, "max_iters", 500, "sweep fit"));
    spec.variant.tol_param = io::json_number_or(f, "tol_param", 1e-6, "sweep fit");
    spec.variant.grid_nodes = static_cast<int>(io::json_int_or(f, "grid_nodes", 1025, "sweep fit"));
    if (spec.variant.family == PriorFamily::LogisticNormalMixture &&
        spec.variant.mu_mode == MuMode::Free) {
      throw ValidationError("sweep: the logistic-normal mixture family needs a fixed mu");
    }
    fits.push_back(std::move(spec));
  }

  std::vector<LabeledRule> rules;
  for (const auto& r : array_of("rules")) {
    rules.push_back({io::json_string_or(r, "label", io::json_string(r, "kind", "sweep rule"),
                                        "sweep rule"),
                     io::rule_from_json(r)});
  }

  for (const auto& [m, lo, hi] : sizes) {
    for (double mu : mus) {
      for (const auto& [label, prior] : priors) {
        for (const auto& f : fits) {
          SweepCell c;
          c.num_users = m;
          c.n_min = lo;
          c.n_max = hi;
          c.mu = mu;
          c.prior_label = label;
          c.prior = prior;
          c.fit = f.variant;
          if (f.match) {
            const auto mp = as_model_prior(prior);
            if (!mp) {
              throw ValidationError("sweep: prior '" + label +
                                    "' has no matching fitted family; name one explicitly");
            }
            c.fit.family = family_of(*mp);
            if (c.fit.family == PriorFamily::LogisticNormalMixture && c.fit.mu_mode == MuMode::Free) {
              throw ValidationError("sweep: the logistic-normal mixture family needs a fixed mu");
            }
          }
          c.rules = rules;
          plan.cells.push_back(std::move(c));
        }
      }
    }
  }
  return plan;
}

std::vector<CellResult> run_sweep(const SweepPlan& plan, int workers) {
  if (plan.seeds.empty()) throw ValidationError("sweep: empty seed list");
  std::vector<CellResult> results(plan.cells.size());
  auto run_cell = [&](std::size_t i) {
    results[i].cell = plan.cells[i];
    for (auto s : plan.seeds) results[i].seeds.push_back(run_seed(plan.cells[i], s));
  };
  workers = std::clamp(workers, 1, static_cast<int>(std::max<std::size_t>(plan.cells.size(), 1)));
  if (workers == 1) {
    for (std::size_t i = 0; i < plan.cells.size(); ++i) run_cell(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < plan.cells.size(); i = next++) run_cell(i);
      });
    }
  }
  return results;
}

std::string serialize_sweep(std::span<const CellResult> results) {
  std::string out =
      "cell,m,n_min,n_max,mu,prior,fit,rule,seeds,failures,delta_mean,delta_sd,"
      "accuracy_mean,accuracy_sd\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::vector<double> deltas;
    std::size_t failures = 0;
    for (const auto& s : r.seeds) {
      if (s.ok) {
        deltas.push_back(s.delta);
      } else {
        ++failures;
      }
    }
    const Summary d = summarize(deltas);
    for (std::size_t k = 0; k < r.cell.rules.size(); ++k) {
      std::vector<double> acc;
      for (const auto& s : r.seeds) {
        if (s.ok) acc.push_back(s.rules[k].accuracy);
      }
      const Summary a = summarize(acc);
      out += std::to_string(i) + "," + std::to_string(r.cell.num_users) + "," +
             std::to_string(r.cell.n_min) + "," + std::to_string(r.cell.n_max) + "," +
             io::format_double(r.cell.mu) + "," + io::csv_field(r.cell.prior_label) + "," +
             io::csv_field(r.cell.fit.label) + "," + io::csv_field(r.cell.rules[k].label) + "," +
             std::to_string(r.seeds.size()) + "," + std::to_string(failures) + "," +
             maybe_number(d.mean) + "," + (d.count ? io::format_double(d.sd) : "") + "," +
             maybe_number(a.mean) + "," + (a.count ? io::format_double(a.sd) : "") + "\n";
    }
  }
  return out;
}

std::string serialize_cell(const CellResult& r) {
  std::string out = "seed,ok,rule,delta,accuracy,iterations,stop_reason,error\n";
  for (const auto& s : r.seeds) {
    if (!s.ok) {
      out += std::to_string(s.seed) + ",0,,,,,," + io::csv_field(s.error) + "\n";
      continue;
    }
    for (const auto& ro : s.rules) {
      out += std::to_string(s.seed) + ",1," + io::csv_field(ro.rule_label) + "," +
             maybe_number(s.delta) + "," + io::format_double(ro.accuracy) + "," +
             std::to_string(s.iterations) + "," + s.stop_reason + ",\n";
    }
  }
  return out;
}

Outcome run_eval(const Json& config, const fs::path& base, const Overrides& o) {
  SweepPlan plan;
  if (config.contains("preset")) {
    plan = sweep_preset(io::json_string(config, "preset", "config"));
    if (config.contains("seeds")) {
      plan.seeds.clear();
      const Json& s = config["seeds"];
      if (!s.is_array() || s.empty()) throw ValidationError("config: 'seeds' must be a non-empty array");
      for (const auto& v : s) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
          throw ValidationError("config: seeds must be non-negative integers");
        }
        plan.seeds.push_back(v.get<std::uint64_t>());
      }
    }
  } else {
    plan = sweep_from_json(io::json_require(config, "sweep", "config"));
  }
  if (o.seed) plan.seeds = {*o.seed};

  const auto results = run_sweep(plan, o.workers);
  const fs::path dir = output_dir(config, base);
  Outcome out;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "cell_%04zu.csv", i);
    write(out, dir / "cells" / name, serialize_cell(results[i]));
    for (const auto& s : results[i].seeds) failed += !s.ok;
  }
  write(out, dir / "sweep.csv", serialize_sweep(results));
  out.summary = std::to_string(results.size()) + " cells x " + std::to_string(plan.seeds.size()) +
                " seeds, " + std::to_string(failed) + " failed runs";
  return out;
}

}  // namespace attn::cli
