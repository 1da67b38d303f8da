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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "attn/cli.hpp"
#include "attn/error.hpp"
#include "attn/io.hpp"

using namespace attn;
using attn::io::Json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("attn_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::size_t count_lines(const fs::path& p) {
  const std::string s = io::read_text(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

Json simulate_config(const std::string& out, Json scenario) {
  return Json{{"scenario", std::move(scenario)}, {"output_dir", out}};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(ATTN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& p, const Json& j) { io::write_atomic(p, j.dump(2)); }

}  // namespace

TEST_CASE("simulate: determinism and line counts") {
  TempDir t("sim");
  const Json sc{{"prior", {{"family", "beta"}, {"alpha", 3}, {"beta", 5}}},
                {"mu", 0.8}, {"num_users", 400}, {"n_min", 50}, {"n_max", 100}, {"seed", 4}};
  cli::run_simulate(simulate_config("a", sc), t.path, {});
  cli::run_simulate(simulate_config("b", sc), t.path, {});
  for (const char* f : {"annotations.jsonl", "truth.csv", "scenario.json"}) {
    CHECK(io::read_text(t.path / "a" / f) == io::read_text(t.path / "b" / f));
  }
  const auto lines = count_lines(t.path / "a" / "annotations.jsonl");
  CHECK(lines >= 20000);
  CHECK(lines <= 40000);
  CHECK(count_lines(t.path / "a" / "truth.csv") == 401);

  cli::run_simulate(simulate_config("c", Json{{"preset", "table3_twopoint_400_100"}}), t.path, {});
  CHECK(count_lines(t.path / "c" / "annotations.jsonl") == 40000);

  cli::Overrides o;
  o.seed = 99;
  o.workers = 4;
  const auto out = cli::run_simulate(simulate_config("d", sc), t.path, o);
  CHECK(out.written.size() == 3);
  CHECK(io::read_json(t.path / "d" / "scenario.json")["seed"] == 99);
}

TEST_CASE("fit, infer and filter on a two-point dataset") {
  TempDir t("pipeline");
  cli::run_simulate(simulate_config("data", Json{{"preset", "table3_twopoint_400_100"}}), t.path, {});
  const Json fit_cfg{{"annotations", "data/annotations.jsonl"},
                     {"truth", "data/truth.csv"},
                     {"scenario", "data/scenario.json"},
                     {"model", {{"family", "two_point"}, {"mu", 0.8}}},
                     {"output_dir", "fit"}};
  const auto fit_out = cli::run_fit(fit_cfg, t.path, {});
  CHECK(fit_out.exit_code == 0);
  const Json fit = io::read_json(t.path / "fit" / "fit.json");
  CHECK(fit["stop_reason"] == "param_tol");
  REQUIRE(fit["truth"]["delta"].is_number());
  CHECK(fit["truth"]["delta"].get<double>() < 0.1);

  // The loglik column of the trajectory never decreases.
  const auto rows = io::parse_csv(io::read_text(t.path / "fit" / "trajectory.csv"), "trajectory");
  REQUIRE(rows.size() >= 3);
  const auto col = std::find(rows[0].begin(), rows[0].end(), "loglik") - rows[0].begin();
  for (std::size_t r = 2; r < rows.size(); ++r) {
    CHECK(std::stod(rows[r][col]) >= std::stod(rows[r - 1][col]) - 1e-9);
  }

  // Re-running gives the same fit.json.
  Json fit_cfg2 = fit_cfg;
  fit_cfg2["output_dir"] = "fit2";
  cli::run_fit(fit_cfg2, t.path, {});
  CHECK(io::read_text(t.path / "fit" / "fit.json") == io::read_text(t.path / "fit2" / "fit.json"));

  // Keep everyone: filtered.jsonl reproduces the input.
  Json infer_cfg{{"annotations", "data/annotations.jsonl"},
                 {"fit", "fit/fit.json"},
                 {"rule", {{"kind", "top_fraction"}, {"fraction", 1.0}}},
                 {"output_dir", "all"}};
  cli::run_infer(infer_cfg, t.path, {});
  CHECK(io::read_text(t.path / "all" / "filtered.jsonl") ==
        io::read_text(t.path / "data" / "annotations.jsonl"));

  // Keep 80%: exactly 320 of 400 users.
  infer_cfg["rule"]["fraction"] = 0.8;
  infer_cfg["output_dir"] = "top80";
  cli::run_infer(infer_cfg, t.path, {});
  const auto decisions =
      io::parse_decisions(io::read_text(t.path / "top80" / "decisions.csv"), "decisions");
  REQUIRE(decisions.size() == 400);
  CHECK(std::count_if(decisions.begin(), decisions.end(), [](const auto& d) { return d.attentive; }) == 320);
  CHECK(count_lines(t.path / "top80" / "filtered.jsonl") == 320 * 100);

  // pairs.jsonl lines up with filtered.jsonl; label 1 means A was chosen.
  const auto kept = io::read_annotations(t.path / "top80" / "filtered.jsonl");
  std::ifstream pairs(t.path / "top80" / "pairs.jsonl");
  std::string line;
  std::size_t i = 0;
  while (std::getline(pairs, line)) {
    const Json p = Json::parse(line);
    REQUIRE(i < kept.records.size());
    CHECK(p["item_id"] == kept.records[i].item_id);
    CHECK(p["chosen"] == (kept.records[i].label == 1 ? "A" : "B"));
    ++i;
  }
  CHECK(i == kept.records.size());

  // The standalone filter command reproduces infer's output from decisions.csv.
  cli::run_filter(Json{{"annotations", "data/annotations.jsonl"},
                       {"decisions", "top80/decisions.csv"},
                       {"output_dir", "refilter"}},
                  t.path, {});
  CHECK(io::read_text(t.path / "refilter" / "filtered.jsonl") ==
        io::read_text(t.path / "top80" / "filtered.jsonl"));
  CHECK(io::read_text(t.path / "refilter" / "pairs.jsonl") ==
        io::read_text(t.path / "top80" / "pairs.jsonl"));

  // Posteriors have the requested tail columns.
  infer_cfg["rule"] = Json{{"kind", "tail_probability"}, {"eta_star", 0.7}, {"level", 0.9}};
  infer_cfg["output_dir"] = "tail";
  cli::run_infer(infer_cfg, t.path, {});
  const auto post = io::parse_csv(io::read_text(t.path / "tail" / "posteriors.csv"), "p");
  CHECK(post[0] == std::vector<std::string>{"user_id", "map", "mean", "tail_0.5", "tail_0.7"});
}

TEST_CASE("reversed orientation is flipped on the way in") {
  TempDir t("flip");
  cli::run_simulate(simulate_config("data", Json{{"preset", "table3_twopoint_200_50"}, {"seed", 3}}),
                    t.path, {});
  // Invert every label: now B is the stronger model with mu = 0.2.
  const auto ann = io::read_annotations(t.path / "data" / "annotations.jsonl");
  auto inverted = ann.records;
  for (auto& r : inverted) r.label = 1 - r.label;
  io::write_atomic(t.path / "inv.jsonl", io::serialize_annotations(inverted));
  io::write_atomic(t.path / "orig.jsonl", io::serialize_annotations(ann.records));

  cli::run_fit(Json{{"annotations", "orig.jsonl"}, {"model", {{"family", "two_point"}, {"mu", 0.8}}},
                    {"output_dir", "a"}},
               t.path, {});
  cli::run_fit(Json{{"annotations", "inv.jsonl"}, {"model", {{"family", "two_point"}, {"mu", 0.2}}},
                    {"output_dir", "b"}},
               t.path, {});
  const Json a = io::read_json(t.path / "a" / "fit.json");
  const Json b = io::read_json(t.path / "b" / "fit.json");
  CHECK_FALSE(a["orientation_flipped"].get<bool>());
  CHECK(b["orientation_flipped"].get<bool>());
  CHECK(a["params"] == b["params"]);

  // Filtering the inverted file keeps its original lines, and pairs.jsonl
  // reflects the labels as written.
  cli::run_infer(Json{{"annotations", "inv.jsonl"}, {"fit", "b/fit.json"},
                      {"rule", {{"kind", "top_fraction"}, {"fraction", 1.0}}}, {"output_dir", "bi"}},
                 t.path, {});
  CHECK(io::read_text(t.path / "bi" / "filtered.jsonl") == io::read_text(t.path / "inv.jsonl"));
  CHECK(io::read_text(t.path / "bi" / "pairs.jsonl") == io::serialize_pairs(inverted));
}

TEST_CASE("other families fit from the CLI") {
  TempDir t("families");
  cli::run_simulate(simulate_config("data", Json{{"preset", "fig3_beta"}, {"num_users", 150}}), t.path, {});
  const Json beta_free{{"annotations", "data/annotations.jsonl"},
                       {"model", {{"family", "beta"}, {"mu_mode", "free"}}},
                       {"em", {{"regularizer", {{"kind", "log_prior_on_mu"}}}, {"max_iters", 50}}},
                       {"output_dir", "beta"}};
  CHECK(cli::run_fit(beta_free, t.path, {}).exit_code == 0);
  const Json fb = io::read_json(t.path / "beta" / "fit.json");
  CHECK(fb["params"]["mu_mode"] == "free");
  CHECK(fb["regularizer"]["kind"] == "log_prior_on_mu");

  const Json mix{{"annotations", "data/annotations.jsonl"},
                 {"model", {{"family", "logistic_normal_mixture"}, {"mu", 0.8}, {"components", 2}}},
                 {"output_dir", "mix"}};
  CHECK(cli::run_fit(mix, t.path, {}).exit_code == 0);
  const Json fm = io::read_json(t.path / "mix" / "fit.json");
  CHECK(fm["stop_reason"] == "plug_in_step");
  CHECK(fm["params"]["prior"]["components"].size() == 2);
  CHECK(count_lines(t.path / "mix" / "trajectory.csv") == 3);
  // Posterior inference works under the mixture prior as well.
  cli::run_infer(Json{{"annotations", "data/annotations.jsonl"}, {"fit", "mix/fit.json"},
                      {"output_dir", "mixinf"}},
                 t.path, {});
  CHECK(count_lines(t.path / "mixinf" / "decisions.csv") == 151);
}

TEST_CASE("estimate-mu") {
  TempDir t("mu");
  io::write_atomic(t.path / "pairs.csv", "item_id,score_a,score_b\na,1,0\nb,2,1\nc,0,1\nd,1,1\n");
  cli::run_estimate_mu(Json{{"pairs", "pairs.csv"}, {"output_dir", "x"}}, t.path, {});
  const Json j = io::read_json(t.path / "x" / "mu.json");
  CHECK(j["mu"].get<double>() == 0.625);
  CHECK(j["ties"] == 1);
  cli::run_estimate_mu(Json{{"preset", {{"dataset", "ultrafeedback"}, {"model_a", "qwen7b"},
                                        {"model_b", "qwen0.5b"}}},
                            {"output_dir", "y"}},
                       t.path, {});
  CHECK(io::read_json(t.path / "y" / "mu.json")["mu"].get<double>() == 0.98);
}

TEST_CASE("eval sweeps") {
  TempDir t("eval");
  const Json sweep{{"seeds", {1, 2}},
                   {"sizes", {{60, 20, 40}}},
                   {"mu", {0.8, 0.9}},
                   {"priors", {{{"family", "beta"}, {"alpha", 3}, {"beta", 5}}}},
                   {"fits", {{{"family", "match"}}}},
                   {"rules", {{{"kind", "top_fraction"}, {"fraction", 0.5}, {"label", "ranking"}},
                              {{"kind", "threshold"}, {"prior_quantile", 0.5}, {"label", "threshold"}}}}};
  cli::Overrides o;
  o.workers = 2;
  const auto out = cli::run_eval(Json{{"sweep", sweep}, {"output_dir", "s"}}, t.path, o);
  CHECK(out.written.size() == 3);
  const auto rows = io::parse_csv(io::read_text(t.path / "s" / "sweep.csv"), "sweep");
  REQUIRE(rows.size() == 1 + 2 * 2);
  CHECK(rows[0][0] == "cell");
  CHECK(rows[1][9] == "0");
  CHECK(count_lines(t.path / "s" / "cells" / "cell_0000.csv") == 1 + 2 * 2);

  // Worker count does not change the results.
  cli::run_eval(Json{{"sweep", sweep}, {"output_dir", "s1"}}, t.path, {});
  CHECK(io::read_text(t.path / "s" / "sweep.csv") == io::read_text(t.path / "s1" / "sweep.csv"));

  Json empty = sweep;
  empty["seeds"] = Json::array();
  CHECK_THROWS_AS(cli::run_eval(Json{{"sweep", empty}}, t.path, {}), ValidationError);

  const auto table3 = cli::sweep_preset("table3");
  CHECK(table3.cells.size() == 12);
  CHECK(table3.seeds.size() == 10);
  const auto mu_sweep = cli::sweep_preset("mu_sweep");
  CHECK(mu_sweep.cells.size() == 8);
  CHECK_THROWS_AS(cli::sweep_preset("nope"), ValidationError);
}

TEST_CASE("binary exit codes") {
  TempDir t("bin");
  const auto dir = t.path.string();
  write_json(t.path / "sim.json",
             Json{{"scenario", {{"preset", "table3_twopoint_200_50"}}}, {"output_dir", "data"}});
  CHECK(run_binary("simulate -c " + dir + "/sim.json") == 0);
  CHECK(count_lines(t.path / "data" / "annotations.jsonl") == 200 * 50);

  // --seed overrides the config seed.
  write_json(t.path / "sim2.json",
             Json{{"scenario", {{"preset", "table3_twopoint_200_50"}}}, {"output_dir", "data2"}});
  CHECK(run_binary("simulate -c " + dir + "/sim2.json --seed 5") == 0);
  CHECK(io::read_json(t.path / "data2" / "scenario.json")["seed"] == 5);

  write_json(t.path / "fit.json", Json{{"annotations", "data/annotations.jsonl"},
                                       {"model", {{"family", "two_point"}, {"mu", 0.8}}},
                                       {"output_dir", "fit"}});
  CHECK(run_binary("fit -c " + dir + "/fit.json --strict") == 0);

  io::write_atomic(t.path / "bad.json", "{\n  \"scenario\": {\n    \"mu\": ,\n  }\n}\n");
  CHECK(run_binary("simulate -c " + dir + "/bad.json") == 2);
  write_json(t.path / "badmu.json", Json{{"scenario", {{"mu", 1.2}}}});
  CHECK(run_binary("simulate -c " + dir + "/badmu.json") == 2);
  write_json(t.path / "noseeds.json", Json{{"preset", "table3"}, {"seeds", Json::array()}});
  CHECK(run_binary("eval -c " + dir + "/noseeds.json") == 2);
  CHECK(run_binary("simulate -c " + dir + "/missing.json") == 1);
  write_json(t.path / "nofile.json", Json{{"annotations", "nope.jsonl"}, {"model", {{"family", "beta"}}}});
  CHECK(run_binary("fit -c " + dir + "/nofile.json") == 1);
  CHECK(run_binary("frobnicate") == 2);
  CHECK(run_binary("fit") == 2);
}

TEST_CASE("exit code mapping") {
  CHECK(cli::exit_code_for(IoError("x")) == cli::kExitIo);
  CHECK(cli::exit_code_for(ValidationError("x")) == cli::kExitValidation);
  CHECK(cli::exit_code_for(DomainError("x")) == cli::kExitValidation);
  CHECK(cli::exit_code_for(NumericError("x")) == cli::kExitNumeric);
  CHECK(cli::exit_code_for(DegenerateError("x")) == cli::kExitNumeric);
}

TEST_CASE("worker count from the environment") {
  ::setenv("ATTN_WORKERS", "3", 1);
  CHECK(cli::workers_from_env() == 3);
  ::setenv("ATTN_WORKERS", "zero", 1);
  CHECK(cli::workers_from_env() == 1);
  ::unsetenv("ATTN_WORKERS");
  CHECK(cli::workers_from_env() == 1);
}
