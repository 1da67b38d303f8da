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

// attnfilter: simulate, fit, infer, filter, estimate-mu and eval from JSON
// configs.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "attn/cli.hpp"

namespace {

namespace fs = std::filesystem;
using attn::cli::Outcome;
using attn::cli::Overrides;
using Command = std::function<Outcome(const attn::io::Json&, const fs::path&, const Overrides&)>;

struct Invocation {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

int execute(const Command& command, const Invocation& inv) {
  try {
    const fs::path config_path(inv.config_path);
    const attn::io::Json config = attn::io::read_json(config_path);
    if (!config.is_object()) {
      std::cerr << "error: " << inv.config_path << ": config must be a JSON object\n";
      return attn::cli::kExitValidation;
    }
    Overrides overrides;
    overrides.seed = inv.seed;
    overrides.strict = inv.strict;
    overrides.workers = attn::cli::workers_from_env();
    const Outcome out = command(config, config_path.parent_path(), overrides);
    std::cout << out.summary << "\n";
    for (const auto& p : out.written) std::cout << "  wrote " << p.string() << "\n";
    return out.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return attn::cli::exit_code_for(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attentiveness estimation and filtering for pairwise preference annotations"};
  app.require_subcommand(1);

  Invocation inv;
  struct Entry {
    const char* name;
    const char* help;
    Command command;
  };
  const Entry entries[] = {
      {"simulate", "Generate a synthetic annotation dataset", attn::cli::run_simulate},
      {"fit", "Fit the attentiveness model by EM", attn::cli::run_fit},
      {"infer", "Per-user posteriors, decisions and the filtered dataset", attn::cli::run_infer},
      {"filter", "Apply an existing decisions.csv to annotations", attn::cli::run_filter},
      {"estimate-mu", "Preference probability from scored pairs or a preset",
       attn::cli::run_estimate_mu},
      {"eval", "Run a simulate/fit/filter parameter sweep", attn::cli::run_eval},
  };

  const Command* selected = nullptr;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("-c,--config", inv.config_path, "JSON config file")->required();
    sub->add_option("--seed", inv.seed, "Override the seed");
    sub->add_flag("--strict", inv.strict, "Exit with status 3 on a likelihood decrease");
    sub->callback([&selected, &e] { selected = &e.command; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : attn::cli::kExitValidation;
  }
  return execute(*selected, inv);
}
