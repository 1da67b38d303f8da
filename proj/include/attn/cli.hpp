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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attn/io.hpp"
#include "attn/sweep.hpp"

namespace attn::cli {

namespace fs = std::filesystem;

// Command-line overrides applied on top of the JSON config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  bool strict = false;
  int workers = 1;
};

struct Outcome {
  int exit_code = 0;
  std::vector<fs::path> written;
  std::string summary;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;

// Exit status for an exception escaping a command.
int exit_code_for(const std::exception& e);

// Worker count from ATTN_WORKERS; 1 when unset or invalid.
int workers_from_env();

// Each command reads its parameters from `config`; relative paths resolve
// against `base_dir`.
Outcome run_simulate(const io::Json& config, const fs::path& base_dir, const Overrides& o);
Outcome run_fit(const io::Json& config, const fs::path& base_dir, const Overrides& o);
Outcome run_infer(const io::Json& config, const fs::path& base_dir, const Overrides& o);
Outcome run_filter(const io::Json& config, const fs::path& base_dir, const Overrides& o);
Outcome run_estimate_mu(const io::Json& config, const fs::path& base_dir, const Overrides& o);
Outcome run_eval(const io::Json& config, const fs::path& base_dir, const Overrides& o);

// Sweep grid, expanded into cells.
struct SweepPlan {
  std::vector<SweepCell> cells;
  std::vector<std::uint64_t> seeds;
};
SweepPlan sweep_preset(const std::string& name);
SweepPlan sweep_from_json(const io::Json& j);

struct CellResult {
  SweepCell cell;
  std::vector<SeedOutcome> seeds;
};
// Runs every (cell, seed); cells are spread over `workers` threads.
std::vector<CellResult> run_sweep(const SweepPlan& plan, int workers);
// sweep.csv: one row per (cell, rule), mean and sd over seeds.
std::string serialize_sweep(std::span<const CellResult> results);
// Per-seed rows of one cell.
std::string serialize_cell(const CellResult& result);

}  // namespace attn::cli
