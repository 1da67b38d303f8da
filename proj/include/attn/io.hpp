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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "attn/em.hpp"
#include "attn/inference.hpp"
#include "attn/model.hpp"
#include "attn/posterior.hpp"
#include "attn/simulate.hpp"

namespace attn::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

std::string read_text(const fs::path& path);
// Writes to a sibling temporary file, then renames over `path`. Creates
// missing parent directories.
void write_atomic(const fs::path& path, std::string_view content);
// Parses a JSON document; syntax errors carry the path and line number.
Json read_json(const fs::path& path);
Json parse_json(std::string_view text, const std::string& source);

// Minimal RFC 4180 CSV.
std::string csv_field(std::string_view s);
std::vector<std::vector<std::string>> parse_csv(std::string_view text,
                                                const std::string& source);

// Annotations: one {"user_id","item_id","label"} object per line. The raw
// lines are kept so that filtered output reproduces its input byte-for-byte.
struct AnnotationFile {
  std::vector<AnnotationRecord> records;
  std::vector<std::string> lines;
};

AnnotationFile parse_annotations(std::string_view text, const std::string& source);
AnnotationFile read_annotations(const fs::path& path);
std::string format_annotation(const AnnotationRecord& record);
std::string serialize_annotations(std::span<const AnnotationRecord> records);

// truth.csv: user_id,eta
using TruthTable = std::vector<std::pair<std::string, double>>;
std::string serialize_truth(const TruthTable& truth);
TruthTable parse_truth(std::string_view text, const std::string& source);
TruthTable read_truth(const fs::path& path);

// Scored pairs: item_id,score_a,score_b
std::string serialize_scored_pairs(std::span<const ScoredPair> pairs);
std::vector<ScoredPair> parse_scored_pairs(std::string_view text, const std::string& source);

// posteriors.csv: user_id,map,mean,tail_<eta*>...
std::string serialize_posteriors(std::span<const PosteriorSummary> summaries,
                                 std::span<const double> eta_stars);

// decisions.csv: user_id,attentive,score,rule
std::string rule_label(const FilterRule& rule);
FilterRule parse_rule_label(std::string_view label);
std::string serialize_decisions(std::span<const FilterDecision> decisions);
std::vector<FilterDecision> parse_decisions(std::string_view text, const std::string& source);

// pairs.jsonl: {"item_id","chosen"} with chosen = "A" when the label is 1.
std::string serialize_pairs(std::span<const AnnotationRecord> records);

// trajectory.csv: iter, one column per parameter, loglik, objective.
std::string serialize_trajectory(const FitReport& report);

// Typed access to config objects; failures throw ValidationError naming
// `context` and the key.
const Json& json_require(const Json& j, const char* key, const char* context);
double json_number(const Json& j, const char* key, const char* context);
double json_number_or(const Json& j, const char* key, double fallback, const char* context);
std::int64_t json_int(const Json& j, const char* key, const char* context);
std::int64_t json_int_or(const Json& j, const char* key, std::int64_t fallback,
                         const char* context);
std::string json_string(const Json& j, const char* key, const char* context);
std::string json_string_or(const Json& j, const char* key, const std::string& fallback,
                           const char* context);
bool json_bool_or(const Json& j, const char* key, bool fallback, const char* context);

// JSON forms of the domain types. Parsers throw ValidationError naming the
// offending key.
Json to_json(const AttentivenessPrior& prior);
AttentivenessPrior prior_from_json(const Json& j);
Json to_json(const ModelParams& params);
ModelParams params_from_json(const Json& j);
Json to_json(const TruePriorSpec& spec);
TruePriorSpec true_prior_from_json(const Json& j);
Json to_json(const SimulationScenario& scenario);
// Accepts {"preset": name, ...overrides} or a full scenario.
SimulationScenario scenario_from_json(const Json& j);
Json to_json(const RegularizerSpec& reg);
RegularizerSpec regularizer_from_json(const Json& j);
Json to_json(const FilterRule& rule);
FilterRule rule_from_json(const Json& j);

}  // namespace attn::io
