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

#include "attn/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include "attn/error.hpp"

namespace attn::io {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& msg) {
  throw ValidationError(source + ":" + std::to_string(line) + ": " + msg);
}

double parse_number(std::string_view s, const std::string& source, std::size_t line,
                    const char* what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) {
    fail_at(source, line, std::string("invalid ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

// Data rows of a CSV whose header must start with `expected`. Blank lines
// are skipped; row numbers are 1-based file lines.
std::vector<std::pair<std::size_t, std::vector<std::string>>> csv_rows(
    std::string_view text, const std::string& source, std::span<const std::string_view> expected) {
  auto rows = parse_csv(text, source);
  if (rows.empty()) fail_at(source, 1, "missing header");
  const auto& header = rows.front();
  if (header.size() < expected.size()) fail_at(source, 1, "header has too few columns");
  for (std::size_t k = 0; k < expected.size(); ++k) {
    if (header[k] != expected[k]) {
      fail_at(source, 1, "expected column '" + std::string(expected[k]) + "', found '" +
                             header[k] + "'");
    }
  }
  std::vector<std::pair<std::size_t, std::vector<std::string>>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == 1 && rows[r][0].empty()) continue;
    if (rows[r].size() != header.size()) {
      fail_at(source, r + 1,
              "expected " + std::to_string(header.size()) + " fields, found " +
                  std::to_string(rows[r].size()));
    }
    out.emplace_back(r + 1, std::move(rows[r]));
  }
  return out;
}

const Json& require(const Json& j, const char* key, const char* context) {
  if (!j.is_object()) throw ValidationError(std::string(context) + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError(std::string(context) + ": missing key '" + key + "'");
  }
  return *it;
}

double get_number(const Json& j, const char* key, const char* context) {
  const Json& v = require(j, key, context);
  if (!v.is_number()) {
    throw ValidationError(std::string(context) + ": '" + key + "' must be a number");
  }
  return v.get<double>();
}

double get_number_or(const Json& j, const char* key, double fallback, const char* context) {
  return j.contains(key) ? get_number(j, key, context) : fallback;
}

std::int64_t get_int(const Json& j, const char* key, const char* context) {
  const Json& v = require(j, key, context);
  if (!v.is_number_integer()) {
    throw ValidationError(std::string(context) + ": '" + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

std::string get_string(const Json& j, const char* key, const char* context) {
  const Json& v = require(j, key, context);
  if (!v.is_string()) {
    throw ValidationError(std::string(context) + ": '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

std::string tail_column(double eta_star) { return "tail_" + format_double(eta_star); }

}  // namespace

const Json& json_require(const Json& j, const char* key, const char* context) {
  return require(j, key, context);
}
double json_number(const Json& j, const char* key, const char* context) {
  return get_number(j, key, context);
}
double json_number_or(const Json& j, const char* key, double fallback, const char* context) {
  return get_number_or(j, key, fallback, context);
}
std::int64_t json_int(const Json& j, const char* key, const char* context) {
  return get_int(j, key, context);
}
std::int64_t json_int_or(const Json& j, const char* key, std::int64_t fallback,
                         const char* context) {
  return j.contains(key) ? get_int(j, key, context) : fallback;
}
std::string json_string(const Json& j, const char* key, const char* context) {
  return get_string(j, key, context);
}
std::string json_string_or(const Json& j, const char* key, const std::string& fallback,
                           const char* context) {
  return j.contains(key) ? get_string(j, key, context) : fallback;
}
bool json_bool_or(const Json& j, const char* key, bool fallback, const char* context) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) {
    throw ValidationError(std::string(context) + ": '" + key + "' must be true or false");
  }
  return j[key].get<bool>();
}

std::string format_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, p);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return ss.str();
}

void write_atomic(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory '" + path.parent_path().string() +
                    "': " + ec.message());
    }
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " +
                        ec.message());
}

Json parse_json(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line number
    const std::size_t upto = e.byte > text.size() ? text.size() : e.byte - 1;
    std::size_t line = 1;
    for (std::size_t i = 0; i < upto; ++i) line += text[i] == '\n';
    fail_at(source, line, std::string("JSON syntax error: ") + e.what());
  }
}

Json read_json(const fs::path& path) { return parse_json(read_text(path), path.string()); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text, const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t quote_line = 0;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    rows.push_back(std::move(row));
    row.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) fail_at(source, line, "unexpected quote inside a field");
        quoted = true;
        field_started = true;
        quote_line = line;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) fail_at(source, quote_line, "unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

AnnotationFile parse_annotations(std::string_view text, const std::string& source) {
  AnnotationFile out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail_at(source, line_no, std::string("JSON syntax error: ") + e.what());
    }
    if (!j.is_object()) fail_at(source, line_no, "expected a JSON object");
    AnnotationRecord r;
    for (const char* key : {"user_id", "item_id"}) {
      auto it = j.find(key);
      if (it == j.end() || !it->is_string()) {
        fail_at(source, line_no, std::string("'") + key + "' must be a string");
      }
    }
    r.user_id = j["user_id"].get<std::string>();
    r.item_id = j["item_id"].get<std::string>();
    auto it = j.find("label");
    if (it == j.end() || !it->is_number_integer() ||
        (it->get<std::int64_t>() != 0 && it->get<std::int64_t>() != 1)) {
      fail_at(source, line_no, "'label' must be 0 or 1");
    }
    r.label = static_cast<int>(it->get<std::int64_t>());
    out.records.push_back(std::move(r));
    out.lines.emplace_back(line);
  }
  return out;
}

AnnotationFile read_annotations(const fs::path& path) {
  return parse_annotations(read_text(path), path.string());
}

std::string format_annotation(const AnnotationRecord& r) {
  Json j;
  j["user_id"] = r.user_id;
  j["item_id"] = r.item_id;
  j["label"] = r.label;
  return j.dump();
}

std::string serialize_annotations(std::span<const AnnotationRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += format_annotation(r);
    out += '\n';
  }
  return out;
}

std::string serialize_truth(const TruthTable& truth) {
  std::string out = "user_id,eta\n";
  for (const auto& [id, eta] : truth) out += csv_field(id) + "," + format_double(eta) + "\n";
  return out;
}

TruthTable parse_truth(std::string_view text, const std::string& source) {
  static constexpr std::string_view kHeader[] = {"user_id", "eta"};
  TruthTable out;
  for (auto& [line, row] : csv_rows(text, source, kHeader)) {
    const double eta = parse_number(row[1], source, line, "eta");
    if (eta < 0.0 || eta > 1.0) fail_at(source, line, "eta must lie in [0, 1]");
    out.emplace_back(std::move(row[0]), eta);
  }
  return out;
}

TruthTable read_truth(const fs::path& path) { return parse_truth(read_text(path), path.string()); }

std::string serialize_scored_pairs(std::span<const ScoredPair> pairs) {
  std::string out = "item_id,score_a,score_b\n";
  for (const auto& p : pairs) {
    out += csv_field(p.item_id) + "," + format_double(p.score_a) + "," +
           format_double(p.score_b) + "\n";
  }
  return out;
}

std::vector<ScoredPair> parse_scored_pairs(std::string_view text, const std::string& source) {
  static constexpr std::string_view kHeader[] = {"item_id", "score_a", "score_b"};
  std::vector<ScoredPair> out;
  for (auto& [line, row] : csv_rows(text, source, kHeader)) {
    out.push_back({std::move(row[0]), parse_number(row[1], source, line, "score_a"),
                   parse_number(row[2], source, line, "score_b")});
  }
  return out;
}

std::string serialize_posteriors(std::span<const PosteriorSummary> summaries,
                                 std::span<const double> eta_stars) {
  std::string out = "user_id,map,mean";
  for (double s : eta_stars) out += "," + tail_column(s);
  out += '\n';
  for (const auto& s : summaries) {
    out += csv_field(s.user_id) + "," + format_double(s.map_eta) + "," +
           format_double(s.mean_eta);
    for (double e : eta_stars) out += "," + format_double(s.tail_prob(e));
    out += '\n';
  }
  return out;
}

std::string rule_label(const FilterRule& rule) {
  return std::visit(
      Overloaded{
          [](const TailProbabilityRule& r) {
            return "tail_probability:" + format_double(r.eta_star) + ":" + format_double(r.level);
          },
          [](const TopFractionRule& r) { return "top_fraction:" + format_double(r.fraction); },
          [](const ThresholdRule& r) { return "threshold:" + format_double(r.value); },
      },
      rule);
}

FilterRule parse_rule_label(std::string_view label) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const std::size_t c = label.find(':', pos);
    parts.push_back(label.substr(pos, c == std::string_view::npos ? c : c - pos));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  auto num = [&](std::size_t k) {
    return parse_number(parts[k], "rule", 1, "rule parameter");
  };
  const std::string_view kind = parts[0];
  if (kind == "tail_probability" && parts.size() == 3) {
    return TailProbabilityRule{num(1), num(2)};
  }
  if (kind == "top_fraction" && parts.size() == 2) return TopFractionRule{num(1)};
  if (kind == "threshold" && parts.size() == 2) return ThresholdRule{num(1), std::nullopt};
  throw ValidationError("unrecognized rule '" + std::string(label) + "'");
}

std::string serialize_decisions(std::span<const FilterDecision> decisions) {
  std::string out = "user_id,attentive,score,rule\n";
  for (const auto& d : decisions) {
    out += csv_field(d.user_id) + "," + (d.attentive ? "1" : "0") + "," +
           format_double(d.score) + "," + rule_label(d.rule) + "\n";
  }
  return out;
}

std::vector<FilterDecision> parse_decisions(std::string_view text, const std::string& source) {
  static constexpr std::string_view kHeader[] = {"user_id", "attentive", "score", "rule"};
  std::vector<FilterDecision> out;
  for (auto& [line, row] : csv_rows(text, source, kHeader)) {
    if (row[1] != "0" && row[1] != "1") fail_at(source, line, "'attentive' must be 0 or 1");
    FilterRule rule;
    try {
      rule = parse_rule_label(row[3]);
    } catch (const ValidationError& e) {
      fail_at(source, line, e.what());
    }
    out.push_back({std::move(row[0]), row[1] == "1", rule,
                   parse_number(row[2], source, line, "score")});
  }
  return out;
}

std::string serialize_pairs(std::span<const AnnotationRecord> records) {
  std::string out;
  for (const auto& r : records) {
    Json j;
    j["item_id"] = r.item_id;
    j["chosen"] = r.label == 1 ? "A" : "B";
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string serialize_trajectory(const FitReport& report) {
  if (report.trajectory.empty()) return "iter,loglik,objective\n";
  std::string out = "iter";
  for (const auto& name : parameter_names(report.trajectory.front().params)) out += "," + name;
  out += ",loglik,objective\n";
  for (const auto& rec : report.trajectory) {
    out += std::to_string(rec.iteration);
    for (double v : flatten(rec.params)) out += "," + format_double(v);
    out += "," + format_double(rec.loglik) + "," + format_double(rec.objective) + "\n";
  }
  return out;
}

Json to_json(const AttentivenessPrior& prior) {
  Json j;
  std::visit(Overloaded{
                 [&](const TwoPointPrior& p) {
                   j["family"] = "two_point";
                   j["q1"] = p.q1;
                   j["eta_lo"] = p.eta_lo;
                   j["eta_hi"] = p.eta_hi;
                 },
                 [&](const BetaPrior& p) {
                   j["family"] = "beta";
                   j["alpha"] = p.alpha;
                   j["beta"] = p.beta;
                 },
                 [&](const LogisticNormalMixture& p) {
                   j["family"] = "logistic_normal_mixture";
                   j["components"] = Json::array();
                   for (const auto& c : p.components) {
                     j["components"].push_back(
                         Json{{"weight", c.weight}, {"mean", c.mean}, {"sigma", c.sigma}});
                   }
                 },
             },
             prior);
  return j;
}

AttentivenessPrior prior_from_json(const Json& j) {
  constexpr const char* ctx = "prior";
  const std::string family = get_string(j, "family", ctx);
  AttentivenessPrior out;
  if (family == "two_point") {
    out = TwoPointPrior{get_number(j, "q1", ctx), get_number(j, "eta_lo", ctx),
                        get_number(j, "eta_hi", ctx)};
  } else if (family == "beta") {
    out = BetaPrior{get_number(j, "alpha", ctx), get_number(j, "beta", ctx)};
  } else if (family == "logistic_normal_mixture") {
    const Json& comps = require(j, "components", ctx);
    if (!comps.is_array()) throw ValidationError("prior: 'components' must be an array");
    LogisticNormalMixture mix;
    for (const auto& c : comps) {
      mix.components.push_back({get_number(c, "weight", "prior component"),
                                get_number(c, "mean", "prior component"),
                                get_number(c, "sigma", "prior component")});
    }
    out = std::move(mix);
  } else {
    throw ValidationError("prior: unknown family '" + family + "'");
  }
  validate(out, /*allow_degenerate_two_point=*/true);
  return out;
}

Json to_json(const ModelParams& params) {
  Json j;
  j["prior"] = to_json(params.prior);
  j["mu"] = params.mu;
  j["mu_mode"] = params.mu_mode == MuMode::Free ? "free" : "fixed";
  return j;
}

ModelParams params_from_json(const Json& j) {
  constexpr const char* ctx = "params";
  ModelParams out;
  out.prior = prior_from_json(require(j, "prior", ctx));
  out.mu = get_number(j, "mu", ctx);
  const std::string mode = j.contains("mu_mode") ? get_string(j, "mu_mode", ctx) : "fixed";
  if (mode == "fixed") {
    out.mu_mode = MuMode::Fixed;
  } else if (mode == "free") {
    out.mu_mode = MuMode::Free;
  } else {
    throw ValidationError("params: mu_mode must be 'fixed' or 'free'");
  }
  return out;
}

Json to_json(const TruePriorSpec& spec) {
  Json j;
  std::visit(Overloaded{
                 [&](const TwoPointPrior& p) { j = to_json(AttentivenessPrior{p}); },
                 [&](const BetaPrior& p) { j = to_json(AttentivenessPrior{p}); },
                 [&](const BetaMixtureSpec& p) {
                   j["family"] = "beta_mixture";
                   j["components"] = Json::array();
                   for (const auto& c : p.components) {
                     j["components"].push_back(
                         Json{{"weight", c.weight}, {"alpha", c.alpha}, {"beta", c.beta}});
                   }
                 },
                 [&](const LogisticNormalSpec& p) {
                   j["family"] = "logistic_normal";
                   j["mean"] = p.mean;
                   j["sigma"] = p.sigma;
                 },
                 [&](const DiscreteMassesSpec& p) {
                   j["family"] = "discrete_masses";
                   j["masses"] = Json::array();
                   for (const auto& m : p.masses) {
                     j["masses"].push_back(Json{{"weight", m.weight}, {"eta", m.eta}});
                   }
                 },
             },
             spec);
  return j;
}

TruePriorSpec true_prior_from_json(const Json& j) {
  constexpr const char* ctx = "true prior";
  const std::string family = get_string(j, "family", ctx);
  TruePriorSpec out;
  if (family == "two_point") {
    out = TwoPointPrior{get_number(j, "q1", ctx), get_number(j, "eta_lo", ctx),
                        get_number(j, "eta_hi", ctx)};
  } else if (family == "beta") {
    out = BetaPrior{get_number(j, "alpha", ctx), get_number(j, "beta", ctx)};
  } else if (family == "beta_mixture") {
    BetaMixtureSpec mix;
    for (const auto& c : require(j, "components", ctx)) {
      mix.components.push_back({get_number(c, "weight", ctx), get_number(c, "alpha", ctx),
                                get_number(c, "beta", ctx)});
    }
    out = std::move(mix);
  } else if (family == "logistic_normal") {
    out = LogisticNormalSpec{get_number(j, "mean", ctx), get_number(j, "sigma", ctx)};
  } else if (family == "discrete_masses") {
    DiscreteMassesSpec masses;
    for (const auto& m : require(j, "masses", ctx)) {
      masses.masses.push_back({get_number(m, "weight", ctx), get_number(m, "eta", ctx)});
    }
    out = std::move(masses);
  } else {
    throw ValidationError("true prior: unknown family '" + family + "'");
  }
  validate(out);
  return out;
}

Json to_json(const SimulationScenario& sc) {
  Json j;
  j["name"] = sc.name;
  j["prior"] = to_json(sc.prior);
  j["mu"] = sc.mu;
  j["num_users"] = sc.num_users;
  j["n_min"] = sc.n_min;
  j["n_max"] = sc.n_max;
  j["seed"] = sc.seed;
  if (sc.per_item_p) j["per_item_p"] = Json{{"a", sc.per_item_p->a}, {"b", sc.per_item_p->b}};
  return j;
}

SimulationScenario scenario_from_json(const Json& j) {
  constexpr const char* ctx = "scenario";
  if (!j.is_object()) throw ValidationError("scenario: expected an object");
  SimulationScenario sc;
  if (j.contains("preset")) sc = scenario_preset(get_string(j, "preset", ctx));
  if (j.contains("name")) sc.name = get_string(j, "name", ctx);
  if (j.contains("prior")) sc.prior = true_prior_from_json(j["prior"]);
  sc.mu = get_number_or(j, "mu", sc.mu, ctx);
  auto int_field = [&](const char* key, int& dst) {
    if (!j.contains(key)) return;
    const auto v = get_int(j, key, ctx);
    if (v < 0 || v > std::numeric_limits<int>::max()) {
      throw ValidationError(std::string("scenario: '") + key + "' out of range");
    }
    dst = static_cast<int>(v);
  };
  int_field("num_users", sc.num_users);
  int_field("n_min", sc.n_min);
  int_field("n_max", sc.n_max);
  if (j.contains("n")) {
    int n = 0;
    int_field("n", n);
    sc.n_min = sc.n_max = n;
  }
  if (j.contains("seed")) {
    const Json& s = j["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      throw ValidationError("scenario: 'seed' must be a non-negative integer");
    }
    sc.seed = s.get<std::uint64_t>();
  }
  if (j.contains("per_item_p")) {
    const Json& p = j["per_item_p"];
    if (p.is_null()) {
      sc.per_item_p.reset();
    } else {
      sc.per_item_p = PerItemBeta{get_number(p, "a", "per_item_p"), get_number(p, "b", "per_item_p")};
    }
  }
  validate(sc);
  return sc;
}

Json to_json(const RegularizerSpec& reg) {
  return std::visit(
      Overloaded{
          [](const NoRegularizer&) { return Json{{"kind", "none"}}; },
          [](const LogPriorOnMu& r) {
            // The log-prior applies to mu (Beta(a, b) density up to a constant).
            return Json{{"kind", "log_prior_on_mu"},
                        {"a", r.a},
                        {"b", r.b},
                        {"form", "(a-1)*log(mu) + (b-1)*log(1-mu)"}};
          },
          [](const BoxOnMu& r) { return Json{{"kind", "box_on_mu"}, {"lo", r.lo}, {"hi", r.hi}}; },
      },
      reg);
}

RegularizerSpec regularizer_from_json(const Json& j) {
  constexpr const char* ctx = "regularizer";
  const std::string kind = get_string(j, "kind", ctx);
  RegularizerSpec out;
  if (kind == "none") {
    out = NoRegularizer{};
  } else if (kind == "log_prior_on_mu") {
    out = LogPriorOnMu{get_number_or(j, "a", 8.0, ctx), get_number_or(j, "b", 2.0, ctx)};
  } else if (kind == "box_on_mu") {
    out = BoxOnMu{get_number(j, "lo", ctx), get_number(j, "hi", ctx)};
  } else {
    throw ValidationError("regularizer: unknown kind '" + kind + "'");
  }
  validate(out);
  return out;
}

Json to_json(const FilterRule& rule) {
  return std::visit(
      Overloaded{
          [](const TailProbabilityRule& r) {
            return Json{{"kind", "tail_probability"}, {"eta_star", r.eta_star}, {"level", r.level}};
          },
          [](const TopFractionRule& r) {
            return Json{{"kind", "top_fraction"}, {"fraction", r.fraction}};
          },
          [](const ThresholdRule& r) {
            Json j{{"kind", "threshold"}, {"value", r.value}};
            if (r.prior_quantile) j["prior_quantile"] = *r.prior_quantile;
            return j;
          },
      },
      rule);
}

FilterRule rule_from_json(const Json& j) {
  constexpr const char* ctx = "rule";
  const std::string kind = get_string(j, "kind", ctx);
  if (kind == "tail_probability") {
    TailProbabilityRule r{get_number_or(j, "eta_star", 0.5, ctx), get_number_or(j, "level", 0.95, ctx)};
    if (!(r.eta_star >= 0.0 && r.eta_star <= 1.0) || !(r.level >= 0.0 && r.level <= 1.0)) {
      throw ValidationError("rule: eta_star and level must lie in [0, 1]");
    }
    return r;
  }
  if (kind == "top_fraction") {
    TopFractionRule r{get_number(j, "fraction", ctx)};
    if (!(r.fraction > 0.0 && r.fraction <= 1.0)) {
      throw ValidationError("rule: fraction must lie in (0, 1]");
    }
    return r;
  }
  if (kind == "threshold") {
    ThresholdRule r;
    if (j.contains("prior_quantile")) {
      r.prior_quantile = get_number(j, "prior_quantile", ctx);
      if (!(*r.prior_quantile > 0.0 && *r.prior_quantile < 1.0)) {
        throw ValidationError("rule: prior_quantile must lie in (0, 1)");
      }
      r.value = get_number_or(j, "value", 0.0, ctx);
    } else {
      r.value = get_number(j, "value", ctx);
    }
    return r;
  }
  throw ValidationError("rule: unknown kind '" + kind + "'");
}

}  // namespace attn::io
