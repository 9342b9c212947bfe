#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include "mtrx/agent_loop.hpp"
#include "mtrx/error.hpp"
#include "mtrx/labeling.hpp"
#include "mtrx/semantic_encoding.hpp"
#include "mtrx/toy_grpo.hpp"

namespace mtrx {

// ---------------------------------------------------------------------------
// TOML subset: [section] headers, key = value with basic strings, integers, floats and
// booleans, '#' comments. Arrays, inline tables, dotted keys and multi-line strings are
// rejected.
// ---------------------------------------------------------------------------

using TomlValue = std::variant<std::string, std::int64_t, double, bool>;

struct TomlEntry {
  TomlValue value;
  std::size_t line = 0;
};

using TomlTable = std::map<std::string, std::map<std::string, TomlEntry>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

}  // namespace detail

inline TomlTable parse_toml(std::string_view text, const std::string& origin = "config") {
  TomlTable table;
  std::string section;
  table[section];
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    auto bad = [&](const std::string& why) {
      fail(ErrorCode::ConfigInvalid, origin + ":" + std::to_string(line_no) + ": " + why);
    };

    // Strip a comment that is not inside a string.
    bool in_str = false;
    std::size_t cut = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '\\' && in_str) { ++i; continue; }
      if (raw[i] == '"') in_str = !in_str;
      if (raw[i] == '#' && !in_str) { cut = i; break; }
    }
    const std::string_view line = detail::trim(raw.substr(0, cut));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3 || line[1] == '[') bad("malformed section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      if (!detail::bare_key(section)) bad("unsupported section name '" + section + "'");
      if (table.count(section) && !table[section].empty()) bad("section [" + section + "] defined twice");
      table[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) bad("expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view val = detail::trim(line.substr(eq + 1));
    if (!detail::bare_key(key)) bad("unsupported key '" + key + "'");
    if (val.empty()) bad("missing value for '" + key + "'");
    auto& sec = table[section];
    if (sec.count(key)) bad("duplicate key '" + key + "'");

    TomlValue value;
    if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"') bad("unterminated string for '" + key + "'");
      std::string s;
      for (std::size_t i = 1; i + 1 < val.size(); ++i) {
        char c = val[i];
        if (c == '"') bad("unescaped quote in '" + key + "'");
        if (c == '\\') {
          if (i + 2 >= val.size()) bad("dangling escape in '" + key + "'");
          switch (val[++i]) {
            case 'n': c = '\n'; break;
            case 't': c = '\t'; break;
            case '"': c = '"'; break;
            case '\\': c = '\\'; break;
            default: bad("unsupported escape in '" + key + "'");
          }
        }
        s.push_back(c);
      }
      value = std::move(s);
    } else if (val == "true" || val == "false") {
      value = val == "true";
    } else {
      std::string digits;
      for (char c : val)
        if (c != '_') digits.push_back(c);
      const bool hex = digits.rfind("0x", 0) == 0;
      const bool is_float =
          !hex && (digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan");
      const char* b = digits.data();
      const char* e = b + digits.size();
      if (!digits.empty() && digits.front() == '+') ++b;
      if (hex) {
        std::int64_t n = 0;
        const auto r = std::from_chars(b + 2, e, n, 16);
        if (b + 2 == e || r.ec != std::errc() || r.ptr != e) bad("bad hex integer for '" + key + "'");
        value = n;
      } else if (is_float) {
        double d = 0.0;
        const auto r = std::from_chars(b, e, d);
        if (r.ec != std::errc() || r.ptr != e) bad("bad number for '" + key + "'");
        value = d;
      } else {
        std::int64_t n = 0;
        const auto r = std::from_chars(b, e, n);
        if (r.ec != std::errc() || r.ptr != e) bad("bad value for '" + key + "'");
        value = n;
      }
    }
    sec[key] = {std::move(value), line_no};
  }
  return table;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct EncoderSettings {
  std::string backend = "reference";  // reference | http
  std::size_t dims = ReferenceEncoder::kDefaultDims;
  std::uint64_t seed = ReferenceEncoder::kDefaultSeed;
  std::string url;
  int timeout_ms = 2000;
  int retries = 2;
};

struct RetrievalSettings {
  std::size_t k = kDefaultTopK;
  double relevance_threshold = kDefaultRelevanceThreshold;
};

struct AgentSettings {
  std::size_t max_steps = 4;
  std::size_t max_turns = 32;
  std::size_t context_token_budget = 2048;
  std::string policy_backend = "script";  // script | http
  std::string policy_script;
  std::string policy_url;
  std::string tool_backend = "fixture";  // fixture | http
  std::string tool_url;
  std::size_t jobs = 1;
};

struct JudgeSettings {
  std::string backend = "rubric";  // rubric | http
  std::string rubric;
  std::string url;
};

struct PathSettings {
  std::string base;
  std::string docs;
  std::string scenarios;
  std::string traces;
  std::string crops;
  std::string fixture_root;
  std::string trajectories;
  std::string labels;
  std::string records;
  std::string report;
  std::string policy_out;
  std::string curve_out;
};

struct RunConfig {
  EncoderSettings encoder;
  RetrievalSettings retrieval;
  AgentSettings agent;
  toy::ToyConfig grpo;
  LabelThresholds labeling;
  JudgeSettings judge;
  PathSettings paths;

  AgentConfig agent_config() const {
    AgentConfig c;
    c.k = retrieval.k;
    c.relevance_threshold = retrieval.relevance_threshold;
    c.max_steps = agent.max_steps;
    c.max_turns = agent.max_turns;
    c.context_token_budget = agent.context_token_budget;
    return c;
  }

  /// Range checks for every field; the message names the offending key.
  void validate() const {
    auto bad = [](const std::string& key, const std::string& why) { fail(ErrorCode::ConfigInvalid, key + ": " + why); };
    if (encoder.backend != "reference" && encoder.backend != "http") bad("encoder.backend", "must be reference or http");
    if (encoder.dims < 1) bad("encoder.dims", "must be >= 1");
    if (encoder.backend == "http" && encoder.url.empty()) bad("encoder.url", "required for the http backend");
    if (encoder.timeout_ms < 1) bad("encoder.timeout_ms", "must be >= 1");
    if (encoder.retries < 0) bad("encoder.retries", "must be >= 0");
    if (retrieval.k < 1) bad("retrieval.k", "must be >= 1");
    if (!(retrieval.relevance_threshold >= -1.0 && retrieval.relevance_threshold <= 1.0))
      bad("retrieval.relevance_threshold", "must be in [-1, 1]");
    if (agent.max_steps < 1) bad("agent.max_steps", "must be >= 1");
    if (agent.max_turns < 1) bad("agent.max_turns", "must be >= 1");
    if (agent.context_token_budget < 1) bad("agent.context_token_budget", "must be >= 1");
    if (agent.policy_backend != "script" && agent.policy_backend != "http")
      bad("agent.policy_backend", "must be script or http");
    if (agent.tool_backend != "fixture" && agent.tool_backend != "http")
      bad("agent.tool_backend", "must be fixture or http");
    if (agent.jobs < 1) bad("agent.jobs", "must be >= 1");
    if (judge.backend != "rubric" && judge.backend != "http") bad("judge.backend", "must be rubric or http");
    if (!(labeling.stop_speed > 0.0)) bad("labeling.stop_speed", "must be > 0");
    if (!(labeling.accel > 0.0)) bad("labeling.accel", "must be > 0");
    if (!(labeling.turn > 0.0 && labeling.turn < std::numbers::pi)) bad("labeling.turn_deg", "must be in (0, 180)");
    if (!(labeling.lane > 0.0)) bad("labeling.lane", "must be > 0");
    if (!(labeling.terminal_fraction > 0.0 && labeling.terminal_fraction <= 1.0))
      bad("labeling.terminal_fraction", "must be in (0, 1]");
    grpo.validate();
  }
};

namespace detail {

class ConfigReader {
 public:
  ConfigReader(TomlTable table, std::string origin) : table_(std::move(table)), origin_(std::move(origin)) {}

  template <class T>
  void read(const std::string& section, const std::string& key, T& out) {
    auto sit = table_.find(section);
    if (sit == table_.end()) return;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return;
    const std::string name = section + "." + key;
    const TomlValue& v = kit->second.value;
    auto bad = [&](const std::string& why) {
      fail(ErrorCode::ConfigInvalid,
           origin_ + ":" + std::to_string(kit->second.line) + ": " + name + ": " + why);
    };
    if constexpr (std::is_same_v<T, std::string>) {
      if (!std::holds_alternative<std::string>(v)) bad("expected a string");
      out = std::get<std::string>(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!std::holds_alternative<bool>(v)) bad("expected a boolean");
      out = std::get<bool>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (std::holds_alternative<double>(v)) out = std::get<double>(v);
      else if (std::holds_alternative<std::int64_t>(v)) out = static_cast<T>(std::get<std::int64_t>(v));
      else bad("expected a number");
      if (!std::isfinite(out)) bad("must be finite");
    } else {
      if (!std::holds_alternative<std::int64_t>(v)) bad("expected an integer");
      const std::int64_t n = std::get<std::int64_t>(v);
      if constexpr (std::is_unsigned_v<T>) {
        if (n < 0) bad("must be non-negative");
      }
      out = static_cast<T>(n);
    }
    seen_.insert(name);
  }

  void reject_unknown() const {
    for (const auto& [section, entries] : table_) {
      if (section.empty() && !entries.empty())
        fail(ErrorCode::ConfigInvalid, origin_ + ": key '" + entries.begin()->first + "' outside any section");
      for (const auto& [key, entry] : entries) {
        const std::string name = section + "." + key;
        if (!seen_.count(name))
          fail(ErrorCode::ConfigInvalid, origin_ + ":" + std::to_string(entry.line) + ": unknown key '" + name + "'");
      }
    }
  }

 private:
  TomlTable table_;
  std::string origin_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(std::string_view text, const std::string& origin = "config") {
  detail::ConfigReader r(parse_toml(text, origin), origin);
  RunConfig c;
  r.read("encoder", "backend", c.encoder.backend);
  r.read("encoder", "dims", c.encoder.dims);
  r.read("encoder", "seed", c.encoder.seed);
  r.read("encoder", "url", c.encoder.url);
  r.read("encoder", "timeout_ms", c.encoder.timeout_ms);
  r.read("encoder", "retries", c.encoder.retries);

  r.read("retrieval", "k", c.retrieval.k);
  r.read("retrieval", "relevance_threshold", c.retrieval.relevance_threshold);

  r.read("agent", "max_steps", c.agent.max_steps);
  r.read("agent", "max_turns", c.agent.max_turns);
  r.read("agent", "context_token_budget", c.agent.context_token_budget);
  r.read("agent", "policy_backend", c.agent.policy_backend);
  r.read("agent", "policy_script", c.agent.policy_script);
  r.read("agent", "policy_url", c.agent.policy_url);
  r.read("agent", "tool_backend", c.agent.tool_backend);
  r.read("agent", "tool_url", c.agent.tool_url);
  r.read("agent", "jobs", c.agent.jobs);

  r.read("grpo", "group_size", c.grpo.grpo.group_size);
  r.read("grpo", "beta", c.grpo.grpo.beta);
  r.read("grpo", "epsilon", c.grpo.grpo.clip_eps);
  r.read("grpo", "advantage_floor", c.grpo.grpo.advantage_floor);
  r.read("grpo", "lambda", c.grpo.lambda);
  r.read("grpo", "iterations", c.grpo.iterations);
  r.read("grpo", "seed", c.grpo.seed);
  r.read("grpo", "learning_rate", c.grpo.learning_rate);
  r.read("grpo", "inner_steps", c.grpo.inner_steps);
  r.read("grpo", "scenarios_per_class", c.grpo.scenarios_per_class);

  r.read("labeling", "stop_speed", c.labeling.stop_speed);
  r.read("labeling", "accel", c.labeling.accel);
  double turn_deg = c.labeling.turn * 180.0 / std::numbers::pi;
  r.read("labeling", "turn_deg", turn_deg);
  c.labeling.turn = turn_deg * std::numbers::pi / 180.0;
  r.read("labeling", "lane", c.labeling.lane);
  r.read("labeling", "terminal_fraction", c.labeling.terminal_fraction);

  r.read("judge", "backend", c.judge.backend);
  r.read("judge", "rubric", c.judge.rubric);
  r.read("judge", "url", c.judge.url);

  r.read("paths", "base", c.paths.base);
  r.read("paths", "docs", c.paths.docs);
  r.read("paths", "scenarios", c.paths.scenarios);
  r.read("paths", "traces", c.paths.traces);
  r.read("paths", "crops", c.paths.crops);
  r.read("paths", "fixture_root", c.paths.fixture_root);
  r.read("paths", "trajectories", c.paths.trajectories);
  r.read("paths", "labels", c.paths.labels);
  r.read("paths", "records", c.paths.records);
  r.read("paths", "report", c.paths.report);
  r.read("paths", "policy_out", c.paths.policy_out);
  r.read("paths", "curve_out", c.paths.curve_out);

  r.reject_unknown();
  return c;
}

/// Relative paths inside the file resolve against the file's directory.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigInvalid, "cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_run_config(ss.str(), path.string());
  const auto dir = path.parent_path();
  for (std::string* p : {&c.paths.base, &c.paths.docs, &c.paths.scenarios, &c.paths.traces, &c.paths.crops,
                         &c.paths.fixture_root, &c.paths.trajectories, &c.paths.labels, &c.paths.records,
                         &c.paths.report, &c.paths.policy_out, &c.paths.curve_out, &c.agent.policy_script,
                         &c.judge.rubric})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (dir / *p).lexically_normal().string();
  return c;
}

inline constexpr const char* kConfigEnvVar = "MTRX_CONFIG";

inline std::optional<std::filesystem::path> default_config_path() {
  if (const char* v = std::getenv(kConfigEnvVar); v && *v) return std::filesystem::path(v);
  return std::nullopt;
}

}  // namespace mtrx
