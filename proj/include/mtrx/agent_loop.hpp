#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mtrx/error.hpp"
#include "mtrx/experience_base.hpp"
#include "mtrx/meta_action.hpp"
#include "mtrx/reasoning.hpp"
#include "mtrx/semantic_encoding.hpp"
#include "mtrx/vision_toolkit.hpp"

namespace mtrx {

struct Observation {
  std::string scenario_id;
  std::optional<std::string> image_ref;  // absent in text-only mode
  std::string prompt;
  std::optional<std::string> navigation_instruction;
};

struct RetrievedEntry {
  ScenarioDocument document;
  double score = 0.0;
  bool gated_relevant = false;
};

/// Retrieved experience, ordered by score descending.
struct RetrievedContext {
  std::vector<RetrievedEntry> results;

  bool any_relevant() const noexcept {
    return std::any_of(results.begin(), results.end(), [](const auto& e) { return e.gated_relevant; });
  }

  const RetrievedEntry* find(std::string_view doc_id) const noexcept {
    for (const auto& e : results)
      if (e.document.doc_id == doc_id) return &e;
    return nullptr;
  }
};

struct ReasoningTrace {
  Observation observation;
  RetrievedContext context;
  std::vector<ReasoningStep> steps;
  MetaAction final_action;
  bool used_experience = false;
  bool budget_exhausted = false;

  std::size_t tool_call_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const ReasoningStep& s) {
      return s.kind() == StepKind::ToolCall;
    }));
  }
};

struct AgentConfig {
  std::size_t k = kDefaultTopK;
  double relevance_threshold = kDefaultRelevanceThreshold;
  std::size_t max_steps = 4;              // tool calls per episode
  std::size_t max_turns = 32;             // policy responses per episode, all kinds
  std::size_t context_token_budget = 2048;
  MetaAction fallback_action{Speed::keep, Path::straight};  // when a forced decision does not parse
};

// ---------------------------------------------------------------------------
// Policy wire protocol
// ---------------------------------------------------------------------------

inline constexpr std::string_view kNoRelevantExperience = "NO_RELEVANT_EXPERIENCE";

/// MalformedPolicyOutput carrying the byte offset of the problem.
class PolicyParseError : public Error {
 public:
  PolicyParseError(std::size_t offset, const std::string& reason)
      : Error(ErrorCode::MalformedPolicyOutput, "at byte " + std::to_string(offset) + ": " + reason),
        offset_(offset),
        reason_(reason) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

/// Parses one line of the tagged protocol:
///   THOUGHT: <text> | TOOL: <name> {json args} | CITE: <doc_id> | DECISION: <speed>/<path>
/// The returned step has step_index 0; the caller numbers it.
inline ReasoningStep parse_policy_output(std::string_view text) {
  std::size_t begin = 0, end = text.size();
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (begin < end && is_space(text[begin])) ++begin;
  while (end > begin && is_space(text[end - 1])) --end;
  if (begin == end) throw PolicyParseError(0, "empty policy output");
  if (const auto nl = text.substr(begin, end - begin).find('\n'); nl != std::string_view::npos)
    throw PolicyParseError(begin + nl, "expected exactly one step per response");

  // Returns the offset of the payload after `tag`, trimmed of leading blanks.
  auto payload_after = [&](std::string_view tag) -> std::optional<std::size_t> {
    if (text.substr(begin, end - begin).rfind(tag, 0) != 0) return std::nullopt;
    std::size_t p = begin + tag.size();
    while (p < end && (text[p] == ' ' || text[p] == '\t')) ++p;
    return p;
  };

  ReasoningStep step;
  if (auto p = payload_after("THOUGHT:")) {
    if (*p == end) throw PolicyParseError(*p, "THOUGHT needs text");
    step.payload = ThoughtStep{std::string(text.substr(*p, end - *p)), std::nullopt};
    return step;
  }
  if (auto p = payload_after("CITE:")) {
    const std::string_view id = text.substr(*p, end - *p);
    if (id.empty()) throw PolicyParseError(*p, "CITE needs a doc_id");
    if (const auto ws = id.find_first_of(" \t"); ws != std::string_view::npos)
      throw PolicyParseError(*p + ws, "doc_id must not contain whitespace");
    step.payload = ThoughtStep{"cite " + std::string(id), std::string(id)};
    return step;
  }
  if (auto p = payload_after("TOOL:")) {
    std::size_t q = *p;
    while (q < end && !is_space(text[q]) && text[q] != '{') ++q;
    const std::string_view name = text.substr(*p, q - *p);
    if (name.empty()) throw PolicyParseError(*p, "TOOL needs a tool name");
    for (std::size_t i = 0; i < name.size(); ++i) {
      const char c = name[i];
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        throw PolicyParseError(*p + i, "invalid character in tool name");
    }
    while (q < end && is_space(text[q])) ++q;
    Json args = Json::object();
    if (q < end) {
      try {
        args = Json::parse(text.substr(q, end - q));
      } catch (const Json::parse_error& e) {
        throw PolicyParseError(q + (e.byte > 0 ? e.byte - 1 : 0), std::string("bad tool args: ") + e.what());
      }
      if (!args.is_object()) throw PolicyParseError(q, "tool args must be a JSON object");
    }
    step.payload = ToolCallStep{ToolInvocation{std::string(name), std::move(args), ""}};
    return step;
  }
  if (auto p = payload_after("DECISION:")) {
    const std::string_view body = text.substr(*p, end - *p);
    const auto slash = body.find('/');
    if (slash == std::string_view::npos) throw PolicyParseError(*p, "DECISION must be <speed>/<path>");
    const auto speed = parse_speed(body.substr(0, slash));
    if (!speed) throw PolicyParseError(*p, "unknown speed token '" + std::string(body.substr(0, slash)) + "'");
    const auto path = parse_path(body.substr(slash + 1));
    if (!path)
      throw PolicyParseError(*p + slash + 1, "unknown path token '" + std::string(body.substr(slash + 1)) + "'");
    step.payload = DecisionStep{{*speed, *path}};
    return step;
  }
  throw PolicyParseError(begin, "unknown tag; expected THOUGHT:, TOOL:, CITE: or DECISION:");
}

/// Inverse of parse_policy_output for policy-produced steps; tool results render as RESULT lines.
inline std::string render_step_line(const ReasoningStep& step) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RetrieveStep>) {
          return "RETRIEVE: " + std::to_string(p.results.size()) + " results";
        } else if constexpr (std::is_same_v<T, ThoughtStep>) {
          return p.cited_doc_id ? "CITE: " + *p.cited_doc_id : "THOUGHT: " + p.text;
        } else if constexpr (std::is_same_v<T, ToolCallStep>) {
          return "TOOL: " + p.invocation.tool_name + " " + p.invocation.args.dump();
        } else if constexpr (std::is_same_v<T, ToolResultStep>) {
          return "RESULT: " + tool_result_to_json(p.result).dump();
        } else {
          return "DECISION: " + to_string(p.action);
        }
      },
      step.payload);
}

// ---------------------------------------------------------------------------
// Policy context
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// One short token per step, joined by " > ".
inline std::string compress_reasoning(const std::vector<ReasoningStep>& steps) {
  std::string out;
  for (const auto& s : steps) {
    std::string piece = std::visit(
        [](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, RetrieveStep>) {
            return "retrieve";
          } else if constexpr (std::is_same_v<T, ThoughtStep>) {
            if (p.cited_doc_id) return "cite " + *p.cited_doc_id;
            std::istringstream words(p.text);
            std::string w, head;
            for (int i = 0; i < 8 && words >> w; ++i) head += (i ? " " : "") + w;
            if (words >> w) head += " ...";
            return "think \"" + head + "\"";
          } else if constexpr (std::is_same_v<T, ToolCallStep>) {
            return "tool " + p.invocation.tool_name;
          } else if constexpr (std::is_same_v<T, ToolResultStep>) {
            return p.result.status == ToolStatus::ok ? "result ok" : "result error";
          } else {
            return "decide " + to_string(p.action);
          }
        },
        s.payload);
    if (!out.empty()) out += " > ";
    out += piece;
  }
  return out;
}

}  // namespace detail

/// Renders the observation and retrieved experience for the policy. Relevant documents get
/// full sections; the rest get one header line. Over budget (whitespace tokens), sections are
/// dropped lowest score first.
inline std::string build_policy_context(const Observation& obs, const RetrievedContext& ctx,
                                        std::size_t token_budget = 2048) {
  std::string head = "# OBSERVATION\nscenario: " + obs.scenario_id + "\nprompt: " + obs.prompt + "\n";
  if (obs.navigation_instruction) head += "navigation: " + *obs.navigation_instruction + "\n";
  head += "# RETRIEVED EXPERIENCE\n";

  std::vector<std::string> sections;
  for (std::size_t i = 0; i < ctx.results.size(); ++i) {
    const auto& e = ctx.results[i];
    const auto& d = e.document;
    std::string s;
    if (e.gated_relevant) {
      s = "## EXPERIENCE " + std::to_string(i + 1) + " doc_id=" + d.doc_id + " score=" +
          detail::fixed4(e.score) + "\n";
      s += "description: " + d.scenario_description + "\n";
      s += "decision: " + to_string(d.high_level_decision) + "\n";
      s += "tools_used:";
      if (d.tools_used.empty()) s += " none";
      for (std::size_t t = 0; t < d.tools_used.size(); ++t) s += (t ? ", " : " ") + d.tools_used[t];
      s += "\nreasoning: " + detail::compress_reasoning(d.reasoning_process) + "\n";
    } else {
      s = "## retrieved, low relevance " + std::to_string(i + 1) + " doc_id=" + d.doc_id + " score=" +
          detail::fixed4(e.score) + "\n";
    }
    sections.push_back(std::move(s));
  }

  auto assemble = [&](std::size_t keep) {
    std::string out = head;
    bool relevant_kept = false;
    for (std::size_t i = 0; i < keep; ++i) {
      out += sections[i];
      relevant_kept = relevant_kept || ctx.results[i].gated_relevant;
    }
    if (!relevant_kept) out += std::string(kNoRelevantExperience) + "\n";
    return out;
  };

  std::size_t keep = sections.size();
  std::string out = assemble(keep);
  while (keep > 0 && detail::count_tokens(out) > token_budget) out = assemble(--keep);
  return out;
}

// ---------------------------------------------------------------------------
// Policy clients
// ---------------------------------------------------------------------------

struct PolicyRequest {
  const Observation* observation = nullptr;
  std::string context;
  std::vector<std::string> transcript;  // protocol lines of the steps so far
  std::size_t turn = 0;                 // responses already produced this episode
  bool force_decision = false;
};

/// Text-in/text-out policy. Must be callable from concurrent episodes.
class PolicyClient {
 public:
  virtual ~PolicyClient() = default;
  virtual std::string complete(const PolicyRequest& request) const = 0;
};

/// Replays canned protocol lines per scenario_id. Past the end, the last line repeats.
/// On a forced decision it answers with the next scripted DECISION line, if any.
class ScriptedPolicy final : public PolicyClient {
 public:
  ScriptedPolicy() = default;
  explicit ScriptedPolicy(std::map<std::string, std::vector<std::string>> scripts)
      : scripts_(std::move(scripts)) {}

  /// Script file: JSON object mapping scenario_id to an array of lines.
  static ScriptedPolicy from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open policy script '" + path.string() + "'");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::IoFailure, "policy script '" + path.string() + "': " + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::IoFailure, "policy script must be a JSON object");
    std::map<std::string, std::vector<std::string>> scripts;
    for (const auto& [id, lines] : j.items()) {
      if (!lines.is_array()) fail(ErrorCode::IoFailure, "script for '" + id + "' must be an array");
      for (const auto& l : lines) scripts[id].push_back(l.get<std::string>());
    }
    return ScriptedPolicy(std::move(scripts));
  }

  void set_script(const std::string& scenario_id, std::vector<std::string> lines) {
    scripts_[scenario_id] = std::move(lines);
  }

  std::string complete(const PolicyRequest& request) const override {
    const std::string& id = request.observation->scenario_id;
    auto it = scripts_.find(id);
    if (it == scripts_.end() || it->second.empty())
      fail(ErrorCode::PolicyUnavailable, "no script for scenario '" + id + "'");
    const auto& lines = it->second;
    if (request.force_decision) {
      for (std::size_t i = std::min(request.turn, lines.size()); i < lines.size(); ++i)
        if (lines[i].rfind("DECISION:", 0) == 0) return lines[i];
      return "";
    }
    return lines[std::min(request.turn, lines.size() - 1)];
  }

 private:
  std::map<std::string, std::vector<std::string>> scripts_;
};

// ---------------------------------------------------------------------------
// Episode
// ---------------------------------------------------------------------------

/// Retrieves experience once, then alternates policy turns and tool calls until the policy
/// decides. When the tool budget or turn budget runs out, a decision is forced and the trace
/// is flagged.
inline ReasoningTrace run_episode(const Observation& obs, const BaseSnapshot& base, const Encoder& encoder,
                                  const ToolRegistry& registry, const PolicyClient& policy,
                                  const AgentConfig& config) {
  if (config.max_steps < 1) fail(ErrorCode::ConfigInvalid, "agent.max_steps must be >= 1");
  if (obs.scenario_id.empty()) fail(ErrorCode::InvariantViolation, "observation needs a scenario_id");

  ReasoningTrace trace;
  trace.observation = obs;

  RetrieveStep retrieve{config.k, config.relevance_threshold, {}};
  if (base.size() > 0) {
    const auto query = encoder.encode({obs.prompt, obs.image_ref});
    for (const auto& r : base.retrieve_top_k(query, config.k)) {
      const bool relevant = r.score >= config.relevance_threshold;
      trace.context.results.push_back({*base.find(r.doc_id), r.score, relevant});
      retrieve.results.push_back({r.doc_id, r.score, relevant});
    }
  }
  auto append = [&trace](ReasoningStep::Payload payload) {
    trace.steps.push_back({trace.steps.size(), std::move(payload)});
  };
  append(std::move(retrieve));

  PolicyRequest request;
  request.observation = &obs;
  request.context = build_policy_context(obs, trace.context, config.context_token_budget);

  std::size_t tool_calls = 0;
  std::optional<MetaAction> decision;
  while (!decision) {
    if (request.turn >= config.max_turns) break;
    ReasoningStep step = parse_policy_output(policy.complete(request));
    ++request.turn;

    if (auto* thought = std::get_if<ThoughtStep>(&step.payload)) {
      if (thought->cited_doc_id) {
        if (!trace.context.find(*thought->cited_doc_id))
          throw PolicyParseError(0, "CITE references doc_id '" + *thought->cited_doc_id +
                                        "' that was not retrieved");
        trace.used_experience = true;
      }
      request.transcript.push_back(render_step_line(step));
      append(std::move(step.payload));
    } else if (auto* call = std::get_if<ToolCallStep>(&step.payload)) {
      if (tool_calls >= config.max_steps) break;
      ++tool_calls;
      ToolInvocation& inv = call->invocation;
      inv.invocation_id = "call-" + std::to_string(tool_calls);
      if (obs.image_ref && !inv.args.contains("image_ref")) inv.args["image_ref"] = *obs.image_ref;
      if (inv.tool_name == tools::kCropImage && !inv.args.contains("out_ref"))
        inv.args["out_ref"] = obs.scenario_id + "-" + inv.invocation_id + ".ppm";
      ToolResult result;
      try {
        result = registry.invoke(inv);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::UnknownTool && e.code() != ErrorCode::ArgsInvalid) throw;
        result = ToolResult::failure(inv.invocation_id, e.what());
      }
      std::string tool_name = inv.tool_name;
      request.transcript.push_back(render_step_line(step));
      append(std::move(step.payload));
      ReasoningStep result_step{0, ToolResultStep{std::move(tool_name), std::move(result)}};
      request.transcript.push_back(render_step_line(result_step));
      append(std::move(result_step.payload));
    } else if (auto* d = std::get_if<DecisionStep>(&step.payload)) {
      decision = d->action;
    } else {
      throw PolicyParseError(0, "policy emitted a non-policy step kind");
    }
  }

  if (!decision) {
    trace.budget_exhausted = true;
    request.force_decision = true;
    const std::string forced = policy.complete(request);
    decision = config.fallback_action;
    try {
      const ReasoningStep step = parse_policy_output(forced);
      if (const auto* d = step.as<DecisionStep>()) decision = d->action;
    } catch (const PolicyParseError&) {
    }
  }
  append(DecisionStep{*decision});
  trace.final_action = *decision;
  return trace;
}

// ---------------------------------------------------------------------------
// Trace serialization
// ---------------------------------------------------------------------------

inline Json observation_to_json(const Observation& obs) {
  Json j{{"scenario_id", obs.scenario_id}, {"prompt", obs.prompt}};
  j["image_ref"] = obs.image_ref ? Json(*obs.image_ref) : Json(nullptr);
  j["navigation_instruction"] = obs.navigation_instruction ? Json(*obs.navigation_instruction) : Json(nullptr);
  return j;
}

inline Observation observation_from_json(const Json& j) {
  Observation obs;
  obs.scenario_id = detail::require_string(j, "scenario_id", "observation");
  obs.prompt = detail::require_string(j, "prompt", "observation");
  if (j.contains("image_ref") && !j["image_ref"].is_null())
    obs.image_ref = detail::require_string(j, "image_ref", "observation");
  if (j.contains("navigation_instruction") && !j["navigation_instruction"].is_null())
    obs.navigation_instruction = detail::require_string(j, "navigation_instruction", "observation");
  return obs;
}

/// Object keys serialize in sorted order, so equal traces always dump to equal bytes.
inline Json trace_to_json(const ReasoningTrace& trace) {
  Json context = Json::array();
  for (const auto& e : trace.context.results)
    context.push_back({{"doc_id", e.document.doc_id}, {"score", e.score}, {"relevant", e.gated_relevant}});
  Json steps = Json::array();
  for (const auto& s : trace.steps) steps.push_back(step_to_json(s));
  return Json{{"observation", observation_to_json(trace.observation)},
              {"context", std::move(context)},
              {"steps", std::move(steps)},
              {"final_action", meta_action_to_json(trace.final_action)},
              {"used_experience", trace.used_experience},
              {"budget_exhausted", trace.budget_exhausted}};
}

}  // namespace mtrx
