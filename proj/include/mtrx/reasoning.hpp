#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtrx/error.hpp"
#include "mtrx/meta_action.hpp"

namespace mtrx {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Tool call records
// ---------------------------------------------------------------------------

struct Detection {
  std::string label;
  std::array<double, 4> bbox{};  // x, y, w, h in pixels
  double confidence = 0.0;
  std::optional<double> distance_m;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct CropOutput {
  std::string out_ref;
  int width = 0;
  int height = 0;

  friend bool operator==(const CropOutput&, const CropOutput&) = default;
};

enum class ToolStatus { ok, error };

struct ToolInvocation {
  std::string tool_name;
  Json args = Json::object();
  std::string invocation_id;

  friend bool operator==(const ToolInvocation&, const ToolInvocation&) = default;
};

struct ToolResult {
  using Payload = std::variant<std::monostate, std::vector<Detection>, CropOutput>;

  std::string invocation_id;
  ToolStatus status = ToolStatus::ok;
  Payload payload;
  std::string error_reason;  // set iff status == error

  static ToolResult failure(std::string invocation_id, std::string reason) {
    ToolResult r;
    r.invocation_id = std::move(invocation_id);
    r.status = ToolStatus::error;
    r.error_reason = std::move(reason);
    return r;
  }

  friend bool operator==(const ToolResult&, const ToolResult&) = default;
};

// ---------------------------------------------------------------------------
// Reasoning steps
// ---------------------------------------------------------------------------

struct RetrievedRef {
  std::string doc_id;
  double score = 0.0;
  bool relevant = false;

  friend bool operator==(const RetrievedRef&, const RetrievedRef&) = default;
};

struct RetrieveStep {
  std::size_t k = 0;
  double threshold = 0.0;
  std::vector<RetrievedRef> results;

  friend bool operator==(const RetrieveStep&, const RetrieveStep&) = default;
};

/// Free-form thought; a CITE line becomes a thought carrying `cited_doc_id`.
struct ThoughtStep {
  std::string text;
  std::optional<std::string> cited_doc_id;

  friend bool operator==(const ThoughtStep&, const ThoughtStep&) = default;
};

struct ToolCallStep {
  ToolInvocation invocation;

  friend bool operator==(const ToolCallStep&, const ToolCallStep&) = default;
};

struct ToolResultStep {
  std::string tool_name;
  ToolResult result;

  friend bool operator==(const ToolResultStep&, const ToolResultStep&) = default;
};

struct DecisionStep {
  MetaAction action;

  friend bool operator==(const DecisionStep&, const DecisionStep&) = default;
};

enum class StepKind { Retrieve, Thought, ToolCall, ToolResultStep, Decision };

constexpr std::string_view to_string(StepKind k) noexcept {
  switch (k) {
    case StepKind::Retrieve: return "retrieve";
    case StepKind::Thought: return "thought";
    case StepKind::ToolCall: return "tool_call";
    case StepKind::ToolResultStep: return "tool_result";
    case StepKind::Decision: return "decision";
  }
  return "?";
}

struct ReasoningStep {
  using Payload = std::variant<RetrieveStep, ThoughtStep, ToolCallStep, ToolResultStep, DecisionStep>;

  std::size_t step_index = 0;
  Payload payload;

  // Variant alternatives are declared in StepKind order.
  StepKind kind() const noexcept { return static_cast<StepKind>(payload.index()); }

  template <typename T>
  const T* as() const noexcept {
    return std::get_if<T>(&payload);
  }

  friend bool operator==(const ReasoningStep&, const ReasoningStep&) = default;
};

// ---------------------------------------------------------------------------
// JSON wire format
// ---------------------------------------------------------------------------

namespace detail {

inline const Json& require(const Json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key))
    fail(ErrorCode::InvariantViolation, std::string(where) + ": missing field '" + key + "'");
  return obj.at(key);
}

inline std::string require_string(const Json& obj, const char* key, const char* where) {
  const Json& v = require(obj, key, where);
  if (!v.is_string())
    fail(ErrorCode::InvariantViolation, std::string(where) + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline double require_number(const Json& obj, const char* key, const char* where) {
  const Json& v = require(obj, key, where);
  if (!v.is_number())
    fail(ErrorCode::InvariantViolation, std::string(where) + ": field '" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace detail

inline Json meta_action_to_json(MetaAction a) {
  return Json{{"speed", std::string(to_string(a.speed))}, {"path", std::string(to_string(a.path))}};
}

inline MetaAction meta_action_from_json(const Json& j) {
  return parse_meta_action(detail::require_string(j, "speed", "meta-action") + "/" +
                           detail::require_string(j, "path", "meta-action"));
}

inline Json detection_to_json(const Detection& d) {
  Json j{{"label", d.label},
         {"bbox", {d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]}},
         {"confidence", d.confidence}};
  if (d.distance_m) j["distance_m"] = *d.distance_m;
  return j;
}

inline Detection detection_from_json(const Json& j) {
  Detection d;
  d.label = detail::require_string(j, "label", "detection");
  const Json& box = detail::require(j, "bbox", "detection");
  if (!box.is_array() || box.size() != 4)
    fail(ErrorCode::InvariantViolation, "detection: bbox must be [x, y, w, h]");
  for (std::size_t i = 0; i < 4; ++i) {
    if (!box[i].is_number()) fail(ErrorCode::InvariantViolation, "detection: bbox entries must be numbers");
    d.bbox[i] = box[i].get<double>();
  }
  d.confidence = detail::require_number(j, "confidence", "detection");
  if (j.contains("distance_m") && !j["distance_m"].is_null())
    d.distance_m = detail::require_number(j, "distance_m", "detection");
  return d;
}

inline Json tool_result_to_json(const ToolResult& r) {
  Json j{{"invocation_id", r.invocation_id},
         {"status", r.status == ToolStatus::ok ? "ok" : "error"}};
  if (r.status == ToolStatus::error) j["reason"] = r.error_reason;
  if (const auto* dets = std::get_if<std::vector<Detection>>(&r.payload)) {
    Json arr = Json::array();
    for (const auto& d : *dets) arr.push_back(detection_to_json(d));
    j["detections"] = std::move(arr);
  } else if (const auto* crop = std::get_if<CropOutput>(&r.payload)) {
    j["crop"] = {{"out_ref", crop->out_ref}, {"w", crop->width}, {"h", crop->height}};
  }
  return j;
}

inline ToolResult tool_result_from_json(const Json& j) {
  ToolResult r;
  if (j.contains("invocation_id")) r.invocation_id = detail::require_string(j, "invocation_id", "tool result");
  const std::string status = j.contains("status") ? detail::require_string(j, "status", "tool result") : "ok";
  if (status == "ok") {
    r.status = ToolStatus::ok;
  } else if (status == "error") {
    r.status = ToolStatus::error;
    r.error_reason = j.contains("reason") ? detail::require_string(j, "reason", "tool result") : "unspecified";
  } else {
    fail(ErrorCode::InvariantViolation, "tool result: unknown status '" + status + "'");
  }
  if (j.contains("detections")) {
    std::vector<Detection> dets;
    for (const auto& d : j["detections"]) dets.push_back(detection_from_json(d));
    r.payload = std::move(dets);
  } else if (j.contains("crop")) {
    const Json& c = j["crop"];
    r.payload = CropOutput{detail::require_string(c, "out_ref", "crop"),
                           static_cast<int>(detail::require_number(c, "w", "crop")),
                           static_cast<int>(detail::require_number(c, "h", "crop"))};
  }
  return r;
}

inline Json step_to_json(const ReasoningStep& step) {
  Json j{{"index", step.step_index}, {"kind", std::string(to_string(step.kind()))}};
  std::visit(
      [&j](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RetrieveStep>) {
          j["k"] = p.k;
          j["threshold"] = p.threshold;
          Json arr = Json::array();
          for (const auto& r : p.results)
            arr.push_back({{"doc_id", r.doc_id}, {"score", r.score}, {"relevant", r.relevant}});
          j["results"] = std::move(arr);
        } else if constexpr (std::is_same_v<T, ThoughtStep>) {
          j["text"] = p.text;
          if (p.cited_doc_id) j["cite"] = *p.cited_doc_id;
        } else if constexpr (std::is_same_v<T, ToolCallStep>) {
          j["tool"] = p.invocation.tool_name;
          j["args"] = p.invocation.args;
          j["invocation_id"] = p.invocation.invocation_id;
        } else if constexpr (std::is_same_v<T, ToolResultStep>) {
          j["tool"] = p.tool_name;
          j["result"] = tool_result_to_json(p.result);
        } else {
          j["speed"] = std::string(to_string(p.action.speed));
          j["path"] = std::string(to_string(p.action.path));
        }
      },
      step.payload);
  return j;
}

/// Parses one step record. `fallback_index` is used when the record has no "index".
inline ReasoningStep step_from_json(const Json& j, std::size_t fallback_index) {
  ReasoningStep step;
  step.step_index = j.contains("index") ? j["index"].get<std::size_t>() : fallback_index;
  const std::string kind = detail::require_string(j, "kind", "step");
  if (kind == "retrieve") {
    RetrieveStep r;
    r.k = j.value("k", std::size_t{0});
    r.threshold = j.value("threshold", 0.0);
    if (j.contains("results"))
      for (const auto& e : j["results"])
        r.results.push_back({detail::require_string(e, "doc_id", "retrieve result"),
                             detail::require_number(e, "score", "retrieve result"),
                             e.value("relevant", false)});
    step.payload = std::move(r);
  } else if (kind == "thought") {
    ThoughtStep t;
    t.text = j.contains("text") ? detail::require_string(j, "text", "thought") : "";
    if (j.contains("cite")) t.cited_doc_id = detail::require_string(j, "cite", "thought");
    step.payload = std::move(t);
  } else if (kind == "tool_call") {
    ToolCallStep c;
    c.invocation.tool_name = detail::require_string(j, "tool", "tool_call");
    c.invocation.args = j.value("args", Json::object());
    c.invocation.invocation_id =
        j.contains("invocation_id") ? detail::require_string(j, "invocation_id", "tool_call")
                                    : "call-" + std::to_string(step.step_index);
    step.payload = std::move(c);
  } else if (kind == "tool_result") {
    ToolResultStep r;
    r.tool_name = detail::require_string(j, "tool", "tool_result");
    if (j.contains("result")) r.result = tool_result_from_json(j["result"]);
    step.payload = std::move(r);
  } else if (kind == "decision") {
    step.payload = DecisionStep{meta_action_from_json(j)};
  } else {
    fail(ErrorCode::InvariantViolation, "step: unknown kind '" + kind + "'");
  }
  return step;
}

}  // namespace mtrx
