#pragma once

// HTTP clients for external encoder, detector, policy and judge services. Kept apart from
// the core headers so only targets that talk to services pull in cpp-httplib and threads.

#include <httplib.h>

#include <string>
#include <utility>

#include "mtrx/agent_loop.hpp"
#include "mtrx/error.hpp"
#include "mtrx/evaluation.hpp"
#include "mtrx/reasoning.hpp"
#include "mtrx/semantic_encoding.hpp"
#include "mtrx/vision_toolkit.hpp"

namespace mtrx {

struct HttpEndpoint {
  std::string origin;  // scheme://host:port
  std::string path;    // "/..." (defaults to "/")
  int timeout_ms = 2000;
  int retries = 2;

  static HttpEndpoint parse(const std::string& url, int timeout_ms, int retries) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
      fail(ErrorCode::ConfigInvalid, "url '" + url + "' must start with http://");
    const auto slash = url.find('/', scheme + 3);
    HttpEndpoint e;
    e.origin = url.substr(0, slash);
    e.path = slash == std::string::npos ? "/" : url.substr(slash);
    e.timeout_ms = timeout_ms;
    e.retries = retries;
    return e;
  }
};

namespace detail {

/// POSTs JSON; retries on transport errors and 5xx. Returns the parsed body or throws
/// `unavailable` with the last failure reason.
inline Json post_json(const HttpEndpoint& ep, const Json& body, ErrorCode unavailable) {
  httplib::Client client(ep.origin);
  const auto secs = ep.timeout_ms / 1000;
  const auto usecs = (ep.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  const std::string payload = body.dump();
  std::string reason;
  for (int attempt = 0; attempt <= ep.retries; ++attempt) {
    auto res = client.Post(ep.path, payload, "application/json");
    if (!res) {
      reason = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      reason = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) fail(unavailable, ep.origin + ep.path + ": HTTP " + std::to_string(res->status));
    try {
      return Json::parse(res->body);
    } catch (const Json::parse_error& e) {
      fail(unavailable, ep.origin + ep.path + ": response is not JSON: " + e.what());
    }
  }
  fail(unavailable, ep.origin + ep.path + ": " + reason + " after " + std::to_string(ep.retries + 1) + " attempt(s)");
}

}  // namespace detail

/// {content} -> {values: [...]}
class HttpEncoder final : public Encoder {
 public:
  HttpEncoder(HttpEndpoint endpoint, EncoderDescriptor descriptor)
      : endpoint_(std::move(endpoint)), descriptor_(std::move(descriptor)) {}

  const EncoderDescriptor& descriptor() const noexcept override { return descriptor_; }

  EmbeddingVector encode(const ScenarioContent& content) const override {
    if (content.description.empty() && !content.image_ref)
      fail(ErrorCode::EmptyContent, "no description and no image");
    Json req{{"content", content.description}};
    if (content.image_ref) req["image_ref"] = *content.image_ref;
    const Json res = detail::post_json(endpoint_, req, ErrorCode::EncoderBackendUnavailable);
    if (!res.contains("values") || !res["values"].is_array())
      fail(ErrorCode::EncoderBackendUnavailable, "response lacks 'values'");
    std::vector<double> values;
    for (const auto& v : res["values"]) {
      if (!v.is_number()) fail(ErrorCode::EncoderBackendUnavailable, "non-numeric embedding value");
      values.push_back(v.get<double>());
    }
    if (values.size() != descriptor_.dims)
      fail(ErrorCode::DimensionMismatch, "service returned " + std::to_string(values.size()) + " dims, expected " +
                                             std::to_string(descriptor_.dims));
    return EmbeddingVector(std::move(values));
  }

 private:
  HttpEndpoint endpoint_;
  EncoderDescriptor descriptor_;
};

/// {tool, image_ref, query?, range?} -> ToolResult JSON.
class HttpDetector final : public ToolBackend {
 public:
  explicit HttpDetector(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  ToolResult run(const ToolInvocation& inv) const override {
    Json req{{"tool", inv.tool_name}, {"image_ref", inv.args.value("image_ref", std::string())}};
    if (inv.args.contains("query")) req["query"] = inv.args["query"];
    if (inv.args.contains("range")) req["range"] = inv.args["range"];
    Json res = detail::post_json(endpoint_, req, ErrorCode::BackendUnavailable);
    if (!res.contains("invocation_id")) res["invocation_id"] = inv.invocation_id;
    try {
      return tool_result_from_json(res);
    } catch (const Error& e) {
      fail(ErrorCode::BackendUnavailable, std::string("malformed detector response: ") + e.what());
    }
  }

 private:
  HttpEndpoint endpoint_;
};

/// Chat-style completion: {messages: [{role, content}]} -> {choices: [{message: {content}}]}.
class HttpPolicy final : public PolicyClient {
 public:
  explicit HttpPolicy(HttpEndpoint endpoint, std::string model = "policy")
      : endpoint_(std::move(endpoint)), model_(std::move(model)) {}

  std::string complete(const PolicyRequest& request) const override {
    Json messages = Json::array();
    messages.push_back({{"role", "system"},
                        {"content", "Reply with exactly one line: THOUGHT:, CITE:, TOOL: or DECISION:."}});
    std::string user = request.context;
    for (const auto& line : request.transcript) user += "\n" + line;
    if (request.force_decision) user += "\nBudget exhausted. Reply with a DECISION: line.";
    messages.push_back({{"role", "user"}, {"content", user}});
    const Json res = detail::post_json(endpoint_, {{"model", model_}, {"messages", messages}, {"temperature", 0}},
                                       ErrorCode::PolicyUnavailable);
    try {
      return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
      fail(ErrorCode::PolicyUnavailable, std::string("malformed completion: ") + e.what());
    }
  }

 private:
  HttpEndpoint endpoint_;
  std::string model_;
};

/// {scenario_id, trace} -> raw judge JSON, parsed later by parse_judge_response.
class HttpJudge final : public JudgeClient {
 public:
  explicit HttpJudge(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string judge(const EvalRecord& record, std::string_view trace_text) const override {
    return detail::post_json(endpoint_, {{"scenario_id", record.scenario_id}, {"trace", std::string(trace_text)}},
                             ErrorCode::JudgeUnavailable)
        .dump();
  }

 private:
  HttpEndpoint endpoint_;
};

}  // namespace mtrx
