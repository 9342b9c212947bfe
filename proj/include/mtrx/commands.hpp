#pragma once

// Pipeline commands behind the mtrx executable. Each takes a validated RunConfig and
// writes data to files or the given stream; diagnostics go to the caller.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

#include "mtrx/agent_loop.hpp"
#include "mtrx/base_io.hpp"
#include "mtrx/config.hpp"
#include "mtrx/evaluation.hpp"
#include "mtrx/experience_base.hpp"
#include "mtrx/http_backends.hpp"
#include "mtrx/labeling.hpp"
#include "mtrx/toy_grpo.hpp"
#include "mtrx/vision_toolkit.hpp"

namespace mtrx {

namespace detail {

inline void require_path(const std::string& value, const char* key) {
  if (value.empty()) fail(ErrorCode::ConfigInvalid, std::string(key) + ": path required");
}

/// Writes through a temp file and renames, so a failed command never leaves half a file.
inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoFailure, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoFailure, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot rename to '" + path.string() + "': " + ec.message());
}

}  // namespace detail

inline std::unique_ptr<Encoder> make_encoder(const RunConfig& cfg) {
  if (cfg.encoder.backend == "http")
    return std::make_unique<HttpEncoder>(HttpEndpoint::parse(cfg.encoder.url, cfg.encoder.timeout_ms, cfg.encoder.retries),
                                         EncoderDescriptor{"http:" + cfg.encoder.url, cfg.encoder.dims, "1"});
  return std::make_unique<ReferenceEncoder>(cfg.encoder.dims, cfg.encoder.seed);
}

/// Detection tools route to the service when configured; cropping always runs locally.
inline ToolRegistry make_registry(const RunConfig& cfg, const std::filesystem::path& fixture_root,
                                  const std::filesystem::path& crops_root) {
  if (cfg.agent.tool_backend != "http") return make_fixture_registry(fixture_root, crops_root);
  if (cfg.agent.tool_url.empty()) fail(ErrorCode::ConfigInvalid, "agent.tool_url: required for the http backend");
  auto remote = std::make_shared<const HttpDetector>(
      HttpEndpoint::parse(cfg.agent.tool_url, cfg.encoder.timeout_ms, cfg.encoder.retries));
  auto local = std::make_shared<const FixtureVisionBackend>(fixture_root, crops_root);
  ToolRegistry registry;
  for (auto& spec : builtin_tool_specs()) {
    const bool is_crop = spec.name == tools::kCropImage;
    registry.register_tool(std::move(spec), is_crop ? std::shared_ptr<const ToolBackend>(local)
                                                    : std::shared_ptr<const ToolBackend>(remote));
  }
  return registry;
}

inline std::unique_ptr<PolicyClient> make_policy(const RunConfig& cfg) {
  if (cfg.agent.policy_backend == "http") {
    if (cfg.agent.policy_url.empty()) fail(ErrorCode::ConfigInvalid, "agent.policy_url: required for the http backend");
    return std::make_unique<HttpPolicy>(
        HttpEndpoint::parse(cfg.agent.policy_url, cfg.encoder.timeout_ms, cfg.encoder.retries));
  }
  detail::require_path(cfg.agent.policy_script, "agent.policy_script");
  return std::make_unique<ScriptedPolicy>(ScriptedPolicy::from_file(cfg.agent.policy_script));
}

// ---------------------------------------------------------------------------

/// Labels every trajectory; JSON Lines {scenario_id, speed, path} in input order.
inline std::size_t cmd_label(const RunConfig& cfg, const std::filesystem::path& traj_path,
                             const std::filesystem::path& out_path) {
  std::string out;
  const auto trajs = read_trajectories(traj_path);
  for (const auto& t : trajs) out += label_to_json(t.scenario_id, label_trajectory(t.trajectory, cfg.labeling)).dump() + "\n";
  detail::write_file(out_path, out);
  return trajs.size();
}

inline std::size_t cmd_build_base(const RunConfig& cfg, const std::filesystem::path& docs_path,
                                  const std::filesystem::path& base_path) {
  const auto encoder = make_encoder(cfg);
  ExperienceBase base(encoder->descriptor());
  base.add_documents(ingest_jsonl_file(docs_path, *encoder));
  if (base_path.has_parent_path()) std::filesystem::create_directories(base_path.parent_path());
  save_base(base, base_path);
  return base.size();
}

inline void check_encoder(const BaseSnapshot& base, const Encoder& encoder) {
  if (!(base.encoder() == encoder.descriptor()))
    fail(ErrorCode::EncoderMismatch, "base was built with '" + base.encoder().encoder_id + "' v" +
                                         base.encoder().version + ", configured encoder is '" +
                                         encoder.descriptor().encoder_id + "' v" + encoder.descriptor().version);
}

/// TSV: header "rank\tdoc_id\tscore", then one row per hit with %.6f scores.
inline void cmd_retrieve(const RunConfig& cfg, const std::filesystem::path& base_path, const std::string& query,
                         std::size_t k, std::ostream& out) {
  const auto encoder = make_encoder(cfg);
  const ExperienceBase base = load_base(base_path);
  check_encoder(*base.snapshot(), *encoder);
  out << "rank\tdoc_id\tscore\n";
  for (const auto& r : base.retrieve_top_k(encoder->encode({query, std::nullopt}), k)) {
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", r.score);
    out << r.rank << '\t' << r.doc_id << '\t' << score << '\n';
  }
}

struct RunPaths {
  std::filesystem::path base;          // empty: run without experience
  std::filesystem::path scenarios;
  std::filesystem::path traces;
  std::filesystem::path fixture_root;  // empty: the scenarios file's directory
  std::filesystem::path crops;         // empty: "crops" next to the traces file
};

inline std::vector<Observation> read_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::vector<Observation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(observation_from_json(Json::parse(line)));
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::InvariantViolation, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Runs every scenario (up to agent.jobs at once) and writes one trace per line, ordered
/// by scenario_id. Returns the number of episodes.
inline std::size_t cmd_run(const RunConfig& cfg, const RunPaths& paths) {
  const auto encoder = make_encoder(cfg);
  std::shared_ptr<const BaseSnapshot> snapshot;
  if (!paths.base.empty()) {
    snapshot = load_base(paths.base).snapshot();
    check_encoder(*snapshot, *encoder);
  } else {
    snapshot = std::make_shared<const BaseSnapshot>(encoder->descriptor(), std::vector<ScenarioDocument>{});
  }
  auto observations = read_observations(paths.scenarios);
  std::sort(observations.begin(), observations.end(),
            [](const Observation& a, const Observation& b) { return a.scenario_id < b.scenario_id; });
  for (std::size_t i = 1; i < observations.size(); ++i)
    if (observations[i].scenario_id == observations[i - 1].scenario_id)
      fail(ErrorCode::DuplicateId, "scenario '" + observations[i].scenario_id + "' appears twice");

  const auto fixture_root = paths.fixture_root.empty() ? paths.scenarios.parent_path() : paths.fixture_root;
  const auto crops = paths.crops.empty() ? paths.traces.parent_path() / "crops" : paths.crops;
  std::filesystem::create_directories(crops);
  const ToolRegistry registry = make_registry(cfg, fixture_root, crops);
  const auto policy = make_policy(cfg);
  const AgentConfig agent = cfg.agent_config();

  std::vector<std::string> lines(observations.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < observations.size();) {
      try {
        lines[i] = trace_to_json(run_episode(observations[i], *snapshot, *encoder, registry, *policy, agent)).dump();
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next = observations.size();
      }
    }
  };
  const std::size_t jobs = std::min<std::size_t>(cfg.agent.jobs, std::max<std::size_t>(1, observations.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::string out;
  for (const auto& l : lines) out += l + "\n";
  detail::write_file(paths.traces, out);
  return observations.size();
}

inline Json toy_policy_to_json(const toy::TabularPolicy& policy) {
  Json classes = Json::array();
  for (std::size_t c = 0; c < toy::kClasses; ++c) {
    const auto& row = policy.logits()[c];
    Json actions = Json::object();
    const auto pa = policy.action_probabilities(c);
    for (std::size_t a = 0; a < kMetaActionCount; ++a) actions[to_string(meta_action_at(a))] = pa[a];
    classes.push_back({{"class", c},
                       {"cite_logits", Json(std::vector<double>(row.begin(), row.begin() + toy::kCiteLogits))},
                       {"action_logits", Json(std::vector<double>(row.begin() + toy::kCiteLogits, row.end()))},
                       {"p_cite", policy.p_cite(c)},
                       {"action_probabilities", std::move(actions)}});
  }
  return Json{{"classes", std::move(classes)}};
}

inline constexpr std::string_view kCurveCsvHeader = "iteration,mean_reward,p_cite_class0,p_cite_class1";

inline std::string curve_to_csv(const std::vector<toy::LearningPoint>& curve) {
  std::string out(kCurveCsvHeader);
  out += "\n";
  for (const auto& p : curve)
    out += std::to_string(p.iteration) + "," + detail::shortest(p.mean_reward) + "," +
           detail::shortest(p.p_cite_class0) + "," + detail::shortest(p.p_cite_class1) + "\n";
  return out;
}

inline toy::ToyTrainResult cmd_train_toy(const RunConfig& cfg, const std::filesystem::path& policy_out,
                                         const std::filesystem::path& curve_out) {
  const auto scenarios = toy::synthetic_scenarios(cfg.grpo.scenarios_per_class, cfg.grpo.seed);
  auto result = toy::toy_train(scenarios, cfg.grpo);
  detail::write_file(policy_out, toy_policy_to_json(result.policy).dump(2) + "\n");
  detail::write_file(curve_out, curve_to_csv(result.curve));
  return result;
}

inline std::unique_ptr<JudgeClient> make_judge(const RunConfig& cfg) {
  if (cfg.judge.backend == "http") {
    if (cfg.judge.url.empty()) fail(ErrorCode::ConfigInvalid, "judge.url: required for the http backend");
    return std::make_unique<HttpJudge>(HttpEndpoint::parse(cfg.judge.url, cfg.encoder.timeout_ms, cfg.encoder.retries));
  }
  if (cfg.judge.rubric.empty()) return nullptr;
  return std::make_unique<RubricJudge>(RubricJudge::from_file(cfg.judge.rubric));
}

/// Records that already carry judge scores keep them; the rest are judged when a judge is
/// configured. Writes the CSV report and returns the text table.
inline std::string cmd_eval(const RunConfig& cfg, const std::filesystem::path& records_path,
                            const std::filesystem::path& report_out) {
  auto records = read_eval_records(records_path);
  if (const auto judge_client = make_judge(cfg)) {
    const auto load = file_trace_loader(records_path.parent_path());
    for (auto& r : records)
      if (!r.judge_scores) r.judge_scores = parse_judge_response(judge_client->judge(r, load(r)));
  }
  const EvalReport report = build_report(records);
  detail::write_file(report_out, render_report(report, ReportFormat::csv));
  return render_report(report, ReportFormat::text);
}

}  // namespace mtrx
