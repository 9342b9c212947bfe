#include <gtest/gtest.h>

#include <random>

#include "mtrx/agent_loop.hpp"
#include "mtrx/base_io.hpp"
#include "test_util.hpp"

using namespace mtrx;

namespace {

struct Harness {
  ReferenceEncoder encoder;
  ExperienceBase base{encoder.descriptor()};
  test::TempDir out{"agent"};
  ToolRegistry registry;

  Harness() : registry(make_fixture_registry(test::fixtures(), out.path())) {}

  void with_fixture_docs() { base.add_documents(ingest_jsonl_file(test::fixtures() / "docs.jsonl", encoder)); }

  ReasoningTrace run(const Observation& obs, std::vector<std::string> script, AgentConfig cfg = {}) {
    ScriptedPolicy policy;
    policy.set_script(obs.scenario_id, std::move(script));
    return run_episode(obs, *base.snapshot(), encoder, registry, policy, cfg);
  }
};

Observation red_light() {
  return {"s01-red-light", "images/s01-red-light.ppm", "red traffic light at the urban intersection", "go straight"};
}

void expect_trace_invariants(const ReasoningTrace& t, const AgentConfig& cfg) {
  ASSERT_FALSE(t.steps.empty());
  for (std::size_t i = 0; i < t.steps.size(); ++i) EXPECT_EQ(t.steps[i].step_index, i);
  EXPECT_EQ(t.steps.front().kind(), StepKind::Retrieve);
  ASSERT_EQ(t.steps.back().kind(), StepKind::Decision);
  EXPECT_EQ(t.steps.back().as<DecisionStep>()->action, t.final_action);
  std::size_t decisions = 0;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (t.steps[i].kind() == StepKind::Decision) ++decisions;
    if (t.steps[i].kind() == StepKind::ToolCall) {
      ASSERT_LT(i + 1, t.steps.size());
      EXPECT_EQ(t.steps[i + 1].kind(), StepKind::ToolResultStep);
    }
  }
  EXPECT_EQ(decisions, 1u);
  EXPECT_LE(t.tool_call_count(), cfg.max_steps);
  bool cites = false;
  for (const auto& s : t.steps)
    if (const auto* th = s.as<ThoughtStep>(); th && th->cited_doc_id) cites = cites || t.context.find(*th->cited_doc_id);
  EXPECT_EQ(t.used_experience, cites);
}

}  // namespace

TEST(Protocol, ParsesEachTag) {
  EXPECT_EQ(parse_policy_output("DECISION: keep/straight").as<DecisionStep>()->action,
            (MetaAction{Speed::keep, Path::straight}));
  const auto tool = parse_policy_output("TOOL: detect_objects {\"range\": 30}");
  ASSERT_NE(tool.as<ToolCallStep>(), nullptr);
  EXPECT_EQ(tool.as<ToolCallStep>()->invocation.tool_name, "detect_objects");
  EXPECT_EQ(tool.as<ToolCallStep>()->invocation.args["range"], 30);
  EXPECT_EQ(parse_policy_output("  THOUGHT: look left \n").as<ThoughtStep>()->text, "look left");
  EXPECT_EQ(*parse_policy_output("CITE: doc-7").as<ThoughtStep>()->cited_doc_id, "doc-7");
  EXPECT_EQ(parse_policy_output("TOOL: detect_objects").as<ToolCallStep>()->invocation.args, Json::object());
}

TEST(Protocol, MalformedOutputsCarryOffsetAndReason) {
  try {
    parse_policy_output("DECISION: warp/straight");
    FAIL();
  } catch (const PolicyParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedPolicyOutput);
    EXPECT_EQ(e.offset(), 10u);
    EXPECT_NE(e.reason().find("speed"), std::string::npos);
  }
  for (const char* bad : {"", "HELLO: x", "DECISION: keep", "DECISION: keep/sideways", "TOOL: x {bad",
                          "TOOL: x [1]", "CITE: a b", "THOUGHT: a\nTHOUGHT: b", "TOOL: {\"a\":1}"})
    EXPECT_THROW(parse_policy_output(bad), PolicyParseError) << bad;
}

TEST(Protocol, RenderRoundTripsPolicySteps) {
  for (const char* line : {"THOUGHT: slow down", "CITE: doc-1", "DECISION: stop/turn_left",
                           "TOOL: detect_objects {\"range\":30}"}) {
    const auto step = parse_policy_output(line);
    EXPECT_EQ(render_step_line(parse_policy_output(render_step_line(step))), render_step_line(step));
  }
}

TEST(Episode, ScriptedFiveStepTrace) {
  Harness h;
  const auto t = h.run(red_light(), {"THOUGHT: check the junction", "TOOL: detect_objects {\"range\": 30}",
                                     "DECISION: keep/straight"});
  ASSERT_EQ(t.steps.size(), 5u);
  const std::vector<StepKind> kinds{StepKind::Retrieve, StepKind::Thought, StepKind::ToolCall,
                                    StepKind::ToolResultStep, StepKind::Decision};
  for (std::size_t i = 0; i < kinds.size(); ++i) EXPECT_EQ(t.steps[i].kind(), kinds[i]);
  EXPECT_EQ(t.final_action, (MetaAction{Speed::keep, Path::straight}));
  EXPECT_FALSE(t.budget_exhausted);
  expect_trace_invariants(t, {});
  // image_ref injected from the observation.
  EXPECT_EQ(t.steps[2].as<ToolCallStep>()->invocation.args["image_ref"], "images/s01-red-light.ppm");
  EXPECT_EQ(t.steps[3].as<ToolResultStep>()->result.status, ToolStatus::ok);
}

TEST(Episode, EmptyBaseMeansNoExperience) {
  Harness h;
  const auto t = h.run(red_light(), {"DECISION: stop/straight"});
  EXPECT_TRUE(t.context.results.empty());
  EXPECT_FALSE(t.used_experience);
  EXPECT_THROW(h.run(red_light(), {"CITE: doc-red-light", "DECISION: stop/straight"}), PolicyParseError);
}

TEST(Episode, BudgetExhaustionForcesDecision) {
  Harness h;
  AgentConfig cfg;
  cfg.max_steps = 2;
  const auto t = h.run(red_light(), {"TOOL: detect_objects {\"range\": 30}"}, cfg);
  EXPECT_TRUE(t.budget_exhausted);
  EXPECT_EQ(t.tool_call_count(), 2u);
  EXPECT_EQ(t.final_action, cfg.fallback_action);
  expect_trace_invariants(t, cfg);
}

TEST(Episode, ForcedDecisionUsesScriptedDecisionWhenAvailable) {
  Harness h;
  AgentConfig cfg;
  cfg.max_steps = 1;
  const auto t = h.run(red_light(),
                       {"TOOL: detect_objects {\"range\": 30}", "TOOL: detect_objects {\"range\": 60}",
                        "DECISION: decelerate/straight"},
                       cfg);
  EXPECT_TRUE(t.budget_exhausted);
  EXPECT_EQ(t.tool_call_count(), 1u);
  EXPECT_EQ(t.final_action, (MetaAction{Speed::decelerate, Path::straight}));
}

TEST(Episode, ThoughtLoopHitsTurnBudget) {
  Harness h;
  AgentConfig cfg;
  cfg.max_turns = 5;
  const auto t = h.run(red_light(), {"THOUGHT: hmm"}, cfg);
  EXPECT_TRUE(t.budget_exhausted);
  EXPECT_EQ(t.steps.size(), 1u + 5u + 1u);
  expect_trace_invariants(t, cfg);
}

TEST(Episode, CitingRetrievedDocSetsUsedExperience) {
  Harness h;
  h.with_fixture_docs();
  const auto t = h.run(red_light(), {"CITE: doc-red-light", "DECISION: stop/straight"});
  EXPECT_TRUE(t.used_experience);
  EXPECT_TRUE(t.context.any_relevant());
  EXPECT_EQ(t.context.results.front().document.doc_id, "doc-red-light");
  expect_trace_invariants(t, {});
}

TEST(Episode, RetrievedContextOrderedAndGated) {
  Harness h;
  h.with_fixture_docs();
  AgentConfig cfg;
  const auto t = h.run(red_light(), {"DECISION: stop/straight"}, cfg);
  ASSERT_EQ(t.context.results.size(), 3u);
  for (std::size_t i = 0; i < t.context.results.size(); ++i) {
    const auto& e = t.context.results[i];
    EXPECT_EQ(e.gated_relevant, e.score >= cfg.relevance_threshold);
    if (i) { EXPECT_GE(t.context.results[i - 1].score, e.score); }
  }
}

TEST(Episode, ToolErrorsAreRecordedNotThrown) {
  Harness h;
  const auto t = h.run(red_light(), {"TOOL: teleport {}", "TOOL: detect_objects {\"range\": \"far\"}",
                                     "TOOL: crop_image {\"x\": 500, \"y\": 0, \"w\": 5, \"h\": 5}",
                                     "DECISION: keep/straight"});
  ASSERT_EQ(t.tool_call_count(), 3u);
  for (const auto& s : t.steps)
    if (const auto* r = s.as<ToolResultStep>()) { EXPECT_EQ(r->result.status, ToolStatus::error); }
  expect_trace_invariants(t, {});
}

TEST(Episode, MissingScriptIsPolicyUnavailable) {
  Harness h;
  ScriptedPolicy policy;
  try {
    run_episode(red_light(), *h.base.snapshot(), h.encoder, h.registry, policy, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PolicyUnavailable);
  }
}

TEST(Episode, RandomScriptsKeepInvariants) {
  Harness h;
  h.with_fixture_docs();
  std::mt19937_64 rng(77);
  const std::vector<std::string> pool{"THOUGHT: a", "CITE: doc-zebra", "TOOL: detect_objects {\"range\": 30}",
                                      "TOOL: detect_open_vocab {\"query\": \"car\"}", "TOOL: nope {}",
                                      "DECISION: keep/turn_left"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> script;
    const std::size_t n = 1 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) script.push_back(pool[rng() % pool.size()]);
    AgentConfig cfg;
    cfg.max_steps = 1 + rng() % 4;
    cfg.max_turns = 1 + rng() % 12;
    cfg.relevance_threshold = 0.0;  // every retrieved doc counts
    expect_trace_invariants(h.run(red_light(), script, cfg), cfg);
  }
}

TEST(Episode, SerializationIsDeterministic) {
  Harness h;
  h.with_fixture_docs();
  const std::vector<std::string> script{"CITE: doc-red-light", "TOOL: detect_objects {\"range\": 40}",
                                        "TOOL: crop_image {\"x\": 0, \"y\": 0, \"w\": 8, \"h\": 8}",
                                        "DECISION: stop/straight"};
  const std::string a = trace_to_json(h.run(red_light(), script)).dump();
  const std::string b = trace_to_json(h.run(red_light(), script)).dump();
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("\"kind\":\"tool_result\""), std::string::npos);
}

TEST(Context, RelevantDocListsItsTools) {
  ReferenceEncoder enc;
  auto doc = test::make_document("doc-z", "pedestrian crossing zebra", enc);
  doc.tools_used = {"detect_open_vocab"};
  RetrievedContext ctx{{{doc, 0.8, true}}};
  const auto text = build_policy_context(red_light(), ctx);
  const auto section = text.find("## EXPERIENCE 1 doc_id=doc-z");
  ASSERT_NE(section, std::string::npos);
  EXPECT_NE(text.find("detect_open_vocab", section), std::string::npos);
  EXPECT_NE(text.find("pedestrian crossing zebra", section), std::string::npos);
  EXPECT_NE(text.find("decision: keep/straight", section), std::string::npos);
  EXPECT_EQ(text.find(kNoRelevantExperience), std::string::npos);
}

TEST(Context, EmptyContextHasMarker) {
  EXPECT_NE(build_policy_context(red_light(), {}).find(kNoRelevantExperience), std::string::npos);
}

TEST(Context, LowRelevanceDocsAreHeadersOnly) {
  ReferenceEncoder enc;
  auto doc = test::make_document("doc-low", "fog on the bridge", enc);
  RetrievedContext ctx{{{doc, 0.1, false}}};
  const auto text = build_policy_context(red_light(), ctx);
  EXPECT_NE(text.find("## retrieved, low relevance 1 doc_id=doc-low"), std::string::npos);
  EXPECT_EQ(text.find("fog on the bridge"), std::string::npos);
  EXPECT_NE(text.find(kNoRelevantExperience), std::string::npos);
}

TEST(Context, TruncationDropsLowerScoreFirst) {
  ReferenceEncoder enc;
  auto hi = test::make_document("doc-hi", "red traffic light intersection", enc);
  auto lo = test::make_document("doc-lo", "pedestrian crossing zebra at the school", enc);
  RetrievedContext ctx{{{hi, 0.9, true}, {lo, 0.5, true}}};
  const auto full = build_policy_context(red_light(), ctx, 100000);
  const auto only_hi = build_policy_context(red_light(), {{{hi, 0.9, true}}}, 100000);
  const std::size_t budget = detail::count_tokens(only_hi);
  ASSERT_LT(budget, detail::count_tokens(full));
  const auto cut = build_policy_context(red_light(), ctx, budget);
  EXPECT_EQ(cut, only_hi);
  EXPECT_EQ(cut.find("doc-lo"), std::string::npos);
}
