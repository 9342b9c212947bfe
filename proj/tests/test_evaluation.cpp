#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mtrx/evaluation.hpp"
#include "test_util.hpp"

using namespace mtrx;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an mtrx::Error";
  return ErrorCode::InvariantViolation;
}

EvalRecord rec(MetaAction predicted, MetaAction gold) { return {"r", predicted, gold, {}, {}, {}}; }

std::vector<EvalRecord> random_records(std::mt19937_64& rng, std::size_t n) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(rec(meta_action_at(rng() % kMetaActionCount), meta_action_at(rng() % kMetaActionCount)));
  return out;
}

}  // namespace

TEST(PlanningAccuracy, FixtureRecords) {
  const auto recs = read_eval_records(test::fixtures() / "eval_records.jsonl");
  ASSERT_EQ(recs.size(), 10u);
  const auto a = planning_accuracy(recs);
  EXPECT_EQ(a.path, 90.0);
  EXPECT_EQ(a.speed, 80.0);
  EXPECT_EQ(a.joint, 70.0);
}

TEST(PlanningAccuracy, SpeedOnlyCorrect) {
  const std::vector<EvalRecord> r{rec({Speed::keep, Path::turn_left}, {Speed::keep, Path::straight})};
  const auto a = planning_accuracy(r);
  EXPECT_EQ(a.path, 0.0);
  EXPECT_EQ(a.speed, 100.0);
  EXPECT_EQ(a.joint, 0.0);
  EXPECT_EQ(code_of([] { planning_accuracy({}); }), ErrorCode::EmptyEvalSet);
}

TEST(PlanningAccuracy, JointNeverExceedsComponents) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 1000; ++k) {
    auto recs = random_records(rng, 1 + rng() % 50);
    // Bias some records toward matches so joint is not trivially zero.
    for (auto& r : recs)
      if (rng() % 3 == 0) r.predicted = r.gold;
    const auto a = planning_accuracy(recs);
    EXPECT_LE(a.joint, std::min(a.path, a.speed));
    std::shuffle(recs.begin(), recs.end(), rng);
    const auto b = planning_accuracy(recs);
    EXPECT_EQ(a.path, b.path);
    EXPECT_EQ(a.speed, b.speed);
    EXPECT_EQ(a.joint, b.joint);
  }
}

TEST(Pdms, AnalyticCases) {
  EXPECT_EQ(pdms_score({}), 1.0);
  EXPECT_EQ(pdms_score({0.0, 1, 1, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(pdms_score({1, 1, 0.9, 1.0, 0.8}), 0.875);  // (4.5 + 2 + 4) / 12
}

TEST(Pdms, WeightedSubscoreOracle) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const PdmsSubscores s{u(rng), u(rng), u(rng), u(rng), u(rng)};
    EXPECT_NEAR(pdms_score(s), s.nc * s.dac * (5 * s.ttc + 2 * s.cf + 5 * s.ep) / 12.0, 1e-15);
    PdmsSubscores up = s;
    up.ep = std::min(1.0, s.ep + 0.1);
    EXPECT_GE(pdms_score(up), pdms_score(s));
  }
  EXPECT_EQ(code_of([] { pdms_score({1.2, 1, 1, 1, 1}); }), ErrorCode::SubscoreOutOfRange);
  EXPECT_EQ(code_of([] { pdms_score({1, 1, 1, -0.1, 1}); }), ErrorCode::SubscoreOutOfRange);
  const auto agg = pdms_aggregate({{}, {0.0, 1, 1, 1, 1}});
  EXPECT_EQ(agg.per_scenario, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(agg.mean, 50.0);
}

TEST(Judge, ParseResponse) {
  const auto s = parse_judge_response(R"({"risk_assessment":80,"commonsense_reasoning":70.5,"scene_awareness":0})");
  EXPECT_EQ(s, (JudgeScores{80, 70.5, 0}));
  EXPECT_EQ(code_of([] { parse_judge_response(R"({"risk_assessment":80,"commonsense_reasoning":70})"); }),
            ErrorCode::MalformedJudgeResponse);
  EXPECT_EQ(code_of([] {
              parse_judge_response(R"({"risk_assessment":101,"commonsense_reasoning":70,"scene_awareness":1})");
            }),
            ErrorCode::MalformedJudgeResponse);
  EXPECT_EQ(code_of([] { parse_judge_response("not json"); }), ErrorCode::MalformedJudgeResponse);
}

TEST(Judge, RubricScoresFixtureTraces) {
  const auto judge_ = RubricJudge::from_file(test::fixtures() / "rubric.json");
  const EvalRecord r = rec({}, {});
  EXPECT_EQ(parse_judge_response(judge_.judge(r, "A Traffic Light ahead and a pedestrian")), (JudgeScores{100, 100, 100}));
  EXPECT_EQ(parse_judge_response(judge_.judge(r, "nothing notable")), (JudgeScores{50, 50, 50}));
  auto recs = read_eval_records(test::fixtures() / "eval_records.jsonl");
  recs.resize(3);
  const auto judged = judge(recs, judge_, file_trace_loader(test::fixtures()));
  EXPECT_EQ(judged[0].judge_scores->risk_assessment, 100.0);
  EXPECT_EQ(judged[1].judge_scores->risk_assessment, 75.0);
  EXPECT_EQ(judged[2].judge_scores->risk_assessment, 50.0);
  EXPECT_EQ(code_of([] { RubricJudge(50, {{"x", 1, "vibes"}}); }), ErrorCode::ConfigInvalid);
}

TEST(Report, RendersPublishedRows) {
  const std::pair<const char*, const char*> rows[] = {
      {"headline_navsim.jsonl", "79.8,78.8,80.8,93.1,84.6,82.6"},
      {"headline_roadwork.jsonl", "80.2,79.6,80.3,44.2,72.1,33.5"},
  };
  for (const auto& [file, expected] : rows) {
    const auto rep = build_report(read_eval_records(test::fixtures() / file));
    ASSERT_TRUE(rep.judge);
    const std::string got = detail::fixed1(rep.judge->risk_assessment) + "," +
                            detail::fixed1(rep.judge->commonsense_reasoning) + "," +
                            detail::fixed1(rep.judge->scene_awareness) + "," + detail::fixed1(rep.path_acc) + "," +
                            detail::fixed1(rep.speed_acc) + "," + detail::fixed1(rep.joint_acc);
    EXPECT_EQ(got, expected) << file;
    const std::string text = render_report(rep, ReportFormat::text);
    std::string flat = expected;
    std::replace(flat.begin(), flat.end(), ',', ' ');
    std::istringstream want(flat);
    std::string value;
    while (want >> value) EXPECT_NE(text.find(value), std::string::npos) << value;
  }
}

TEST(Report, TextLayout) {
  EvalReport rep{10, std::nullopt, 90.0, 80.0, 70.0, std::nullopt};
  const std::string text = render_report(rep, ReportFormat::text);
  EXPECT_EQ(text,
            "Driving Metrics (%) / Planning (%)   n=10\n"
            "Risk Assess.  Reason.  Scene Aware.  Path.  Speed.  Acc.\n"
            "           -        -             -   90.0    80.0  70.0\n");
}

TEST(Report, CsvRoundTripAndColumns) {
  EvalReport rep{10, JudgeScores{75, 75, 75}, 90.0, 80.0, 70.0, std::nullopt};
  const std::string csv = render_report(rep, ReportFormat::csv);
  EXPECT_EQ(csv, "n_records,risk_assess,reason,scene_aware,path,speed,acc\n10,75.0,75.0,75.0,90.0,80.0,70.0\n");
  EXPECT_EQ(parse_report_csv(csv), rep);
  rep.judge.reset();
  rep.pdms = 87.5;
  const std::string with_pdms = render_report(rep, ReportFormat::csv);
  EXPECT_EQ(with_pdms, "n_records,risk_assess,reason,scene_aware,path,speed,acc,pdms\n10,,,,90.0,80.0,70.0,87.5\n");
  EXPECT_EQ(parse_report_csv(with_pdms), rep);
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 200; ++i) {
    EvalReport r{rng() % 5000, JudgeScores{u(rng), u(rng), u(rng)}, u(rng), u(rng), u(rng), u(rng)};
    EXPECT_EQ(parse_report_csv(render_report(r, ReportFormat::csv)), r);
  }
  EXPECT_EQ(code_of([] { parse_report_csv("bogus\n1,2\n"); }), ErrorCode::InvariantViolation);
}

TEST(Report, PartialJudgingOmitsMeans) {
  auto recs = read_eval_records(test::fixtures() / "eval_records.jsonl");
  recs[0].judge_scores = JudgeScores{1, 2, 3};
  EXPECT_FALSE(build_report(recs).judge);
  for (auto& r : recs) r.pdms = PdmsSubscores{};
  EXPECT_EQ(build_report(recs).pdms, 100.0);
}
