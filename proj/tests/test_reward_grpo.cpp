#include <gtest/gtest.h>

#include <random>

#include "mtrx/reward_grpo.hpp"
#include "test_util.hpp"

using namespace mtrx;

TEST(FormatReward, TruthTable) {
  EXPECT_EQ(format_reward(true, true), 1.0);
  EXPECT_EQ(format_reward(true, false), 0.0);
  EXPECT_EQ(format_reward(false, false), 0.5);
  EXPECT_EQ(format_reward(false, true), 0.0);
}

TEST(FormatReward, ReadsGateFlagsFromTrace) {
  ReferenceEncoder enc;
  ReasoningTrace t;
  const auto doc = test::make_document("d", "fog", enc);
  t.context.results = {{doc, 0.2, false}};
  EXPECT_EQ(format_reward(t), 0.5);  // retrieved but irrelevant, omitted
  t.used_experience = true;
  EXPECT_EQ(format_reward(t), 0.0);
  t.context.results.push_back({doc, 0.9, true});
  EXPECT_EQ(format_reward(t), 1.0);
  t.used_experience = false;
  EXPECT_EQ(format_reward(t), 0.0);
}

TEST(AccuracyReward, ComponentGrading) {
  EXPECT_EQ(accuracy_reward({Speed::keep, Path::straight}, {Speed::keep, Path::straight}), 1.0);
  EXPECT_EQ(accuracy_reward({Speed::keep, Path::straight}, {Speed::keep, Path::turn_left}), 0.5);
  EXPECT_EQ(accuracy_reward({Speed::stop, Path::turn_left}, {Speed::accelerate, Path::straight}), 0.0);
}

TEST(TotalReward, Examples) {
  EXPECT_EQ(total_reward(1.0, 0.7, 0.0).total, 0.7);
  EXPECT_EQ(total_reward(1.0, 1.0, 1.0).total, 2.0);
  EXPECT_EQ(total_reward(0.5, 0.0, 0.5).total, 0.25);
  const auto b = total_reward(0.5, 1.0, 2.0);
  EXPECT_EQ(b.format_reward, 0.5);
  EXPECT_EQ(b.acc_reward, 1.0);
  EXPECT_EQ(b.lambda, 2.0);
}

TEST(TotalReward, LinearAndMonotone) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0), l(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double fr = u(rng), ar = u(rng), lam = l(rng), d = u(rng) * 0.1;
    EXPECT_NEAR(total_reward(fr, ar, lam).total, lam * fr + ar, 1e-12);
    EXPECT_GE(total_reward(fr + d, ar, lam).total, total_reward(fr, ar, lam).total);
    EXPECT_GE(total_reward(fr, ar + d, lam).total, total_reward(fr, ar, lam).total);
  }
}

TEST(Advantages, DegenerateGroupIsExactlyZero) {
  const std::vector<double> r{1, 1, 1, 1};
  for (double a : compute_advantages(r, 1e-8).advantages) EXPECT_EQ(a, 0.0);
}

TEST(Advantages, TwoPointGroup) {
  const std::vector<double> r{0, 2};
  const auto a = compute_advantages(r, 1e-8).advantages;
  EXPECT_NEAR(a[0], -1.0 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(a[1], 1.0 / (1.0 + 1e-8), 1e-15);
}

TEST(Advantages, DirectArithmeticOracle) {
  const std::vector<double> r{0, 0.5, 1.0, 1.5};
  const double mean = 0.75, sd = std::sqrt(0.3125), delta = 1e-8;
  const auto a = compute_advantages(r, delta).advantages;
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(a[i], (r[i] - mean) / (sd + delta), 1e-15);
}

TEST(Advantages, TooSmallGroup) {
  const std::vector<double> one{1.0};
  try {
    compute_advantages(one, 1e-8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GroupTooSmall);
  }
}

TEST(Advantages, MeanZeroAndShiftInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> r(2 + rng() % 10);
    for (auto& x : r) x = u(rng);
    const auto a = compute_advantages(r, 1e-8).advantages;
    double mean = 0.0;
    for (double x : a) mean += x;
    EXPECT_NEAR(mean / static_cast<double>(a.size()), 0.0, 1e-9);
    std::vector<double> shifted = r;
    for (auto& x : shifted) x += 3.25;
    const auto b = compute_advantages(shifted, 1e-8).advantages;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(Objective, AnalyticClipExamples) {
  EXPECT_EQ(clipped_surrogate(2.0, 1.0, 0.2), 1.2);
  EXPECT_EQ(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
}

TEST(Objective, IdentityPoliciesGiveZeroKl) {
  const std::vector<double> r{0.0, 1.0, 0.5, 2.0};
  const auto adv = compute_advantages(r, 1e-8);
  std::vector<GroupSample> s;
  for (std::size_t i = 0; i < r.size(); ++i) s.push_back({i, r[i], -1.3, -1.3});
  const auto j = grpo_objective(s, adv, {});
  EXPECT_EQ(j.kl_estimate, 0.0);
  double mean = 0.0;
  for (double a : adv.advantages) mean += a;
  EXPECT_NEAR(j.objective, mean / 4.0, 1e-15);
}

TEST(Objective, ZeroVarianceGroupGivesMinusBetaKl) {
  const std::vector<double> r(8, 0.7);
  const auto adv = compute_advantages(r, 1e-8);
  std::vector<GroupSample> s;
  for (std::size_t i = 0; i < 8; ++i) s.push_back({i, 0.7, -1.0 - 0.1 * static_cast<double>(i), -1.0});
  GrpoConfig cfg;
  const auto j = grpo_objective(s, adv, cfg);
  EXPECT_GT(j.kl_estimate, 0.0);
  EXPECT_DOUBLE_EQ(j.objective, -cfg.beta * j.kl_estimate);
}

TEST(Objective, LengthMismatch) {
  const std::vector<double> r{0.0, 1.0};
  std::vector<GroupSample> s{{0, 0.0, 0.0, 0.0}};
  try {
    grpo_objective(s, compute_advantages(r, 1e-8), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Objective, ClipBoundAndBranchAgreement) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> lw(-1.5, 1.5), ua(-3.0, 3.0);
  const double eps = 0.2;
  for (int i = 0; i < 5000; ++i) {
    const double w = std::exp(lw(rng)), a = ua(rng);
    const double j = clipped_surrogate(w, a, eps);
    EXPECT_LE(j, std::abs(a) * (1 + eps) + 1e-15);
    if (w >= 1 - eps && w <= 1 + eps) { EXPECT_EQ(j, w * a); }
  }
}

TEST(Kl, K3NonNegativeZeroIffEqual) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-6.0, 0.0);
  for (int i = 0; i < 5000; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_GE(kl_k3(a, b), 0.0);
    if (a != b) { EXPECT_GT(kl_k3(a, b), 0.0); }
  }
  EXPECT_EQ(kl_k3(-2.0, -2.0), 0.0);
  // r - log r - 1 with r = pi_ref / pi_theta
  const double r = std::exp(-1.0 - -0.5);
  EXPECT_NEAR(kl_k3(-0.5, -1.0), r - std::log(r) - 1.0, 1e-15);
}

TEST(GroupSample, ImportanceRatio) {
  const GroupSample s{0, 0.0, -0.4, -1.1};
  EXPECT_NEAR(s.importance_ratio(), std::exp(0.7), 1e-12);
}

TEST(GrpoConfig, Validation) {
  GrpoConfig c;
  c.group_size = 1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.clip_eps = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.beta = -1;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(GrpoConfig{}.validate());
  EXPECT_EQ(GrpoConfig{}.group_size, 8u);
  EXPECT_EQ(GrpoConfig{}.beta, 0.02);
}
