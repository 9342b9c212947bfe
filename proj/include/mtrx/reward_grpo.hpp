#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mtrx/agent_loop.hpp"
#include "mtrx/error.hpp"
#include "mtrx/meta_action.hpp"

namespace mtrx {

struct RewardBreakdown {
  double format_reward = 0.0;
  double acc_reward = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// 1.0 when relevant experience exists and was used, 0.5 when none exists and none was
/// used, 0 for either mismatch.
constexpr double format_reward(bool relevant_exists, bool used_experience) noexcept {
  if (relevant_exists && used_experience) return 1.0;
  if (!relevant_exists && !used_experience) return 0.5;
  return 0.0;
}

/// Relevance comes from the gate flags recorded in the trace's retrieved context.
inline double format_reward(const ReasoningTrace& trace) noexcept {
  return format_reward(trace.context.any_relevant(), trace.used_experience);
}

/// 0.5 per matching component.
constexpr double accuracy_reward(MetaAction predicted, MetaAction gold) noexcept {
  return (predicted.speed == gold.speed ? 0.5 : 0.0) + (predicted.path == gold.path ? 0.5 : 0.0);
}

constexpr RewardBreakdown total_reward(double format, double accuracy, double lambda) noexcept {
  return {format, accuracy, lambda, lambda * format + accuracy};
}

struct GrpoConfig {
  std::size_t group_size = 8;
  double beta = 0.02;
  double clip_eps = 0.2;
  double advantage_floor = 1e-8;

  void validate() const {
    if (group_size < 2) fail(ErrorCode::ConfigInvalid, "grpo.group_size must be >= 2");
    if (!(beta >= 0.0)) fail(ErrorCode::ConfigInvalid, "grpo.beta must be >= 0");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail(ErrorCode::ConfigInvalid, "grpo.epsilon must be in (0, 1)");
    if (!(advantage_floor > 0.0)) fail(ErrorCode::ConfigInvalid, "grpo.advantage_floor must be > 0");
  }
};

/// One sampled output o_i with its reward and log-probabilities under both policies.
struct GroupSample {
  std::size_t index = 0;
  double reward = 0.0;
  double logprob_current = 0.0;
  double logprob_reference = 0.0;

  /// w_i = pi_theta(o_i) / pi_ref(o_i)
  double importance_ratio() const noexcept { return std::exp(logprob_current - logprob_reference); }
};

struct AdvantageSet {
  std::vector<double> advantages;
};

/// A_i = (r_i - mean) / (std + delta) with population std; exactly zero for a constant group.
inline AdvantageSet compute_advantages(std::span<const double> rewards, double delta) {
  if (rewards.size() < 2)
    fail(ErrorCode::GroupTooSmall, "group of " + std::to_string(rewards.size()) + " (need >= 2)");
  AdvantageSet out{std::vector<double>(rewards.size(), 0.0)};
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  const double denom = std::sqrt(var) + delta;
  for (std::size_t i = 0; i < rewards.size(); ++i) out.advantages[i] = (rewards[i] - mean) / denom;
  return out;
}

/// Non-negative k3 estimator of KL(pi_theta || pi_ref) for one sample:
/// r - log r - 1 with r = pi_ref / pi_theta.
inline double kl_k3(double logprob_current, double logprob_reference) noexcept {
  const double d = logprob_reference - logprob_current;
  return std::expm1(d) - d;
}

/// min(w A, clip(w, 1 - eps, 1 + eps) A)
inline double clipped_surrogate(double ratio, double advantage, double clip_eps) noexcept {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

struct GrpoObjective {
  double objective = 0.0;          // mean(J_i) - beta * mean(kl_i)
  std::vector<double> per_sample;  // J_i
  std::vector<double> kl;          // kl_i
  double kl_estimate = 0.0;        // mean(kl_i)
};

inline GrpoObjective grpo_objective(std::span<const GroupSample> samples, const AdvantageSet& advantages,
                                    const GrpoConfig& config) {
  if (samples.size() != advantages.advantages.size())
    fail(ErrorCode::LengthMismatch, std::to_string(samples.size()) + " samples vs " +
                                        std::to_string(advantages.advantages.size()) + " advantages");
  if (samples.empty()) fail(ErrorCode::LengthMismatch, "empty group");
  GrpoObjective out;
  double sum_j = 0.0, sum_kl = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double j = clipped_surrogate(samples[i].importance_ratio(), advantages.advantages[i], config.clip_eps);
    const double kl = kl_k3(samples[i].logprob_current, samples[i].logprob_reference);
    out.per_sample.push_back(j);
    out.kl.push_back(kl);
    sum_j += j;
    sum_kl += kl;
  }
  const double n = static_cast<double>(samples.size());
  out.kl_estimate = sum_kl / n;
  out.objective = sum_j / n - config.beta * out.kl_estimate;
  return out;
}

}  // namespace mtrx
