#pragma once

// Desk-scale GRPO: per scenario class, a cite-or-not softmax table times a meta-action
// softmax table, trained with the format + accuracy reward. Each iteration samples every group from a
// frozen copy of the current policy (the reference for both the importance ratio and the KL
// term), then takes a few gradient-ascent steps on the clipped objective.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtrx/error.hpp"
#include "mtrx/meta_action.hpp"
#include "mtrx/reward_grpo.hpp"

namespace mtrx::toy {

inline constexpr std::size_t kClasses = 2;  // 0: no relevant experience, 1: relevant experience
inline constexpr std::size_t kJointActions = 2 * kMetaActionCount;

/// Joint index: cite * 20 + meta-action index.
constexpr std::size_t joint_index(bool cite, MetaAction a) noexcept {
  return (cite ? kMetaActionCount : 0) + index_of(a);
}
constexpr bool joint_cites(std::size_t joint) noexcept { return joint >= kMetaActionCount; }
constexpr MetaAction joint_action(std::size_t joint) noexcept { return meta_action_at(joint % kMetaActionCount); }

struct ToyScenario {
  std::string scenario_id;
  std::size_t scenario_class = 0;
  MetaAction gold;
};

/// Per class: 2 cite logits (no, yes) followed by 20 meta-action logits.
inline constexpr std::size_t kCiteLogits = 2;
inline constexpr std::size_t kLogitsPerClass = kCiteLogits + kMetaActionCount;
using Logits = std::array<std::array<double, kLogitsPerClass>, kClasses>;

namespace detail {

template <std::size_t N>
std::array<double, N> softmax(std::span<const double, N> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::array<double, N> p{};
  double sum = 0.0;
  for (std::size_t j = 0; j < N; ++j) sum += (p[j] = std::exp(logits[j] - mx));
  for (double& v : p) v /= sum;
  return p;
}

template <std::size_t N>
double log_softmax_at(std::span<const double, N> logits, std::size_t index) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return logits[index] - mx - std::log(sum);
}

}  // namespace detail

/// pi(cite, action | class) = pi_cite(cite | class) * pi_action(action | class)
class TabularPolicy {
 public:
  TabularPolicy() {
    for (auto& row : logits_) row.fill(0.0);
  }
  explicit TabularPolicy(const Logits& logits) : logits_(logits) {}

  const Logits& logits() const noexcept { return logits_; }
  Logits& logits() noexcept { return logits_; }

  std::array<double, kCiteLogits> cite_probabilities(std::size_t cls) const {
    return detail::softmax<kCiteLogits>(cite_logits(cls));
  }
  std::array<double, kMetaActionCount> action_probabilities(std::size_t cls) const {
    return detail::softmax<kMetaActionCount>(action_logits(cls));
  }

  /// Joint distribution, indexed by joint_index.
  std::array<double, kJointActions> probabilities(std::size_t cls) const {
    const auto pc = cite_probabilities(cls);
    const auto pa = action_probabilities(cls);
    std::array<double, kJointActions> p{};
    for (std::size_t c = 0; c < kCiteLogits; ++c)
      for (std::size_t a = 0; a < kMetaActionCount; ++a) p[c * kMetaActionCount + a] = pc[c] * pa[a];
    return p;
  }

  double logprob(std::size_t cls, std::size_t joint) const {
    return detail::log_softmax_at<kCiteLogits>(cite_logits(cls), joint_cites(joint) ? 1 : 0) +
           detail::log_softmax_at<kMetaActionCount>(action_logits(cls), joint % kMetaActionCount);
  }

  double p_cite(std::size_t cls) const { return cite_probabilities(cls)[1]; }

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  std::span<const double, kCiteLogits> cite_logits(std::size_t cls) const {
    return std::span<const double, kLogitsPerClass>(logits_.at(cls)).first<kCiteLogits>();
  }
  std::span<const double, kMetaActionCount> action_logits(std::size_t cls) const {
    return std::span<const double, kLogitsPerClass>(logits_.at(cls)).last<kMetaActionCount>();
  }

  Logits logits_;
};

/// Group of G rollouts for one scenario, sampled from the reference policy.
struct ToyGroup {
  std::size_t scenario_class = 0;
  std::vector<std::size_t> joints;
  std::vector<double> rewards;
  std::vector<double> logprob_reference;
  AdvantageSet advantages;
};

/// Mean over groups of the GRPO objective evaluated at `policy`.
inline double toy_objective(const TabularPolicy& policy, std::span<const ToyGroup> groups, const GrpoConfig& config) {
  if (groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : groups) {
    std::vector<GroupSample> samples;
    for (std::size_t i = 0; i < g.joints.size(); ++i)
      samples.push_back({i, g.rewards[i], policy.logprob(g.scenario_class, g.joints[i]), g.logprob_reference[i]});
    total += grpo_objective(samples, g.advantages, config).objective;
  }
  return total / static_cast<double>(groups.size());
}

/// Analytic gradient of toy_objective with respect to the logits.
inline Logits toy_objective_gradient(const TabularPolicy& policy, std::span<const ToyGroup> groups,
                                     const GrpoConfig& config) {
  Logits grad;
  for (auto& row : grad) row.fill(0.0);
  if (groups.empty()) return grad;
  std::array<std::array<double, kCiteLogits>, kClasses> pc;
  std::array<std::array<double, kMetaActionCount>, kClasses> pa;
  for (std::size_t c = 0; c < kClasses; ++c) {
    pc[c] = policy.cite_probabilities(c);
    pa[c] = policy.action_probabilities(c);
  }
  for (const auto& g : groups) {
    const std::size_t cls = g.scenario_class;
    const double scale = 1.0 / (static_cast<double>(groups.size()) * static_cast<double>(g.joints.size()));
    auto& row = grad[cls];
    for (std::size_t i = 0; i < g.joints.size(); ++i) {
      const double lc = policy.logprob(cls, g.joints[i]);
      const double lr = g.logprob_reference[i];
      const double w = std::exp(lc - lr);
      const double a = g.advantages.advantages[i];
      const double clipped = std::clamp(w, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
      // Only the unclipped branch of the min depends on theta.
      const double d_surrogate = (w * a <= clipped * a) ? w * a : 0.0;
      const double d_kl = -std::expm1(lr - lc);
      const double d_lc = scale * (d_surrogate - config.beta * d_kl);
      if (d_lc == 0.0) continue;
      // d log softmax(z)[k] / dz_j = [j == k] - p_j, for each factor.
      for (std::size_t j = 0; j < kCiteLogits; ++j) row[j] -= d_lc * pc[cls][j];
      row[joint_cites(g.joints[i]) ? 1 : 0] += d_lc;
      for (std::size_t j = 0; j < kMetaActionCount; ++j) row[kCiteLogits + j] -= d_lc * pa[cls][j];
      row[kCiteLogits + g.joints[i] % kMetaActionCount] += d_lc;
    }
  }
  return grad;
}

struct ToyConfig {
  GrpoConfig grpo;
  double lambda = 1.0;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  std::size_t inner_steps = 2;
  std::size_t scenarios_per_class = 8;

  void validate() const {
    grpo.validate();
    if (!(lambda >= 0.0)) fail(ErrorCode::ConfigInvalid, "grpo.lambda must be >= 0");
    if (!(learning_rate > 0.0)) fail(ErrorCode::ConfigInvalid, "grpo.learning_rate must be > 0");
    if (inner_steps < 1) fail(ErrorCode::ConfigInvalid, "grpo.inner_steps must be >= 1");
    if (scenarios_per_class < 1) fail(ErrorCode::ConfigInvalid, "grpo.scenarios_per_class must be >= 1");
  }
};

struct LearningPoint {
  std::size_t iteration = 0;
  double mean_reward = 0.0;  // over this iteration's rollouts
  double p_cite_class0 = 0.0;  // after the update
  double p_cite_class1 = 0.0;
};

struct ToyTrainResult {
  TabularPolicy policy;
  std::vector<LearningPoint> curve;
};

namespace detail {

// 53 uniform bits; independent of the standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t sample_categorical(std::span<const double> p, std::mt19937_64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

}  // namespace detail

/// Samples one group per scenario from `reference` and scores it.
inline std::vector<ToyGroup> sample_groups(const TabularPolicy& reference, std::span<const ToyScenario> scenarios,
                                           const ToyConfig& config, std::mt19937_64& rng) {
  std::vector<ToyGroup> groups;
  groups.reserve(scenarios.size());
  for (const auto& s : scenarios) {
    ToyGroup g;
    g.scenario_class = s.scenario_class;
    const auto p = reference.probabilities(s.scenario_class);
    for (std::size_t i = 0; i < config.grpo.group_size; ++i) {
      const std::size_t joint = detail::sample_categorical(p, rng);
      const double fr = format_reward(s.scenario_class == 1, joint_cites(joint));
      const double ar = accuracy_reward(joint_action(joint), s.gold);
      g.joints.push_back(joint);
      g.rewards.push_back(total_reward(fr, ar, config.lambda).total);
      g.logprob_reference.push_back(reference.logprob(s.scenario_class, joint));
    }
    g.advantages = compute_advantages(g.rewards, config.grpo.advantage_floor);
    groups.push_back(std::move(g));
  }
  return groups;
}

/// Gradient ascent on the objective for one batch of groups.
inline void grpo_update(TabularPolicy& policy, std::span<const ToyGroup> groups, const ToyConfig& config) {
  for (std::size_t step = 0; step < config.inner_steps; ++step) {
    const Logits grad = toy_objective_gradient(policy, groups, config.grpo);
    for (std::size_t c = 0; c < kClasses; ++c)
      for (std::size_t j = 0; j < kLogitsPerClass; ++j) policy.logits()[c][j] += config.learning_rate * grad[c][j];
  }
}

inline ToyTrainResult toy_train(std::span<const ToyScenario> scenarios, const ToyConfig& config) {
  config.validate();
  for (const auto& s : scenarios)
    if (s.scenario_class >= kClasses)
      fail(ErrorCode::ConfigInvalid, "scenario '" + s.scenario_id + "' has class outside {0, 1}");
  if (config.iterations > 0 && scenarios.empty()) fail(ErrorCode::ConfigInvalid, "toy training needs scenarios");

  ToyTrainResult result;
  std::mt19937_64 rng(config.seed);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const TabularPolicy reference = result.policy;
    const auto groups = sample_groups(reference, scenarios, config, rng);
    double reward_sum = 0.0;
    std::size_t n = 0;
    for (const auto& g : groups)
      for (double r : g.rewards) reward_sum += r, ++n;
    grpo_update(result.policy, groups, config);
    result.curve.push_back(
        {it + 1, reward_sum / static_cast<double>(n), result.policy.p_cite(0), result.policy.p_cite(1)});
  }
  return result;
}

/// Balanced two-class set. All scenarios of a class share one seeded gold action, so a
/// per-class table can represent the optimum exactly.
inline std::vector<ToyScenario> synthetic_scenarios(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<ToyScenario> out;
  for (std::size_t c = 0; c < kClasses; ++c) {
    const MetaAction gold = meta_action_at(static_cast<std::size_t>(rng() % kMetaActionCount));
    for (std::size_t i = 0; i < per_class; ++i)
      out.push_back({"toy-" + std::to_string(c) + "-" + std::to_string(i), c, gold});
  }
  return out;
}

}  // namespace mtrx::toy
