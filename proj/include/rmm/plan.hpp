#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"
#include "rmm/enumerate.hpp"
#include "rmm/policy.hpp"

namespace rmm {

inline constexpr std::size_t kDefaultMemoBudget = 5'000'000;
inline constexpr double kBeliefQuantum = 1e-9;

/// Optimal history-dependent policy of a known RMMDP, computed by dynamic
/// programming over (t, belief, state). The memo is filled lazily, so the
/// policy is total: histories the model deems impossible leave the belief
/// unchanged and are solved on first use.
class BeliefPolicy final : public DeterministicPolicy {
 public:
  explicit BeliefPolicy(Rmmdp model, std::size_t memo_budget = kDefaultMemoBudget,
                        double belief_quantum = kBeliefQuantum);

  BeliefPolicy(const BeliefPolicy&) = delete;
  BeliefPolicy& operator=(const BeliefPolicy&) = delete;

  /// V* = sum_s nu(s) V_1(w, s).
  double value() const;
  int action(std::span<const Step> past, int state) const override;

  /// Optimal value-to-go from (t, belief, state), t = completed steps.
  double value_at(int t, const Belief& belief, int state) const;

  /// Posterior after `past`, skipping zero-likelihood observations.
  Belief belief_after(std::span<const Step> past) const;

  const Rmmdp& model() const { return model_; }
  std::size_t memo_size() const;

  /// Decision table keyed by (t, belief hash, state), plus the model.
  nlohmann::json to_json() const;
  static std::unique_ptr<BeliefPolicy> from_json(const nlohmann::json& doc);

 private:
  struct Key {
    int t = 0;
    int state = 0;
    std::vector<std::int64_t> belief;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  struct Entry {
    double value = 0.0;
    int action = 0;
    std::vector<double> belief;
  };

  Key make_key(int t, int state, const Belief& belief) const;
  const Entry& solve(int t, const Belief& belief, int state) const;  // caller holds mutex_

  Rmmdp model_;
  std::size_t memo_budget_;
  double quantum_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<Key, Entry, KeyHash> memo_;
};

struct PlanResult {
  double value = 0.0;
  std::unique_ptr<BeliefPolicy> policy;
};

PlanResult optimal_plan(const Rmmdp& model, std::size_t memo_budget = kDefaultMemoBudget,
                        double belief_quantum = kBeliefQuantum);

struct PolicyValue {
  double value = 0.0;
  bool exact = true;
  double ci_halfwidth = 0.0;  // 95% normal interval, Monte-Carlo mode only
  std::size_t episodes = 0;
};

struct PolicyValueOptions {
  double enumeration_budget = kEnumerationBudget;
  std::size_t mc_episodes = 100'000;
  std::uint64_t mc_seed = 0;
  Execution exec = Execution::parallel;
};

/// Expected return sum_t value(r_t). Exact when (S*A*Z)^H fits the budget,
/// Monte-Carlo with a confidence interval otherwise.
PolicyValue policy_value(const Rmmdp& model, const Policy& policy,
                         const PolicyValueOptions& opts = {});

/// Independent oracle: backward induction on the full history tree using
/// unnormalized joint probabilities, no belief abstraction.
double brute_force_optimal(const Rmmdp& model, double node_budget = 1e6);

}  // namespace rmm
