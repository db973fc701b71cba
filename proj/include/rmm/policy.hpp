#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rmm/core.hpp"

namespace rmm {

/// History-dependent policy. `past` holds the completed steps of the current
/// episode; the latent context is never part of the interface.
///
/// distribution() must be safe to call concurrently.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int num_actions() const = 0;
  virtual void distribution(std::span<const Step> past, int state,
                            std::span<double> out) const = 0;
};

/// Convenience base for policies that pick one action per history.
class DeterministicPolicy : public Policy {
 public:
  explicit DeterministicPolicy(int num_actions) : num_actions_(num_actions) {}
  int num_actions() const override { return num_actions_; }
  void distribution(std::span<const Step> past, int state,
                    std::span<double> out) const final;
  virtual int action(std::span<const Step> past, int state) const = 0;

 private:
  int num_actions_;
};

class FixedActionPolicy final : public DeterministicPolicy {
 public:
  FixedActionPolicy(int num_actions, int action)
      : DeterministicPolicy(num_actions), action_(action) {}
  int action(std::span<const Step>, int) const override { return action_; }

 private:
  int action_;
};

/// Plays actions[t] at step t regardless of state or rewards.
class OpenLoopPolicy final : public DeterministicPolicy {
 public:
  OpenLoopPolicy(int num_actions, std::vector<int> actions)
      : DeterministicPolicy(num_actions), actions_(std::move(actions)) {}
  int action(std::span<const Step> past, int) const override;

 private:
  std::vector<int> actions_;
};

/// Deterministic (time, state) policy: table[t * S + s].
class ReactivePolicy final : public DeterministicPolicy {
 public:
  ReactivePolicy(int num_states, int num_actions, std::vector<int> table)
      : DeterministicPolicy(num_actions), num_states_(num_states), table_(std::move(table)) {}
  int action(std::span<const Step> past, int state) const override;

 private:
  int num_states_;
  std::vector<int> table_;
};

/// Enumerates every deterministic reactive policy for horizon H.
/// Returns nothing if there are more than `limit`.
std::vector<ReactivePolicy> all_reactive_policies(int num_states, int num_actions, int horizon,
                                                  std::size_t limit);

class UniformPolicy final : public Policy {
 public:
  explicit UniformPolicy(int num_actions) : num_actions_(num_actions) {}
  int num_actions() const override { return num_actions_; }
  void distribution(std::span<const Step>, int, std::span<double> out) const override;

 private:
  int num_actions_;
};

/// Deterministic but history-dependent: the action is a hash of the whole
/// observed history (including rewards) and a seed.
class HashedHistoryPolicy final : public DeterministicPolicy {
 public:
  HashedHistoryPolicy(int num_actions, std::uint64_t seed)
      : DeterministicPolicy(num_actions), seed_(seed) {}
  int action(std::span<const Step> past, int state) const override;

 private:
  std::uint64_t seed_;
};

/// Stochastic, history-dependent policy with hash-derived action weights.
class HashedStochasticPolicy final : public Policy {
 public:
  HashedStochasticPolicy(int num_actions, std::uint64_t seed)
      : num_actions_(num_actions), seed_(seed) {}
  int num_actions() const override { return num_actions_; }
  void distribution(std::span<const Step> past, int state, std::span<double> out) const override;

 private:
  int num_actions_;
  std::uint64_t seed_;
};

}  // namespace rmm
