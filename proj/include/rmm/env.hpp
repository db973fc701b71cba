#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"
#include "rmm/policy.hpp"
#include "rmm/rng.hpp"

namespace rmm {

/// What a learner may know about an environment without seeing its model.
struct EnvironmentShape {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  RewardSupport support;

  int num_rewards() const { return support.size(); }
};

/// Episodic black box. The latent context is drawn in reset() and never
/// reported through this interface.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvironmentShape& shape() const = 0;
  virtual int reset(Rng& rng) = 0;
  /// Plays `action` in the current state; returns (reward index, next state).
  virtual std::pair<int, int> step(int action, Rng& rng) = 0;
};

class SimulatedEnvironment final : public Environment {
 public:
  explicit SimulatedEnvironment(Rmmdp model);

  const EnvironmentShape& shape() const override { return shape_; }
  int reset(Rng& rng) override;
  std::pair<int, int> step(int action, Rng& rng) override;

  /// Context of the running episode. Diagnostics and tests only.
  int latent_for_diagnostics() const { return latent_; }

 private:
  Rmmdp model_;
  EnvironmentShape shape_;
  int latent_ = 0;
  int state_ = 0;
};

/// State of the d-th order MDP. `index` (1-based) is the next slot to fill;
/// i == d + 1 means a moment sample has been committed.
struct AugmentedState {
  int index = 1;
  std::vector<std::optional<StateAction>> slots;
  int state = 0;

  int degree() const { return static_cast<int>(slots.size()); }
  bool committed() const { return index == degree() + 1; }
  bool operator==(const AugmentedState&) const = default;
};

/// flag: 0 skip, 1 record and continue, -1 record and commit.
struct AugmentedAction {
  int action = 0;
  int flag = 0;

  bool operator==(const AugmentedAction&) const = default;
};

AugmentedState initial_augmented_state(int degree, int state);

/// Deterministic part of the d-th order MDP transition. Once committed,
/// further flags have no effect.
AugmentedState augmented_step(const AugmentedState& cur, AugmentedAction act, int next_base);

/// Time-ordered pairs and rewards collected in one episode.
struct CommittedSample {
  std::vector<StateAction> pairs;
  std::vector<int> rewards;
};

struct EpisodeRecord {
  Trajectory trajectory;
  std::vector<AugmentedAction> augmented_actions;  // empty for plain episodes
  std::optional<CommittedSample> committed;
  int latent = -1;  // diagnostics only
  std::uint64_t seed = 0;
};

/// Samples one episode of `model` under a base-MDP policy. No moment sample
/// is committed.
EpisodeRecord sample_episode(const Rmmdp& model, const Policy& policy, std::uint64_t seed);

/// Policy on the d-th order MDP; it only sees the augmented state.
class AugmentedPolicy {
 public:
  virtual ~AugmentedPolicy() = default;
  virtual AugmentedAction act(int t, const AugmentedState& state) const = 0;
};

/// Runs one episode of the d-th order MDP against `env`. The committed sample
/// is recorded when the index reaches d + 1 and returned at episode end.
EpisodeRecord sample_augmented_episode(Environment& env, const AugmentedPolicy& policy, int degree,
                                       std::uint64_t seed);

/// One JSON line (no trailing newline) for the trajectory log.
nlohmann::json episode_to_json(const EpisodeRecord& record);

}  // namespace rmm
