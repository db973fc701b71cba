#include "rmm/env.hpp"

#include <stdexcept>

namespace rmm {

SimulatedEnvironment::SimulatedEnvironment(Rmmdp model) : model_(std::move(model)) {
  check_dimensions(model_);
  shape_ = EnvironmentShape{model_.num_states, model_.num_actions, model_.horizon, model_.support};
}

int SimulatedEnvironment::reset(Rng& rng) {
  latent_ = sample_index(model_.weights, rng);
  state_ = sample_index(model_.init, rng);
  return state_;
}

std::pair<int, int> SimulatedEnvironment::step(int action, Rng& rng) {
  const int reward = sample_index(model_.reward_row(latent_, state_, action), rng);
  state_ = sample_index(model_.transition_row(state_, action), rng);
  return {reward, state_};
}

AugmentedState initial_augmented_state(int degree, int state) {
  if (degree < 1) throw std::invalid_argument("moment degree must be at least 1");
  return AugmentedState{1, std::vector<std::optional<StateAction>>(static_cast<std::size_t>(degree)),
                        state};
}

AugmentedState augmented_step(const AugmentedState& cur, AugmentedAction act, int next_base) {
  AugmentedState next = cur;
  next.state = next_base;
  const int d = cur.degree();
  if (cur.index > d) return next;
  if (act.flag != 0) {
    next.slots[static_cast<std::size_t>(cur.index - 1)] = StateAction{cur.state, act.action};
  }
  if (act.flag == -1) {
    next.index = d + 1;
  } else if (act.flag == 1) {
    next.index = cur.index + 1;
  }
  return next;
}

EpisodeRecord sample_episode(const Rmmdp& model, const Policy& policy, std::uint64_t seed) {
  Rng rng(seed);
  SimulatedEnvironment env(model);
  EpisodeRecord record;
  record.seed = seed;
  int s = env.reset(rng);
  record.latent = env.latent_for_diagnostics();
  std::vector<double> probs(static_cast<std::size_t>(model.num_actions));
  auto& steps = record.trajectory.steps;
  for (int t = 0; t < model.horizon; ++t) {
    policy.distribution(steps, s, probs);
    const int a = sample_index(probs, rng);
    const auto [r, next] = env.step(a, rng);
    steps.push_back(Step{s, a, r});
    s = next;
  }
  record.trajectory.latent = record.latent;
  return record;
}

EpisodeRecord sample_augmented_episode(Environment& env, const AugmentedPolicy& policy, int degree,
                                       std::uint64_t seed) {
  Rng rng(seed);
  EpisodeRecord record;
  record.seed = seed;
  const int H = env.shape().horizon;
  AugmentedState aug = initial_augmented_state(degree, env.reset(rng));
  if (auto* sim = dynamic_cast<SimulatedEnvironment*>(&env)) {
    record.latent = sim->latent_for_diagnostics();
    record.trajectory.latent = record.latent;
  }
  std::vector<int> recorded(static_cast<std::size_t>(degree), 0);
  std::optional<CommittedSample> pending;
  for (int t = 0; t < H; ++t) {
    const AugmentedAction act = policy.act(t, aug);
    const auto [r, next] = env.step(act.action, rng);
    record.trajectory.steps.push_back(Step{aug.state, act.action, r});
    record.augmented_actions.push_back(act);
    const AugmentedState after = augmented_step(aug, act, next);
    if (!aug.committed() && act.flag != 0) recorded[static_cast<std::size_t>(aug.index - 1)] = r;
    if (!aug.committed() && after.committed()) {
      CommittedSample sample;
      for (int j = 0; j < aug.index; ++j) {
        sample.pairs.push_back(*after.slots[static_cast<std::size_t>(j)]);
        sample.rewards.push_back(recorded[static_cast<std::size_t>(j)]);
      }
      pending = std::move(sample);
    }
    aug = after;
  }
  if (aug.committed()) record.committed = std::move(pending);
  return record;
}

nlohmann::json episode_to_json(const EpisodeRecord& record) {
  nlohmann::json line;
  std::vector<int> states, actions, rewards;
  for (const Step& s : record.trajectory.steps) {
    states.push_back(s.state);
    actions.push_back(s.action);
    rewards.push_back(s.reward);
  }
  line["seed"] = record.seed;
  line["states"] = states;
  line["actions"] = actions;
  line["rewards"] = rewards;
  if (record.committed) {
    MomentKey key{record.committed->pairs};
    line["committed"] = {{"key", key_to_string(key)}, {"rewards", record.committed->rewards}};
  } else {
    line["committed"] = nullptr;
  }
  return line;
}

}  // namespace rmm
