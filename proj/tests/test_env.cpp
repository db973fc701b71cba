#include <doctest.h>

#include <cmath>

#include "rmm/env.hpp"
#include "rmm/generators.hpp"
#include "rmm/rng.hpp"

using namespace rmm;

namespace {

// Pseudo-random augmented policy: action and flag hashed from (seed, t, state).
class ScrambledAugmentedPolicy final : public AugmentedPolicy {
 public:
  ScrambledAugmentedPolicy(int num_actions, std::uint64_t seed) : A_(num_actions), seed_(seed) {}
  AugmentedAction act(int t, const AugmentedState& s) const override {
    const std::uint64_t h = splitmix64(seed_ ^ (static_cast<std::uint64_t>(t) << 20) ^
                                       static_cast<std::uint64_t>(s.state * 131 + s.index));
    return AugmentedAction{static_cast<int>(h % static_cast<std::uint64_t>(A_)),
                           static_cast<int>((h >> 8) % 3) - 1};
  }

 private:
  int A_;
  std::uint64_t seed_;
};

class FixedAugmentedPolicy final : public AugmentedPolicy {
 public:
  explicit FixedAugmentedPolicy(AugmentedAction a) : a_(a) {}
  AugmentedAction act(int, const AugmentedState&) const override { return a_; }

 private:
  AugmentedAction a_;
};

}  // namespace

TEST_CASE("augmented step follows the augmentation rule") {
  const int d = 3;
  AugmentedState s = initial_augmented_state(d, 4);
  AugmentedState commit = augmented_step(s, {1, -1}, 2);
  CHECK(commit.index == d + 1);
  CHECK(commit.slots[0] == StateAction{4, 1});
  CHECK_FALSE(commit.slots[1].has_value());
  CHECK(commit.state == 2);

  AugmentedState mid = augmented_step(s, {0, 1}, 1);
  CHECK(mid.index == 2);
  AugmentedState skip = augmented_step(mid, {1, 0}, 3);
  CHECK(skip.index == 2);
  CHECK(skip.slots == mid.slots);
  CHECK(skip.state == 3);

  AugmentedState at_d = mid;
  at_d.index = d;
  AugmentedState done = augmented_step(at_d, {1, 1}, 0);
  CHECK(done.index == d + 1);
  CHECK(done.slots[static_cast<std::size_t>(d - 1)] == StateAction{1, 1});

  AugmentedState frozen = augmented_step(done, {0, -1}, 2);
  CHECK(frozen.index == d + 1);
  CHECK(frozen.slots == done.slots);
  CHECK_THROWS(initial_augmented_state(0, 0));
}

TEST_CASE("single-context deterministic model yields one trajectory for every seed") {
  Rmmdp m = make_empty_model(2, 1, 3, RewardSupport::binary(), 1);
  m.init = {1.0, 0.0};
  m.transition = {0.0, 1.0, 1.0, 0.0};
  m.weights = {1.0};
  m.rewards = {0.0, 1.0, 1.0, 0.0};
  FixedActionPolicy p(1, 0);
  const auto first = sample_episode(m, p, 1).trajectory.steps;
  for (std::uint64_t seed = 2; seed < 20; ++seed) CHECK(sample_episode(m, p, seed).trajectory.steps == first);
  CHECK(first == std::vector<Step>{{0, 0, 1}, {1, 0, 0}, {0, 0, 1}});
}

TEST_CASE("sampled rewards match the mixture marginal") {
  const Rmmdp e1 = example_e1(1);
  FixedActionPolicy p(2, 0);
  const int n = 100'000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += sample_episode(e1, p, derive_seed(42, i)).trajectory.steps[0].reward;
  const double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(ones / static_cast<double>(n) - 0.5) <= 3 * sigma);
}

TEST_CASE("episodes are reproducible from their seed") {
  GeneratorSpec spec;
  spec.seed = 4;
  const Rmmdp m = random_model(spec);
  HashedStochasticPolicy p(2, 3);
  const auto a = sample_episode(m, p, 77);
  const auto b = sample_episode(m, p, 77);
  CHECK(a.trajectory.steps == b.trajectory.steps);
  CHECK(a.latent == b.latent);
  CHECK(episode_to_json(a) == episode_to_json(b));
}

TEST_CASE("committed key is the flagged subsequence and the index never decreases") {
  GeneratorSpec spec;
  spec.num_states = 3;
  spec.num_actions = 3;
  spec.horizon = 6;
  spec.seed = 10;
  const Rmmdp m = random_model(spec);
  for (int d = 1; d <= 4; ++d) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      SimulatedEnvironment env(m);
      ScrambledAugmentedPolicy pol(3, seed * 7 + static_cast<std::uint64_t>(d));
      const auto rec = sample_augmented_episode(env, pol, d, seed);
      // Replay the augmentation against the raw trajectory.
      AugmentedState aug = initial_augmented_state(d, rec.trajectory.steps[0].state);
      std::vector<StateAction> flagged;
      std::vector<int> rewards;
      for (std::size_t t = 0; t < rec.trajectory.steps.size(); ++t) {
        const Step& st = rec.trajectory.steps[t];
        const AugmentedAction act = rec.augmented_actions[t];
        if (act.flag != 0 && aug.index <= d) {
          flagged.push_back({st.state, st.action});
          rewards.push_back(st.reward);
        }
        const int next = t + 1 < rec.trajectory.steps.size() ? rec.trajectory.steps[t + 1].state : 0;
        const AugmentedState after = augmented_step(aug, act, next);
        CHECK(after.index >= aug.index);
        aug = after;
      }
      CHECK(rec.committed.has_value() == aug.committed());
      if (rec.committed) {
        CHECK(rec.committed->pairs == flagged);
        CHECK(rec.committed->rewards == rewards);
      }
    }
  }
}

TEST_CASE("committed reward patterns converge to moment values") {
  const Rmmdp e1 = example_e1(2);
  FixedAugmentedPolicy pol({0, 1});
  const int n = 100'000;
  std::vector<int> hist(4, 0);
  for (int i = 0; i < n; ++i) {
    SimulatedEnvironment env(e1);
    const auto rec = sample_augmented_episode(env, pol, 2, derive_seed(5, i));
    REQUIRE(rec.committed.has_value());
    ++hist[pattern_index(rec.committed->rewards, 2)];
  }
  std::vector<StateAction> x{{0, 0}, {0, 0}};
  for (std::size_t z = 0; z < 4; ++z) {
    const double p = moment_value(e1, x, pattern_from_index(z, 2, 2));
    const double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(hist[z] / static_cast<double>(n) - p) <= 3 * sigma);
  }
}
