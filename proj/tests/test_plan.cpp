#include <doctest.h>

#include <algorithm>

#include "rmm/generators.hpp"
#include "rmm/model_io.hpp"
#include "rmm/plan.hpp"

using namespace rmm;

namespace {

// Classic finite-horizon value iteration; valid when M = 1.
double value_iteration(const Rmmdp& m) {
  std::vector<double> v(static_cast<std::size_t>(m.num_states), 0.0);
  for (int t = m.horizon - 1; t >= 0; --t) {
    std::vector<double> nv(v.size());
    for (int s = 0; s < m.num_states; ++s) {
      double best = -1e300;
      for (int a = 0; a < m.num_actions; ++a) {
        double q = 0.0;
        for (int z = 0; z < m.num_rewards(); ++z) q += m.mu(0, s, a, z) * m.support.value(z);
        for (int s2 = 0; s2 < m.num_states; ++s2) q += m.T(s, a, s2) * v[static_cast<std::size_t>(s2)];
        best = std::max(best, q);
      }
      nv[static_cast<std::size_t>(s)] = best;
    }
    v = nv;
  }
  double out = 0.0;
  for (int s = 0; s < m.num_states; ++s) out += m.init[static_cast<std::size_t>(s)] * v[static_cast<std::size_t>(s)];
  return out;
}

}  // namespace

TEST_CASE("optimal value of the two-coin example") {
  CHECK(optimal_plan(example_e1(2)).value == doctest::Approx(1.09).epsilon(1e-12));
  CHECK(optimal_plan(example_e1(1)).value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(brute_force_optimal(example_e1(2)) == doctest::Approx(1.09).epsilon(1e-12));
}

TEST_CASE("belief planner agrees with the history-tree oracle on random models") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    GeneratorSpec spec;
    spec.num_states = 1 + static_cast<int>(seed % 3);
    spec.num_actions = 1 + static_cast<int>((seed / 3) % 3);
    spec.horizon = 1 + static_cast<int>(seed % 4);
    spec.num_contexts = 1 + static_cast<int>((seed / 2) % 3);
    spec.seed = seed;
    const Rmmdp m = random_model(spec);
    CHECK(optimal_plan(m).value == doctest::Approx(brute_force_optimal(m)).epsilon(1e-10));
  }
}

TEST_CASE("single-context models reduce to value iteration") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeneratorSpec spec;
    spec.num_states = 3;
    spec.num_actions = 2;
    spec.horizon = 4;
    spec.num_contexts = 1;
    spec.num_rewards = 3;
    spec.seed = seed;
    const Rmmdp m = random_model(spec);
    CHECK(optimal_plan(m).value == doctest::Approx(value_iteration(m)).epsilon(1e-12));
    CHECK(brute_force_optimal(m) == doctest::Approx(value_iteration(m)).epsilon(1e-12));
  }
}

TEST_CASE("the optimal policy attains its own value") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeneratorSpec spec;
    spec.horizon = 3;
    spec.num_contexts = 3;
    spec.seed = seed + 100;
    const Rmmdp m = random_model(spec);
    const auto plan = optimal_plan(m);
    const auto pv = policy_value(m, *plan.policy);
    CHECK(pv.exact);
    CHECK(pv.value == doctest::Approx(plan.value).epsilon(1e-10));
  }
}

TEST_CASE("optimal value is non-decreasing in the horizon") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorSpec spec;
    spec.seed = seed;
    double prev = 0.0;
    for (int H = 1; H <= 4; ++H) {
      spec.horizon = H;
      const double v = optimal_plan(random_model(spec)).value;
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("policy value of a deterministic path") {
  Rmmdp m = make_empty_model(2, 1, 3, RewardSupport::binary(), 1);
  m.init = {1.0, 0.0};
  m.transition = {0.0, 1.0, 1.0, 0.0};
  m.weights = {1.0};
  m.rewards = {0.0, 1.0, 1.0, 0.0};
  FixedActionPolicy p(1, 0);
  CHECK(policy_value(m, p).value == doctest::Approx(2.0));
}

TEST_CASE("Monte-Carlo policy value brackets the exact value") {
  GeneratorSpec spec;
  spec.horizon = 3;
  spec.seed = 6;
  const Rmmdp m = random_model(spec);
  UniformPolicy p(2);
  const double exact = policy_value(m, p).value;
  PolicyValueOptions opts;
  opts.enumeration_budget = 1.0;
  opts.mc_episodes = 40'000;
  opts.mc_seed = 3;
  const auto mc = policy_value(m, p, opts);
  CHECK_FALSE(mc.exact);
  CHECK(mc.ci_halfwidth > 0.0);
  CHECK(std::abs(mc.value - exact) <= 2.0 * mc.ci_halfwidth);
}

TEST_CASE("policy documents round-trip") {
  const Rmmdp m = example_e1(3);
  const auto plan = optimal_plan(m);
  const auto doc = plan.policy->to_json();
  const auto loaded = BeliefPolicy::from_json(nlohmann::json::parse(dump_json(doc)));
  CHECK(dump_json(loaded->to_json()) == dump_json(doc));
  CHECK(loaded->memo_size() == plan.policy->memo_size());
  CHECK(policy_value(m, *loaded).value == doctest::Approx(plan.value).epsilon(1e-12));
}

TEST_CASE("planner and oracle enforce their budgets") {
  GeneratorSpec spec;
  spec.horizon = 4;
  spec.num_contexts = 3;
  const Rmmdp m = random_model(spec);
  CHECK_THROWS_AS(optimal_plan(m, 5), ResourceError);
  CHECK_THROWS_AS(brute_force_optimal(m, 100.0), ResourceError);
}
