#include <doctest.h>

#include <array>
#include <cmath>

#include "rmm/analyze.hpp"
#include "rmm/generators.hpp"

using namespace rmm;

namespace {

bool contains_in_order(std::span<const StateAction> x, std::span<const StateAction> pattern) {
  std::size_t j = 0;
  for (const auto& p : x) {
    if (j < pattern.size() && p == pattern[j]) ++j;
  }
  return j == pattern.size();
}

double expected_return(const Rmmdp& m, const Policy& pi) {
  const std::array<const Rmmdp*, 1> models{&m};
  return accumulate_trajectories(
      models, pi, 1,
      [&](std::span<const Step> steps, std::span<const double> p, std::span<double> acc) {
        double r = 0.0;
        for (const Step& s : steps) r += m.support.value(s.reward);
        acc[0] += p[0] * r;
      },
      Execution::serial)[0];
}

Rmmdp random_pair_partner(const Rmmdp& m, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.num_states = m.num_states;
  spec.num_actions = m.num_actions;
  spec.horizon = m.horizon;
  spec.num_rewards = m.num_rewards();
  spec.num_contexts = m.num_contexts();
  spec.seed = seed;
  Rmmdp other = random_model(spec);
  other.transition = m.transition;
  other.init = m.init;
  return other;
}

const SequenceEvent kAll = [](std::span<const StateAction>) { return true; };

}  // namespace

TEST_CASE("two-coin example against the uniform model") {
  const Rmmdp e1 = example_e1(2);
  const Rmmdp uni = uniform_rewards_like(e1);
  CHECK(moment_mismatch(e1, uni, {}, 2) == doctest::Approx(0.09).epsilon(1e-12));
  const FixedActionPolicy a0(2, 0);
  CHECK(tv_on_event(e1, uni, a0, kAll) == doctest::Approx(0.36).epsilon(1e-12));

  const std::array<const Policy*, 1> pols{&a0};
  const std::array<std::string, 1> names{"a0"};
  const std::array<SequenceEvent, 1> events{kAll};
  const auto rep = verify_tv_bound(e1, uni, 2, pols, names, events);
  CHECK(rep.delta[0] == doctest::Approx(0.09));
  CHECK(rep.sup_prob[0] == 1.0);
  CHECK(rep.checks[0].rhs == doctest::Approx(23.04).epsilon(1e-12));
  CHECK(rep.checks[0].pass);
  CHECK(rep.violations == 0);

  const StationaryStrategy always(a0);
  const auto kl = kl_identity(e1, uni, always, 1);
  const double oracle = 0.68 * std::log(1.36) + 0.32 * std::log(0.64);
  CHECK(kl.lhs == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(kl.rhs == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(0.066278).epsilon(1e-5));
  CHECK_FALSE(kl.infinite);
}

TEST_CASE("level thresholds") {
  const LevelStructure ls({}, 1024, 2, 2, 20.0);
  CHECK(ls.levels() == 1);
  CHECK(ls.thresholds() == std::vector<double>{256.0, 64.0});
  const LevelStructure degenerate({}, 10, 2, 2, 20.0);
  CHECK(degenerate.levels() == 0);

  std::map<MomentKey, std::uint64_t> counts;
  for (const auto& k : all_canonical_keys(1, 2, 2)) counts[k] = std::numeric_limits<std::uint64_t>::max();
  const LevelStructure full(counts, 1024, 2, 2, 20.0);
  const std::vector<StateAction> x{{0, 0}, {0, 1}, {0, 0}};
  CHECK(full.level_of(x) == 0);
  counts[MomentKey{{{0, 0}, {0, 1}}}] = 100;
  const LevelStructure mid(counts, 1024, 2, 2, 20.0);
  CHECK(mid.level_of(x) == 1);
  CHECK(mid.level_of(std::vector<StateAction>{{0, 0}, {0, 0}}) == 0);
  counts[MomentKey{{{0, 1}}}] = 3;
  const LevelStructure low(counts, 1024, 2, 2, 20.0);
  CHECK(low.level_of(x) == 2);
  CHECK(low.key_level(MomentKey{{{0, 1}}}) == 2);
}

TEST_CASE("level events partition the trajectory space") {
  GeneratorSpec spec;
  spec.seed = 3;
  const Rmmdp m = random_model(spec);
  std::map<MomentKey, std::uint64_t> counts;
  std::uint64_t c = 7;
  for (const auto& k : all_canonical_keys(2, 2, 2)) {
    counts[k] = c;
    c = (c * 37) % 400;
  }
  const LevelStructure ls(counts, 4096, 4, 2, 5.0);
  REQUIRE(ls.levels() >= 1);
  const HashedStochasticPolicy pi(2, 11);
  const auto probs = level_probabilities(m, pi, ls);
  double total = 0.0;
  for (double p : probs) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> sup;
  for (int l = 0; l <= ls.levels() + 1; ++l) {
    sup.push_back(sup_event_probability(m, ls.disjoint_event(l)));
    CHECK(probs[static_cast<std::size_t>(l)] <= sup.back() + 1e-12);
  }
  const std::string csv = level_histogram_csv(ls, probs, sup);
  CHECK(csv.rfind("level,threshold,probability,sup_probability\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == ls.levels() + 3);
}

TEST_CASE("sup-event probability is a Bellman fixed point") {
  GeneratorSpec spec;
  spec.seed = 8;
  spec.horizon = 4;
  const Rmmdp m = random_model(spec);
  const SequenceEvent ev = [](std::span<const StateAction> x) {
    return x[0].action != x[2].action || x[3].state == 1;
  };
  for (int s = 0; s < 2; ++s) {
    const double v = sup_event_probability_from(m, ev, {}, s);
    double best = 0.0;
    for (int a = 0; a < 2; ++a) {
      const std::vector<StateAction> pre{{s, a}};
      double q = 0.0;
      for (int s2 = 0; s2 < 2; ++s2) q += m.T(s, a, s2) * sup_event_probability_from(m, ev, pre, s2);
      best = std::max(best, q);
    }
    CHECK(v == doctest::Approx(best).epsilon(1e-14));
  }
  // No reactive policy beats the optimum, and some reaches it.
  const double sup = sup_event_probability(m, ev);
  double best_reactive = 0.0;
  const std::array<const Rmmdp*, 1> models{&m};
  for (const auto& pi : all_reactive_policies(2, 2, 4, 1 << 10)) {
    const double p = accumulate_trajectories(
        models, pi, 1,
        [&](std::span<const Step> steps, std::span<const double> pr, std::span<double> acc) {
          std::vector<StateAction> x;
          for (const Step& st : steps) x.push_back({st.state, st.action});
          if (ev(x)) acc[0] += pr[0];
        },
        Execution::serial)[0];
    CHECK(p <= sup + 1e-12);
    best_reactive = std::max(best_reactive, p);
  }
  CHECK(best_reactive == doctest::Approx(sup).epsilon(1e-12));
  CHECK_THROWS_AS(sup_event_probability(m, ev, 10.0), ResourceError);
}

TEST_CASE("subsequence reach agrees with the sup-event oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorSpec spec;
    spec.seed = seed;
    spec.horizon = 4;
    const Rmmdp m = random_model(spec);
    const std::vector<std::vector<StateAction>> patterns{
        {{0, 0}}, {{1, 1}, {0, 0}}, {{0, 1}, {0, 1}, {1, 0}}, {{1, 0}, {1, 0}, {1, 0}, {1, 0}}};
    for (const auto& pat : patterns) {
      const SequenceEvent ev = [&](std::span<const StateAction> x) { return contains_in_order(x, pat); };
      CHECK(subsequence_reach(m, pat) == doctest::Approx(sup_event_probability(m, ev)).epsilon(1e-12));
    }
    const std::vector<StateAction> too_long(5, StateAction{0, 0});
    CHECK(subsequence_reach(m, too_long) == 0.0);
  }
  // Loop-free chain: state 0 is never revisited.
  Rmmdp chain = make_empty_model(3, 1, 3, RewardSupport::binary(), 1);
  chain.transition = {0, 1, 0, 0, 0, 1, 0, 0, 1};
  chain.init = {1, 0, 0};
  chain.weights = {1.0};
  for (std::size_t i = 0; i < chain.rewards.size(); i += 2) chain.rewards[i] = chain.rewards[i + 1] = 0.5;
  CHECK(subsequence_reach(chain, std::vector<StateAction>{{0, 0}, {0, 0}}) == 0.0);
  CHECK(subsequence_reach(chain, std::vector<StateAction>{{0, 0}, {2, 0}}) == 1.0);
}

TEST_CASE("mismatch and TV are symmetric and vanish on relabeled models") {
  GeneratorSpec spec;
  spec.seed = 12;
  const Rmmdp m1 = random_model(spec);
  const Rmmdp m2 = random_pair_partner(m1, 99);
  const UniformPolicy uni(2);
  CHECK(moment_mismatch(m1, m2, {}, 3) == moment_mismatch(m2, m1, {}, 3));
  CHECK(tv_on_event(m1, m2, uni, kAll) == doctest::Approx(tv_on_event(m2, m1, uni, kAll)).epsilon(1e-14));

  Rmmdp swapped = m1;
  std::swap(swapped.weights[0], swapped.weights[1]);
  const std::size_t blk = swapped.rewards.size() / 2;
  std::swap_ranges(swapped.rewards.begin(), swapped.rewards.begin() + static_cast<std::ptrdiff_t>(blk),
                   swapped.rewards.begin() + static_cast<std::ptrdiff_t>(blk));
  CHECK(moment_mismatch(m1, swapped, {}, 3) < 1e-15);
  CHECK(tv_on_event(m1, swapped, uni, kAll) < 1e-14);
  CHECK(sequence_kl(m1, m1, std::vector<StateAction>{{0, 0}, {1, 1}, {0, 1}}) == 0.0);

  Rmmdp other_dyn = m2;
  other_dyn.init = {1.0, 0.0};
  CHECK_THROWS_AS(tv_on_event(m1, other_dyn, uni, kAll), std::invalid_argument);
  CHECK_THROWS_AS(moment_mismatch(m1, m2, std::vector<MomentKey>{MomentKey{{{0, 0}, {0, 0}, {0, 0}}}}, 2),
                  std::invalid_argument);
}

TEST_CASE("value gap is bounded by H times TV") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GeneratorSpec spec;
    spec.seed = seed;
    const Rmmdp m1 = random_model(spec);
    const Rmmdp m2 = random_pair_partner(m1, seed + 1000);
    const HashedHistoryPolicy pi(2, seed);
    const double gap = std::abs(expected_return(m1, pi) - expected_return(m2, pi));
    CHECK(gap <= m1.horizon * tv_on_event(m1, m2, pi, kAll) + 1e-12);
  }
}

TEST_CASE("TV bound holds on random pairs for every reactive policy") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GeneratorSpec spec;
    spec.seed = seed + 40;
    const Rmmdp m1 = random_model(spec);
    const Rmmdp m2 = random_pair_partner(m1, seed + 500);
    const auto reactive = all_reactive_policies(2, 2, 3, 10'000);
    std::vector<const Policy*> pols;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < reactive.size(); ++i) {
      pols.push_back(&reactive[i]);
      names.push_back("reactive-" + std::to_string(i));
    }
    const SequenceEvent first_a0 = [](std::span<const StateAction> x) { return x[0].action == 0; };
    const std::array<SequenceEvent, 2> events{kAll, first_a0};
    const auto rep = verify_tv_bound(m1, m2, default_degree(2, 3), pols, names, events);
    CHECK(rep.violations == 0);
    CHECK(rep.checks.size() == reactive.size() * 2);
  }
}

TEST_CASE("KL chain-rule identity across strategies") {
  GeneratorSpec spec;
  spec.num_states = 1;
  spec.horizon = 2;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    spec.seed = seed;
    const Rmmdp m1 = random_model(spec);
    const Rmmdp m2 = random_pair_partner(m1, seed + 77);
    const UniformPolicy uni(2);
    const StationaryStrategy stationary(uni);
    const GreedyStrategy greedy(2, m1.support);
    const HashedStrategy hashed(2, seed);
    for (const Strategy* st : std::initializer_list<const Strategy*>{&stationary, &greedy, &hashed}) {
      for (int K = 1; K <= 3; ++K) {
        const auto kl = kl_identity(m1, m2, *st, K);
        CHECK_FALSE(kl.infinite);
        CHECK(kl.lhs == doctest::Approx(kl.rhs).epsilon(1e-10));
        CHECK(kl.rhs >= 0.0);
      }
    }
  }
  // A policy reacting to rewards inside the episode tilts P(r | x) away from
  // the model's reward law, so the identity need not hold.
  spec.seed = 1;
  const Rmmdp r1 = random_model(spec);
  const Rmmdp r2 = random_pair_partner(r1, 78);
  const HashedStochasticPolicy reactive(2, 4);
  const StationaryStrategy reward_reactive(reactive);
  const auto broken = kl_identity(r1, r2, reward_reactive, 1);
  CHECK(std::abs(broken.lhs - broken.rhs) > 1e-6);

  const Rmmdp e1 = example_e1(2);
  Rmmdp degenerate = e1;
  degenerate.rewards = {1.0, 0.0, 0.5, 0.5, 1.0, 0.0, 0.5, 0.5};
  const FixedActionPolicy a0(2, 0);
  const StationaryStrategy always(a0);
  CHECK(kl_identity(e1, degenerate, always, 2).infinite);
  CHECK_THROWS_AS(kl_identity(e1, degenerate, always, 20), ResourceError);
}
