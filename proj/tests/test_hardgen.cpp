#include <doctest.h>

#include <cmath>

#include "rmm/analyze.hpp"
#include "rmm/generators.hpp"
#include "rmm/hardgen.hpp"
#include "rmm/plan.hpp"

using namespace rmm;

namespace {

Mixture two_coin_mixture() {
  Mixture mix;
  mix.num_contexts = 2;
  mix.degree = 2;
  mix.weights = {0.5, 0.5};
  mix.mu = {0.2, 0.2, 0.8, 0.8};
  mix.epsilon = multilinear_moment(mix, 3u) - 0.25;
  mix.feasible = true;
  return mix;
}

// Every action sequence of length d over A actions, first coordinate most significant.
std::vector<std::vector<StateAction>> chain_sequences(int d, int A) {
  std::vector<std::vector<StateAction>> out;
  const auto n = static_cast<std::size_t>(std::pow(A, d));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<StateAction> x(static_cast<std::size_t>(d));
    std::size_t v = i;
    for (int t = d - 1; t >= 0; --t) {
      x[static_cast<std::size_t>(t)] = {t, static_cast<int>(v % static_cast<std::size_t>(A))};
      v /= static_cast<std::size_t>(A);
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("two-coin hard instance: parity, value and flat KL") {
  const Mixture mix = two_coin_mixture();
  CHECK(mix.epsilon == doctest::Approx(0.09).epsilon(1e-14));
  CHECK(multilinear_moment(mix, 1u) == 0.5);
  CHECK(multilinear_moment(mix, 2u) == 0.5);
  const HardInstance inst = assemble_instance(mix, 2, {1, 0});
  CHECK(validate_model(inst.model).empty());
  CHECK(inst.model.num_states == 3);

  const auto parity = parity_check(inst);
  REQUIRE(parity.entries.size() == 2);
  CHECK(parity.entries[0].prefix == std::vector<int>{0});
  CHECK(parity.entries[0].conditional == doctest::Approx(0.32).epsilon(1e-14));
  CHECK(parity.entries[1].conditional == doctest::Approx(0.68).epsilon(1e-14));
  CHECK(parity.max_residual < 1e-14);

  const auto v = instance_value_check(inst);
  CHECK(v.optimal == doctest::Approx(1.09).epsilon(1e-12));
  CHECK(v.bound == doctest::Approx(1.09).epsilon(1e-12));
  CHECK(v.uniform == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.pass);

  const HardInstance base = assemble_instance(mix, 2, {});
  for (const auto& x : chain_sequences(2, 2)) {
    const double kl = sequence_kl(inst.model, base.model, x);
    if (x[0].action == 1 && x[1].action == 0) {
      CHECK(kl > 0.0);
    } else {
      CHECK(std::abs(kl) < 1e-15);
    }
  }
  CHECK_FALSE(optimal_play_probability(inst).has_value());
}

TEST_CASE("the uniform base system and relabelings") {
  const Mixture mix = two_coin_mixture();
  const HardInstance base = assemble_instance(mix, 3, {});
  for (double p : base.model.rewards) CHECK(p == 0.5);
  CHECK(parity_check(base).max_residual == 0.0);
  CHECK(instance_value_check(base).optimal == doctest::Approx(1.0).epsilon(1e-12));

  const double v1 = optimal_plan(assemble_instance(mix, 3, {0, 2}).model).value;
  const double v2 = optimal_plan(assemble_instance(mix, 3, {2, 1}).model).value;
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-14));
  const HardInstance inst = assemble_instance(mix, 3, {0, 2});
  CHECK(policy_value(inst.model, FixedActionPolicy(3, 1)).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(assemble_instance(mix, 1, {}), std::invalid_argument);
  CHECK_THROWS_AS(assemble_instance(mix, 2, {0}), std::invalid_argument);
}

TEST_CASE("solver reproduces small mixtures") {
  MixtureOptions opts;
  opts.epsilon = 0.09;
  const Mixture m22 = build_mixture(2, 2, opts);
  REQUIRE(m22.feasible);
  CHECK(m22.max_residual <= 1e-12);
  CHECK(m22.epsilon == doctest::Approx(0.09).epsilon(1e-10));
  const auto parity = parity_check(assemble_instance(m22, 2, {0, 0}));
  CHECK(parity.max_residual < 1e-9);

  const Mixture m11 = build_mixture(1, 1);
  REQUIRE(m11.feasible);
  CHECK(m11.epsilon == doctest::Approx(0.5).epsilon(1e-6));

  const Mixture sym = build_mixture(2, 2, MixtureOptions{.symmetric = true});
  REQUIRE(sym.feasible);
  CHECK(sym.weights == std::vector<double>{0.5, 0.5});
  CHECK(sym.epsilon == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("two contexts cannot hide a third-degree deviation") {
  MixtureOptions opts;
  opts.restarts = 16;
  const Mixture general = build_mixture(2, 3, opts);
  CHECK_FALSE(general.feasible);
  CHECK(general.residuals.size() == 6);
  opts.symmetric = true;
  CHECK_FALSE(build_mixture(2, 3, opts).feasible);
  opts.symmetric = false;
  opts.epsilon = 0.05;
  const Mixture targeted = build_mixture(2, 3, opts);
  CHECK_FALSE(targeted.feasible);
  CHECK(targeted.max_residual > opts.tol);
  CHECK_THROWS_AS(build_mixture(2, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_mixture(3, 2, MixtureOptions{.symmetric = true}), std::invalid_argument);
}

TEST_CASE("four contexts reach degree three") {
  MixtureOptions opts;
  opts.restarts = 16;
  const Mixture mix = build_mixture(4, 3, opts);
  REQUIRE(mix.feasible);
  CHECK(mix.max_residual <= 1e-10);
  CHECK(mix.epsilon == doctest::Approx(0.125).epsilon(1e-6));
  const HardInstance inst = assemble_instance(mix, 2, {1, 1, 0});
  CHECK(parity_check(inst).max_residual <= 1e-10 * 8);
  const auto v = instance_value_check(inst);
  CHECK(v.pass);
  CHECK(v.uniform == doctest::Approx(1.5).epsilon(1e-9));
  const HardInstance base = assemble_instance(mix, 2, {});
  for (const auto& x : chain_sequences(3, 2)) {
    if (x[0].action == 1 && x[1].action == 1 && x[2].action == 0) continue;
    CHECK(sequence_kl(inst.model, base.model, x) < 1e-12);
  }
}

TEST_CASE("sign normalization and regime flag") {
  Mixture mix = two_coin_mixture();
  mix.mu = {0.2, 0.8, 0.8, 0.2};
  mix.epsilon = multilinear_moment(mix, 3u) - 0.25;
  CHECK(mix.epsilon == doctest::Approx(-0.09));
  normalize_sign(mix);
  CHECK(mix.epsilon == doctest::Approx(0.09));
  CHECK(multilinear_moment(mix, 1u) == doctest::Approx(0.5));
  CHECK(epsilon_in_lower_bound_regime(2, 1.0 / 256));
  CHECK_FALSE(epsilon_in_lower_bound_regime(2, 0.09));
}

TEST_CASE("optimal play concentrates on the correct sequence for deep instances") {
  // Even-parity corners of {0,1}^5 with total weight alpha plus one fair context:
  // every sub-top moment is (1/2)^q and the top deviation is alpha / 32.
  const int d = 5;
  const double alpha = 1.6e-9;
  Mixture mix;
  mix.degree = d;
  for (unsigned v = 0; v < 32; ++v) {
    if ((d - std::popcount(v)) % 2 != 0) continue;
    mix.weights.push_back(alpha / 16);
    for (int t = 0; t < d; ++t) mix.mu.push_back((v >> t) & 1u ? 1.0 : 0.0);
  }
  mix.weights.push_back(1.0 - alpha);
  for (int t = 0; t < d; ++t) mix.mu.push_back(0.5);
  mix.num_contexts = static_cast<int>(mix.weights.size());
  mix.epsilon = multilinear_moment(mix, 31u) - std::ldexp(1.0, -d);
  CHECK(mix.epsilon == doctest::Approx(alpha / 32).epsilon(1e-6));
  for (unsigned s = 1; s < 31; ++s) {
    CHECK(multilinear_moment(mix, s) == doctest::Approx(std::ldexp(1.0, -std::popcount(s))).epsilon(1e-15));
  }
  REQUIRE(epsilon_in_lower_bound_regime(d, mix.epsilon));
  const HardInstance inst = assemble_instance(mix, 2, {0, 1, 0, 1, 1});
  CHECK(parity_check(inst).max_residual < 1e-12);
  const auto p = optimal_play_probability(inst);
  REQUIRE(p.has_value());
  CHECK(*p >= 0.25);
  CHECK(instance_value_check(inst).pass);
}
