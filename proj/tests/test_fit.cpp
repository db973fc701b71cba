#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "rmm/fit.hpp"
#include "rmm/generators.hpp"

using namespace rmm;

namespace {

MomentTable exact_table(const Rmmdp& m, int degree, std::uint64_t count) {
  const auto keys = all_canonical_keys(m.num_states, m.num_actions, degree);
  return exact_moment_table(m, keys, count);
}

}  // namespace

TEST_CASE("third-moment prediction") {
  CHECK(third_moment_predict(0.5, 0.5, 0.5, 0.34, 0.34, 0.34) == doctest::Approx(0.26).epsilon(1e-15));
  CHECK(third_moment_predict(0.3, 0.6, 0.2, 0.18, 0.06, 0.12) == doctest::Approx(0.3 * 0.6 * 0.2).epsilon(1e-15));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeneratorSpec spec;
    spec.num_states = 2;
    spec.num_actions = 2;
    spec.num_rewards = 3;
    spec.balanced_weights = true;
    spec.seed = seed;
    const Rmmdp m = random_model(spec);
    const StateAction x1{0, 0}, x2{1, 1}, x3{0, 1};
    const int z1 = 2, z2 = 0, z3 = 1;
    auto mv = [&](std::vector<StateAction> x, std::vector<int> z) { return moment_value(m, x, z); };
    const double pred = third_moment_predict(mv({x1}, {z1}), mv({x2}, {z2}), mv({x3}, {z3}),
                                             mv({x1, x2}, {z1, z2}), mv({x1, x3}, {z1, z3}),
                                             mv({x2, x3}, {z2, z3}));
    CHECK(pred == doctest::Approx(mv({x1, x2, x3}, {z1, z2, z3})).epsilon(1e-12));
  }
}

TEST_CASE("simplex projection and grid rounding") {
  std::vector<double> v{0.5, 0.9, -0.2};
  project_simplex(v);
  CHECK(v[0] + v[1] + v[2] == doctest::Approx(1.0));
  CHECK(v[0] == doctest::Approx(0.3));
  CHECK(v[1] == doctest::Approx(0.7));
  CHECK(v[2] == 0.0);
  std::vector<double> inside{0.2, 0.3, 0.5};
  project_simplex(inside);
  CHECK(inside[1] == doctest::Approx(0.3));

  const std::vector<double> p{0.26, 0.26, 0.48};
  const auto r = round_to_grid(p, 10);
  CHECK(r[0] + r[1] + r[2] == doctest::Approx(1.0));
  CHECK(r[2] == doctest::Approx(0.5));
  CHECK(r == round_to_grid(r, 10));
}

TEST_CASE("balanced-two fit recovers the two-coin mixture from exact moments") {
  const Rmmdp e1 = example_e1(2);
  const MomentTable table = exact_table(e1, 2, std::uint64_t{1} << 60);
  FitOptions opts;
  opts.mode = FitMode::balanced_two;
  opts.restarts = 4;
  opts.max_iters = 50;
  const auto res = fit_moment_matching(table, 1.0, e1, opts);
  const Rmmdp& f = res.model;
  CHECK(f.weights == std::vector<double>{0.5, 0.5});
  const double lo = std::min(f.mu(0, 0, 0, 1), f.mu(1, 0, 0, 1));
  const double hi = std::max(f.mu(0, 0, 0, 1), f.mu(1, 0, 0, 1));
  CHECK(lo == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(hi == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(f.mu(0, 0, 1, 1) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(f.mu(1, 0, 1, 1) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("the generating model is a zero-objective witness") {
  GeneratorSpec spec;
  spec.num_states = 2;
  spec.num_actions = 2;
  spec.seed = 9;
  const Rmmdp m = random_model(spec);
  const MomentTable table = exact_table(m, 3, 1000);
  FitOptions opts;
  const auto constraints = build_constraints(table, 5.0, opts);
  CHECK(fit_objective(m, constraints) == 0.0);
  const auto rep = violation_report(m, table, 5.0);
  CHECK(rep.violated == 0);
  CHECK(rep.max_slack == 0.0);

  opts.restarts = 8;
  opts.seed = 1;
  const auto res = fit_moment_matching(table, 5.0, m, opts);
  CHECK(res.feasible);
  CHECK(violation_report(res.model, table, 5.0).violated == 0);
}

TEST_CASE("single-context fit matches singleton moments") {
  GeneratorSpec spec;
  spec.num_contexts = 1;
  spec.num_rewards = 3;
  spec.seed = 4;
  const Rmmdp m = random_model(spec);
  const MomentTable table = exact_table(m, 2, 10'000);
  FitOptions opts;
  opts.num_contexts = 1;
  opts.restarts = 4;
  const auto res = fit_moment_matching(table, 1.0, m, opts);
  CHECK(res.feasible);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int z = 0; z < 3; ++z)
        CHECK(std::abs(res.model.mu(0, s, a, z) - m.mu(0, s, a, z)) <= 0.01 + 1e-12);
}

TEST_CASE("fit reports are sound, deterministic and relabeling invariant") {
  GeneratorSpec spec;
  spec.seed = 21;
  const Rmmdp m = random_model(spec);
  const MomentTable table = exact_table(m, 2, 2000);
  FitOptions opts;
  opts.restarts = 16;
  opts.seed = 5;
  const auto a = fit_moment_matching(table, 2.0, m, opts);
  opts.exec = Execution::serial;
  const auto b = fit_moment_matching(table, 2.0, m, opts);
  CHECK(a.model == b.model);
  CHECK(a.objective == b.objective);
  CHECK(a.best_restart == b.best_restart);
  CHECK(a.feasible == (violation_report(a.model, table, 2.0).violated == 0));
  if (a.feasible) {
    Rmmdp swapped = a.model;
    std::swap(swapped.weights[0], swapped.weights[1]);
    const std::size_t blk = swapped.rewards.size() / 2;
    std::swap_ranges(swapped.rewards.begin(), swapped.rewards.begin() + static_cast<std::ptrdiff_t>(blk),
                     swapped.rewards.begin() + static_cast<std::ptrdiff_t>(blk));
    CHECK(violation_report(swapped, table, 2.0).violated == 0);
  }
}

TEST_CASE("tight radii are reported infeasible with a positive violation") {
  const Rmmdp e1 = example_e1(2);
  MomentTable table = exact_table(e1, 2, 1'000'000);
  // Inconsistent target: singleton says 0.5 but the square says 0.5 too.
  auto entry = *table.find(MomentKey{{{0, 0}, {0, 0}}});
  entry.probs = {0.5, 0.0, 0.0, 0.5};
  table.set(MomentKey{{{0, 0}, {0, 0}}}, entry);
  auto single = *table.find(MomentKey{{{0, 0}}});
  single.probs = {0.9, 0.1};
  table.set(MomentKey{{{0, 0}}}, single);
  FitOptions opts;
  opts.restarts = 4;
  opts.max_iters = 300;
  const auto res = fit_moment_matching(table, 1e-6, e1, opts);
  CHECK_FALSE(res.feasible);
  CHECK(res.max_normalized_violation > 0.0);
  CHECK(res.objective > 0.0);
}

TEST_CASE("violation report edge cases") {
  const Rmmdp e1 = example_e1(2);
  CHECK(violation_report(e1, MomentTable(2), 1.0).entries.empty());
  const MomentTable table = exact_table(e1, 2, 100);
  const Rmmdp uni = uniform_rewards_like(e1);
  const auto raw = violation_report(uni, table, 1.0, 0.0);
  for (const auto& s : raw.entries) CHECK(s.slack == doctest::Approx(std::abs(s.predicted - s.empirical)));
  CHECK(raw.max_slack == doctest::Approx(0.09));
}

TEST_CASE("integral-grid fit lands on the grid") {
  const Rmmdp e1 = example_e1(2);
  const MomentTable table = exact_table(e1, 2, 10'000);
  FitOptions opts;
  opts.mode = FitMode::integral_grid;
  opts.grid = 10;
  opts.restarts = 16;
  const auto res = fit_moment_matching(table, 1.0, e1, opts);
  CHECK(res.feasible);
  for (double p : res.model.rewards) CHECK(std::abs(p * 10 - std::round(p * 10)) < 1e-9);
  for (double w : res.model.weights) CHECK(std::abs(w * 10 - std::round(w * 10)) < 1e-9);
}

TEST_CASE("grid search oracle agrees with the solver on a tiny problem") {
  const Rmmdp e1 = example_e1(2);
  const MomentTable table = exact_table(e1, 2, 400);
  const auto oracle = grid_search_fit(table, 1.0, e1, 2, 0.1);
  CHECK(oracle.feasible);
  FitOptions opts;
  opts.restarts = 16;
  const auto res = fit_moment_matching(table, 1.0, e1, opts);
  CHECK(res.feasible == oracle.feasible);
  CHECK_THROWS_AS(grid_search_fit(table, 1.0, e1, 2, 0.05, 10.0), ResourceError);
}

TEST_CASE("fit input validation") {
  const Rmmdp e1 = example_e1(2);
  FitOptions opts;
  CHECK_THROWS_AS(fit_moment_matching(MomentTable(2), 1.0, e1, opts), std::invalid_argument);
  MomentTable only_pairs(2);
  only_pairs.set(MomentKey{{{0, 0}, {0, 1}}}, MomentEntry{10, {0.25, 0.25, 0.25, 0.25}});
  CHECK_THROWS_AS(fit_moment_matching(only_pairs, 1.0, e1, opts), std::invalid_argument);
  opts.mode = FitMode::balanced_two;
  opts.num_contexts = 3;
  CHECK_THROWS_AS(fit_moment_matching(exact_table(e1, 2, 10), 1.0, e1, opts), std::invalid_argument);
  CHECK(fit_mode_from_string("balanced-two") == FitMode::balanced_two);
  CHECK_THROWS(fit_mode_from_string("magic"));
}
