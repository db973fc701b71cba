#include <benchmark/benchmark.h>

#include "rmm/enumerate.hpp"
#include "rmm/explore.hpp"
#include "rmm/fit.hpp"
#include "rmm/generators.hpp"
#include "rmm/policy.hpp"

using namespace rmm;

namespace {

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

void set_label(benchmark::State& state) { state.SetLabel(state.range(0) == 0 ? "serial" : "openmp"); }

// (S A Z)^H = 12^5 trajectories.
void BM_Enumeration(benchmark::State& state) {
  GeneratorSpec g;
  g.num_states = 3;
  g.num_actions = 2;
  g.horizon = 5;
  g.num_contexts = 3;
  g.seed = 1;
  const Rmmdp model = random_model(g);
  const std::array<const Rmmdp*, 1> models{&model};
  const HashedStochasticPolicy pi(2, 3);
  const TrajectoryVisitor visit = [](std::span<const Step> steps, std::span<const double> p,
                                     std::span<double> acc) {
    double ret = 0.0;
    for (const Step& s : steps) ret += s.reward;
    acc[0] += p[0] * ret;
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(accumulate_trajectories(models, pi, 1, visit, exec_of(state), 1e7));
  }
  set_label(state);
}

void BM_FitRestarts(benchmark::State& state) {
  GeneratorSpec g;
  g.seed = 4;
  const Rmmdp model = random_model(g);
  const MomentTable table = exact_moment_table(model, all_canonical_keys(2, 2, 3), 10'000);
  FitOptions opts;
  opts.restarts = 32;
  opts.max_iters = 300;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(fit_moment_matching(table, 1.0, model, opts));
  set_label(state);
}

void BM_BackwardInduction(benchmark::State& state) {
  GeneratorSpec g;
  g.num_states = 4;
  g.num_actions = 3;
  g.horizon = 8;
  g.seed = 2;
  const Rmmdp model = random_model(g);
  const AugmentedSpace space(4, 3, 3);
  TransitionEstimate est(4, 3);
  for (std::uint64_t k = 0; k < 200; ++k) {
    est.add_episode(sample_episode(model, UniformPolicy(3), k).trajectory);
  }
  std::vector<std::uint64_t> counts(space.keys().size());
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = i % 50;
  EnvironmentShape shape{4, 3, 8, RewardSupport::binary()};
  ExplorationConfig cfg;
  cfg.degree = 3;
  cfg.max_episodes = 100'000;
  const ConfidenceConstants constants = confidence_constants(shape, cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_optimistic(space, 8, counts, est, constants, 200, exec_of(state)));
  }
  set_label(state);
}

}  // namespace

BENCHMARK(BM_Enumeration)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitRestarts)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackwardInduction)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
