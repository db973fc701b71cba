#include <doctest.h>

#include <filesystem>

#include "rmm/generators.hpp"
#include "rmm/model_io.hpp"
#include "rmm/pipeline.hpp"

using namespace rmm;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rmm_pipeline_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

RunConfig e1_config(std::uint64_t max_episodes) {
  RunConfig cfg;
  const auto dir = scratch_dir("e1_model");
  std::filesystem::create_directories(dir);
  cfg.model_path = dir / "e1.json";
  save_model(example_e1(2), *cfg.model_path);
  cfg.max_episodes = max_episodes;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("run config JSON round-trips and rejects unknown keys") {
  RunConfig cfg;
  GeneratorSpec g;
  g.num_states = 3;
  g.seed = 11;
  cfg.generator = g;
  cfg.degree = 2;
  cfg.epsilon = 0.05;
  cfg.fit.mode = FitMode::balanced_two;
  cfg.seed = 0xFFFF'FFFF'FFFF'FFFFull;
  const auto doc = run_config_to_json(cfg);
  const RunConfig back = run_config_from_json(doc);
  CHECK(run_config_to_json(back) == doc);
  CHECK(back.seed == 0xFFFF'FFFF'FFFF'FFFFull);
  CHECK(back.generator->num_states == 3);

  auto bad = doc;
  bad["epsilonn"] = 0.1;
  CHECK_THROWS_AS(run_config_from_json(bad), std::invalid_argument);
  bad = doc;
  bad["fit"]["restart"] = 3;
  CHECK_THROWS_AS(run_config_from_json(bad), std::invalid_argument);

  HardSpec h;
  h.epsilon = 0.09;
  h.correct = {1, 0};
  CHECK(hard_spec_to_json(hard_spec_from_json(hard_spec_to_json(h))) == hard_spec_to_json(h));
}

TEST_CASE("config validation") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.model_path = "/nonexistent/model.json";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.model_path.reset();
  cfg.generator = GeneratorSpec{};
  CHECK_NOTHROW(cfg.validate());
  cfg.hard = HardSpec{};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.hard.reset();
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("base model carries only estimated dynamics") {
  TransitionEstimate est(2, 1);
  est.add_episode(Trajectory{{{0, 0, 1}, {1, 0, 0}}, 1});
  EnvironmentShape shape{2, 1, 2, RewardSupport::binary()};
  const Rmmdp base = base_model_from_estimate(est, shape, 2, 3);
  CHECK(base.weights == std::vector<double>(3, 1.0 / 3));
  for (double p : base.rewards) CHECK(p == 0.5);
  CHECK(base.init == std::vector<double>{1.0, 0.0});
  CHECK(base.transition == est.transition_matrix());
}

TEST_CASE("em2 on E1 with seed 7") {
  const RunConfig cfg = e1_config(50'000);
  const Rmmdp truth = load_true_model(cfg);
  const Em2Result a = run_em2(cfg, truth);
  REQUIRE(a.suboptimality().has_value());
  CHECK(*a.suboptimality() <= 0.1);
  CHECK(a.policy_value_exact);
  CHECK(*a.optimal_value == doctest::Approx(1.09).epsilon(1e-12));
  CHECK(a.fit.feasible);
  CHECK(a.exit_code == kExitBudget);

  const Em2Result b = run_em2(cfg, truth);
  CHECK(em2_metrics_csv(a, false) == em2_metrics_csv(b, false));
}

TEST_CASE("a single-context truth is learned to within epsilon") {
  RunConfig cfg;
  GeneratorSpec g;
  g.num_contexts = 1;
  g.seed = 5;
  cfg.generator = g;
  cfg.fit_contexts = 1;
  cfg.max_episodes = 20'000;
  cfg.seed = 3;
  const Em2Result res = run_em2(cfg, load_true_model(cfg));
  CHECK(*res.suboptimality() <= cfg.epsilon);
}

TEST_CASE("em2 artifacts round-trip") {
  RunConfig cfg = e1_config(2'000);
  cfg.out = scratch_dir("artifacts");
  const Em2Result res = run_em2(cfg, load_true_model(cfg));
  write_em2_artifacts(cfg, res);
  const auto& dir = cfg.out;
  for (const char* f : {"moments.json", "transitions.json", "explore.json", "fitted_model.json",
                        "policy.json", "metrics.csv", "run.json"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK(MomentTable::from_json(read_json(dir / "moments.json")) == res.exploration.moments);
  CHECK(TransitionEstimate::from_json(read_json(dir / "transitions.json")) == res.exploration.transitions);
  CHECK(load_model(dir / "fitted_model.json") == res.fit.model);
  const auto policy = BeliefPolicy::from_json(read_json(dir / "policy.json"));
  CHECK(dump_json(policy->to_json()) == dump_json(res.policy->to_json()));
  const auto summary = read_json(dir / "explore.json");
  const EnvironmentShape shape = shape_from_summary(summary);
  CHECK(shape.num_actions == 2);
  CHECK(shape.support == RewardSupport::binary());
  CHECK(summary.at("episodes").get<std::uint64_t>() == res.exploration.episodes);
  const auto run = read_json(dir / "run.json");
  CHECK(run_config_from_json(run.at("config")).seed == 7);
  CHECK(run.at("exit_code").get<int>() == res.exit_code);

  const std::string csv = em2_metrics_csv(res, false);
  CHECK(csv.rfind("episode,v_tilde_0,commits_total\n", 0) == 0);
  CHECK(csv.find("\n\nK,suboptimality,fit_objective,fit_feasible,wall_ms\n") != std::string::npos);
}

TEST_CASE("hard specs build the chain instance") {
  HardSpec spec;
  spec.epsilon = 0.09;
  spec.correct = {1, 0};
  const HardInstance inst = make_hard_instance(spec);
  CHECK(inst.epsilon == doctest::Approx(0.09).epsilon(1e-10));
  CHECK(inst.correct == std::vector<int>{1, 0});
  spec.degree = 3;
  CHECK_THROWS_AS(make_hard_instance(spec), std::runtime_error);
}
