#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "rmm/analyze.hpp"
#include "rmm/env.hpp"
#include "rmm/explore.hpp"
#include "rmm/fit.hpp"
#include "rmm/hardgen.hpp"
#include "rmm/model_io.hpp"
#include "rmm/pipeline.hpp"
#include "rmm/plan.hpp"
#include "rmm/policy.hpp"

using namespace rmm;

namespace {

// Thrown for conditions that map to a dedicated exit code.
struct ExitWith {
  int code;
  std::string message;
};

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config document")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (64-bit)");
  cmd->add_option("--out", c.out, "output directory");
}

bool given(CLI::App* cmd, const std::string& name) {
  const CLI::Option* opt = cmd->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

// Config file first, then every flag that was given on the command line.
RunConfig resolve_config(CLI::App* cmd, const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : run_config_from_json(read_json(c.config));
  if (cfg.model_path && cfg.model_path->is_relative()) {
    cfg.model_path = std::filesystem::path(c.config).parent_path() / *cfg.model_path;
  }
  if (given(cmd, "--seed")) cfg.seed = c.seed;
  if (given(cmd, "--out")) cfg.out = c.out;
  return cfg;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

void print_json(const nlohmann::json& doc) { std::cout << dump_json(doc); }

std::unique_ptr<Policy> load_policy(const std::string& spec, int num_actions) {
  if (spec == "uniform") return std::make_unique<UniformPolicy>(num_actions);
  if (spec.rfind("fixed:", 0) == 0) {
    const int a = std::stoi(spec.substr(6));
    if (a < 0 || a >= num_actions) throw std::invalid_argument("policy: action out of range");
    return std::make_unique<FixedActionPolicy>(num_actions, a);
  }
  return BeliefPolicy::from_json(read_json(spec));
}

std::vector<std::vector<StateAction>> read_event_sequences(const std::string& path) {
  std::vector<std::vector<StateAction>> out;
  for (const auto& seq : read_json(path).at("sequences")) {
    std::vector<StateAction> x;
    for (const auto& p : seq) x.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    out.push_back(std::move(x));
  }
  return out;
}

int max_contexts(const Rmmdp& a, const Rmmdp& b) { return std::max(a.num_contexts(), b.num_contexts()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-mixing MDP toolkit"};
  app.require_subcommand(1);

  // em2
  Common em2c;
  std::string em2_model;
  int fit_contexts = 2, degree = 0, restarts = 0, tighten = 0;
  double epsilon = 0, eta = 0;
  std::uint64_t max_episodes = 0, batch = 0, eval_episodes = 0;
  std::string fit_mode;
  bool timing = false;
  auto* em2 = app.add_subcommand("em2", "explore, fit and plan");
  add_common(em2, em2c);
  em2->add_option("--model", em2_model, "true model JSON")->check(CLI::ExistingFile);
  em2->add_option("--fit-contexts", fit_contexts);
  em2->add_option("--degree", degree);
  em2->add_option("--epsilon", epsilon);
  em2->add_option("--eta", eta);
  em2->add_option("--max-episodes", max_episodes);
  em2->add_option("--batch", batch);
  em2->add_option("--fit-mode", fit_mode);
  em2->add_option("--fit-restarts", restarts);
  em2->add_option("--tighten-rounds", tighten);
  em2->add_option("--eval-episodes", eval_episodes);
  em2->add_flag("--timing", timing, "record wall time in metrics.csv");

  auto apply_run_flags = [&](CLI::App* cmd, RunConfig& cfg) {
    if (given(cmd, "--model")) {
      cfg.model_path = em2_model;
      cfg.generator.reset();
      cfg.hard.reset();
    }
    if (given(cmd, "--fit-contexts")) cfg.fit_contexts = fit_contexts;
    if (given(cmd, "--degree")) cfg.degree = degree;
    if (given(cmd, "--epsilon")) cfg.epsilon = epsilon;
    if (given(cmd, "--eta")) cfg.eta = eta;
    if (given(cmd, "--max-episodes")) cfg.max_episodes = max_episodes;
    if (given(cmd, "--batch")) cfg.batch = batch;
    if (given(cmd, "--fit-mode")) cfg.fit.mode = fit_mode_from_string(fit_mode);
    if (given(cmd, "--fit-restarts")) cfg.fit.restarts = restarts;
    if (given(cmd, "--tighten-rounds")) cfg.fit.tighten_rounds = tighten;
    if (given(cmd, "--eval-episodes")) cfg.eval_episodes = eval_episodes;
    if (given(cmd, "--timing")) cfg.timing = timing;
  };

  // explore
  Common exc;
  auto* explore = app.add_subcommand("explore", "estimate moments by pure exploration");
  add_common(explore, exc);
  explore->add_option("--model", em2_model, "environment model JSON")->check(CLI::ExistingFile);
  explore->add_option("--fit-contexts", fit_contexts, "M used for the default degree");
  explore->add_option("--degree", degree);
  explore->add_option("--epsilon", epsilon);
  explore->add_option("--eta", eta);
  explore->add_option("--max-episodes", max_episodes);
  explore->add_option("--batch", batch);

  // fit
  Common fitc;
  std::string fit_in;
  auto* fit = app.add_subcommand("fit", "match moments from an explore directory");
  add_common(fit, fitc);
  fit->add_option("--in", fit_in, "directory with moments.json, transitions.json, explore.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  fit->add_option("--fit-contexts", fit_contexts);
  fit->add_option("--fit-mode", fit_mode);
  fit->add_option("--fit-restarts", restarts);
  fit->add_option("--tighten-rounds", tighten);

  // plan
  Common planc;
  std::string plan_model;
  bool plan_check = false;
  auto* plan = app.add_subcommand("plan", "optimal history-dependent policy");
  add_common(plan, planc);
  plan->add_option("--model", plan_model)->required()->check(CLI::ExistingFile);
  plan->add_flag("--brute-force", plan_check, "also report the brute-force optimum");

  // validate
  Common valc;
  std::string val_model;
  auto* validate = app.add_subcommand("validate", "check a model or config");
  add_common(validate, valc);
  validate->add_option("--model", val_model)->check(CLI::ExistingFile);

  // simulate
  Common simc;
  std::string sim_model, sim_policy = "uniform";
  std::size_t sim_episodes = 10;
  auto* simulate = app.add_subcommand("simulate", "sample episodes");
  add_common(simulate, simc);
  simulate->add_option("--model", sim_model)->required()->check(CLI::ExistingFile);
  simulate->add_option("--policy", sim_policy, "uniform | fixed:A | policy JSON");
  simulate->add_option("--episodes", sim_episodes);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "moment-matching diagnostics");
  analyze->require_subcommand(1);
  Common tvc;
  std::string model_a, model_b, events_path;
  int an_degree = 0;
  std::size_t policy_limit = 10'000;
  auto* tv = analyze->add_subcommand("tv", "eventwise TV against the moment bound");
  add_common(tv, tvc);
  tv->add_option("--model-a", model_a)->required()->check(CLI::ExistingFile);
  tv->add_option("--model-b", model_b)->required()->check(CLI::ExistingFile);
  tv->add_option("--degree", an_degree);
  tv->add_option("--events", events_path, "JSON {\"sequences\": [[[s,a],...],...]}")
      ->check(CLI::ExistingFile);
  tv->add_option("--policy-limit", policy_limit);

  Common klc;
  std::string strategy = "stationary";
  int kl_episodes = 1;
  auto* kl = analyze->add_subcommand("kl", "information identity over K episodes");
  add_common(kl, klc);
  kl->add_option("--model-a", model_a)->required()->check(CLI::ExistingFile);
  kl->add_option("--model-b", model_b)->required()->check(CLI::ExistingFile);
  kl->add_option("--strategy", strategy, "stationary | greedy | hashed")
      ->check(CLI::IsMember({"stationary", "greedy", "hashed"}));
  kl->add_option("--episodes", kl_episodes);

  Common lvc;
  std::string lv_in, lv_model, lv_policy = "uniform";
  auto* levels = analyze->add_subcommand("levels", "level-set histogram of a run");
  add_common(levels, lvc);
  levels->add_option("--in", lv_in, "explore or em2 output directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  levels->add_option("--model", lv_model, "model for the probabilities")->required()->check(CLI::ExistingFile);
  levels->add_option("--policy", lv_policy, "uniform | fixed:A | policy JSON");

  // hardgen
  Common hgc;
  int hg_contexts = 2, hg_degree = 2, hg_actions = 2, hg_restarts = 64;
  double hg_epsilon = 0, hg_tol = 1e-10;
  std::string hg_correct;
  bool hg_symmetric = false;
  auto* hardgen = app.add_subcommand("hardgen", "lower-bound instance");
  add_common(hardgen, hgc);
  hardgen->add_option("--contexts", hg_contexts);
  hardgen->add_option("--degree", hg_degree);
  hardgen->add_option("--actions", hg_actions);
  hardgen->add_option("--epsilon", hg_epsilon, "target deviation; maximized when absent");
  hardgen->add_option("--correct", hg_correct, "comma-separated actions; zeros by default");
  hardgen->add_option("--tol", hg_tol);
  hardgen->add_option("--restarts", hg_restarts);
  hardgen->add_flag("--symmetric", hg_symmetric);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << dump_json({{"error", e.what()}, {"code", kExitError}});
    return kExitError;
  }

  try {
    if (em2->parsed()) {
      RunConfig cfg = resolve_config(em2, em2c);
      apply_run_flags(em2, cfg);
      cfg.validate();
      const Rmmdp truth = load_true_model(cfg);
      const Em2Result res = run_em2(cfg, truth);
      write_em2_artifacts(cfg, res);
      nlohmann::json summary{{"episodes", res.exploration.episodes},
                             {"fit_feasible", res.fit.feasible},
                             {"exit_code", res.exit_code}};
      if (auto s = res.suboptimality()) summary["suboptimality"] = *s;
      print_json(summary);
      if (res.exit_code == kExitInfeasible) {
        throw ExitWith{kExitInfeasible, "fit infeasible after retry with slack_scale 2"};
      }
      if (res.exit_code == kExitBudget) {
        throw ExitWith{kExitBudget, "episode budget exhausted before the stopping rule"};
      }
      return kExitOk;
    }

    if (explore->parsed()) {
      RunConfig cfg = resolve_config(explore, exc);
      apply_run_flags(explore, cfg);
      cfg.validate();
      const Rmmdp truth = load_true_model(cfg);
      SimulatedEnvironment env(truth);
      const EnvironmentShape shape = env.shape();
      ExplorationConfig ec;
      ec.degree = cfg.degree.value_or(default_degree(cfg.fit_contexts, shape.horizon));
      ec.epsilon = cfg.epsilon;
      ec.eta = cfg.eta;
      ec.max_episodes = cfg.max_episodes;
      ec.batch = cfg.batch;
      ec.c_c = cfg.c_c;
      ec.c_T = cfg.c_T;
      ec.c_nu = cfg.c_nu;
      ec.seed = derive_seed(cfg.seed, 1);
      const ExplorationResult r = estimate_moments(env, ec);
      std::filesystem::create_directories(cfg.out);
      write_json(r.moments.to_json(), cfg.out / "moments.json");
      write_json(r.transitions.to_json(), cfg.out / "transitions.json");
      write_json(exploration_summary(shape, ec.degree, r), cfg.out / "explore.json");
      write_text(explore_log_csv(r.log), cfg.out / "explore.csv");
      print_json({{"episodes", r.episodes}, {"final_v_tilde_0", r.final_v0},
                  {"budget_exhausted", r.budget_exhausted}});
      if (r.budget_exhausted) throw ExitWith{kExitBudget, "episode budget exhausted"};
      return kExitOk;
    }

    if (fit->parsed()) {
      RunConfig cfg = resolve_config(fit, fitc);
      if (given(fit, "--fit-contexts")) cfg.fit_contexts = fit_contexts;
      if (given(fit, "--fit-mode")) cfg.fit.mode = fit_mode_from_string(fit_mode);
      if (given(fit, "--fit-restarts")) cfg.fit.restarts = restarts;
      if (given(fit, "--tighten-rounds")) cfg.fit.tighten_rounds = tighten;
      const std::filesystem::path dir = fit_in;
      const nlohmann::json summary = read_json(dir / "explore.json");
      const EnvironmentShape shape = shape_from_summary(summary);
      const MomentTable table = MomentTable::from_json(read_json(dir / "moments.json"));
      const TransitionEstimate est = TransitionEstimate::from_json(read_json(dir / "transitions.json"));
      const double iota_c = summary.at("constants").at("iota_c").get<double>();
      const Rmmdp base = base_model_from_estimate(est, shape, shape.horizon, cfg.fit_contexts);
      FitOptions fo = cfg.fit;
      fo.num_contexts = cfg.fit_contexts;
      fo.seed = derive_seed(cfg.seed, 2);
      FitResult r = fit_moment_matching(table, iota_c, base, fo);
      bool retried = false;
      if (!r.feasible) {
        fo.slack_scale *= 2.0;
        r = fit_moment_matching(table, iota_c, base, fo);
        retried = true;
      }
      std::filesystem::create_directories(cfg.out);
      save_model(r.model, cfg.out / "fitted_model.json");
      write_json(violation_report_to_json(violation_report(r.model, table, iota_c, fo.slack_scale)),
                 cfg.out / "violations.json");
      print_json({{"feasible", r.feasible}, {"objective", r.objective},
                  {"max_normalized_violation", r.max_normalized_violation}, {"retried", retried}});
      if (!r.feasible) throw ExitWith{kExitInfeasible, "fit infeasible after retry with slack_scale 2"};
      return kExitOk;
    }

    if (plan->parsed()) {
      RunConfig cfg = resolve_config(plan, planc);
      const Rmmdp model = load_model(plan_model);
      const PlanResult p = optimal_plan(model);
      std::filesystem::create_directories(cfg.out);
      write_json(p.policy->to_json(), cfg.out / "policy.json");
      nlohmann::json doc{{"value", p.value}};
      if (plan_check) doc["brute_force_value"] = brute_force_optimal(model);
      print_json(doc);
      return kExitOk;
    }

    if (validate->parsed()) {
      if (val_model.empty() && valc.config.empty()) {
        throw std::invalid_argument("validate: give --model or --config");
      }
      std::vector<std::string> problems;
      if (!valc.config.empty()) resolve_config(validate, valc).validate();
      if (!val_model.empty()) problems = validate_model(model_from_json(read_json(val_model)));
      print_json({{"valid", problems.empty()}, {"problems", problems}});
      if (!problems.empty()) throw ExitWith{kExitError, "model failed validation"};
      return kExitOk;
    }

    if (simulate->parsed()) {
      RunConfig cfg = resolve_config(simulate, simc);
      const Rmmdp model = load_model(sim_model);
      const auto policy = load_policy(sim_policy, model.num_actions);
      std::string csv = "episode,t,state,action,reward\n";
      double total = 0.0;
      for (std::size_t k = 0; k < sim_episodes; ++k) {
        const EpisodeRecord rec = sample_episode(model, *policy, derive_seed(cfg.seed, k));
        for (std::size_t t = 0; t < rec.trajectory.steps.size(); ++t) {
          const Step& st = rec.trajectory.steps[t];
          const double r = model.support.values()[static_cast<std::size_t>(st.reward)];
          total += r;
          csv += std::to_string(k + 1) + "," + std::to_string(t + 1) + "," + std::to_string(st.state) + "," +
                 std::to_string(st.action) + "," + format_real(r) + "\n";
        }
      }
      std::filesystem::create_directories(cfg.out);
      write_text(csv, cfg.out / "episodes.csv");
      print_json({{"episodes", sim_episodes},
                  {"mean_return", sim_episodes ? total / static_cast<double>(sim_episodes) : 0.0}});
      return kExitOk;
    }

    if (tv->parsed()) {
      RunConfig cfg = resolve_config(tv, tvc);
      const Rmmdp a = load_model(model_a);
      const Rmmdp b = load_model(model_b);
      const int d = given(tv, "--degree") ? an_degree : default_degree(max_contexts(a, b), a.horizon);
      std::vector<SequenceEvent> events{[](std::span<const StateAction>) { return true; }};
      if (!events_path.empty()) {
        auto seqs = std::make_shared<std::vector<std::vector<StateAction>>>(read_event_sequences(events_path));
        events.push_back([seqs](std::span<const StateAction> x) {
          for (const auto& s : *seqs) {
            if (std::equal(x.begin(), x.end(), s.begin(), s.end())) return true;
          }
          return false;
        });
      }
      const auto reactive = all_reactive_policies(a.num_states, a.num_actions, a.horizon, policy_limit);
      std::vector<const Policy*> ptrs;
      std::vector<std::string> names;
      for (std::size_t i = 0; i < reactive.size(); ++i) {
        ptrs.push_back(&reactive[i]);
        names.push_back("reactive/" + std::to_string(i));
      }
      const UniformPolicy uniform(a.num_actions);
      ptrs.push_back(&uniform);
      names.push_back("uniform");
      const TvBoundReport rep = verify_tv_bound(a, b, d, ptrs, names, events);
      std::filesystem::create_directories(cfg.out);
      write_json(tv_report_to_json(rep), cfg.out / "tv_report.json");
      print_json({{"degree", d}, {"checks", rep.checks.size()}, {"violations", rep.violations},
                  {"worst_ratio", rep.worst_ratio}});
      return kExitOk;
    }

    if (kl->parsed()) {
      RunConfig cfg = resolve_config(kl, klc);
      const Rmmdp a = load_model(model_a);
      const Rmmdp b = load_model(model_b);
      const UniformPolicy uniform(a.num_actions);
      std::unique_ptr<Strategy> s;
      if (strategy == "stationary") s = std::make_unique<StationaryStrategy>(uniform);
      if (strategy == "greedy") s = std::make_unique<GreedyStrategy>(a.num_actions, a.support);
      if (strategy == "hashed") s = std::make_unique<HashedStrategy>(a.num_actions, cfg.seed);
      const KlIdentity r = kl_identity(a, b, *s, kl_episodes);
      nlohmann::json doc{{"strategy", strategy}, {"episodes", kl_episodes}, {"infinite", r.infinite}};
      doc["lhs"] = r.infinite ? nlohmann::json("inf") : nlohmann::json(r.lhs);
      doc["rhs"] = r.infinite ? nlohmann::json("inf") : nlohmann::json(r.rhs);
      doc["gap"] = r.infinite ? nlohmann::json(nullptr) : nlohmann::json(r.gap());
      print_json(doc);
      return kExitOk;
    }

    if (levels->parsed()) {
      RunConfig cfg = resolve_config(levels, lvc);
      const std::filesystem::path dir = lv_in;
      const nlohmann::json summary = read_json(dir / "explore.json");
      const EnvironmentShape shape = shape_from_summary(summary);
      const MomentTable table = MomentTable::from_json(read_json(dir / "moments.json"));
      const LevelStructure ls =
          build_levels(table, summary.at("episodes").get<double>(), shape.num_states * shape.num_actions,
                       summary.at("degree").get<int>(), summary.at("constants").at("iota_c").get<double>());
      const Rmmdp model = load_model(lv_model);
      const auto policy = load_policy(lv_policy, model.num_actions);
      const std::vector<double> prob = level_probabilities(model, *policy, ls);
      std::vector<double> sup;
      for (int l = 0; l <= ls.levels() + 1; ++l) sup.push_back(sup_event_probability(model, ls.disjoint_event(l)));
      std::filesystem::create_directories(cfg.out);
      write_text(level_histogram_csv(ls, prob, sup), cfg.out / "levels.csv");
      print_json({{"levels", ls.levels()}, {"n0", ls.n0()}});
      return kExitOk;
    }

    if (hardgen->parsed()) {
      RunConfig cfg = resolve_config(hardgen, hgc);
      MixtureOptions mo;
      if (given(hardgen, "--epsilon")) mo.epsilon = hg_epsilon;
      mo.tol = hg_tol;
      mo.restarts = hg_restarts;
      mo.symmetric = hg_symmetric;
      mo.seed = cfg.seed;
      const Mixture mix = build_mixture(hg_contexts, hg_degree, mo);
      if (!mix.feasible) {
        nlohmann::json err{{"error", "no mixture meets the tolerance"},
                           {"code", kExitInfeasible},
                           {"max_residual", mix.max_residual},
                           {"residuals", mix.residuals}};
        std::cerr << dump_json(err);
        return kExitInfeasible;
      }
      std::vector<int> correct = parse_ints(hg_correct);
      if (correct.empty()) correct.assign(static_cast<std::size_t>(hg_degree), 0);
      const HardInstance inst = assemble_instance(mix, hg_actions, correct);
      if (!epsilon_in_lower_bound_regime(hg_degree, inst.epsilon)) {
        std::cerr << "warning: epsilon " << format_real(inst.epsilon)
                  << " is above (2d)^(-2d); the instance is outside the lower-bound regime\n";
      }
      const ParityReport parity = parity_check(inst);
      std::filesystem::create_directories(cfg.out);
      save_model(inst.model, cfg.out / "hard_model.json");
      write_json(hard_instance_sidecar(inst, parity), cfg.out / "hard_sidecar.json");
      const ValueCheck v = instance_value_check(inst);
      print_json({{"epsilon", inst.epsilon}, {"optimal_value", v.optimal}, {"bound", v.bound},
                  {"uniform_value", v.uniform}, {"parity_max_residual", parity.max_residual}});
      return kExitOk;
    }
  } catch (const ExitWith& e) {
    std::cerr << dump_json({{"error", e.message}, {"code", e.code}});
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << dump_json({{"error", e.what()}, {"code", kExitError}});
    return kExitError;
  }
  return kExitError;
}
