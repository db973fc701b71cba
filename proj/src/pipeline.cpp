#include "rmm/pipeline.hpp"

#include <chrono>
#include <set>
#include <stdexcept>

#include "rmm/analyze.hpp"
#include "rmm/env.hpp"
#include "rmm/model_io.hpp"

namespace rmm {

namespace {

void check_keys(const nlohmann::json& doc, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!doc.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!allowed.contains(key)) throw std::invalid_argument("unknown key \"" + key + "\" in " + where);
  }
}

template <class T>
void read_opt(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

Execution exec_from_string(const std::string& s) {
  if (s == "serial") return Execution::serial;
  if (s == "parallel") return Execution::parallel;
  throw std::invalid_argument("exec must be \"serial\" or \"parallel\", got \"" + s + "\"");
}

}  // namespace

void RunConfig::validate() const {
  const int sources = int(model_path.has_value()) + int(generator.has_value()) + int(hard.has_value());
  if (sources != 1) throw std::invalid_argument("model: exactly one model source is required");
  if (model_path && !std::filesystem::exists(*model_path)) {
    throw std::invalid_argument("model: file " + model_path->string() + " does not exist");
  }
  if (fit_contexts < 1) throw std::invalid_argument("fit_contexts must be >= 1");
  if (degree && *degree < 1) throw std::invalid_argument("degree must be >= 1");
  if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
  if (fit.restarts < 1) throw std::invalid_argument("fit.restarts must be >= 1");
  if (fit.max_iters < 1) throw std::invalid_argument("fit.max_iters must be >= 1");
  ExplorationConfig ec;
  ec.epsilon = epsilon;
  ec.eta = eta;
  ec.max_episodes = max_episodes;
  ec.batch = batch;
  ec.c_c = c_c;
  ec.c_T = c_T;
  ec.c_nu = c_nu;
  ec.validate();
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& doc) {
  check_keys(doc, {"num_states", "num_actions", "horizon", "num_rewards", "num_contexts",
                   "balanced_weights", "dirichlet_alpha", "seed"},
             "generator");
  GeneratorSpec s;
  read_opt(doc, "num_states", s.num_states);
  read_opt(doc, "num_actions", s.num_actions);
  read_opt(doc, "horizon", s.horizon);
  read_opt(doc, "num_rewards", s.num_rewards);
  read_opt(doc, "num_contexts", s.num_contexts);
  read_opt(doc, "balanced_weights", s.balanced_weights);
  read_opt(doc, "dirichlet_alpha", s.dirichlet_alpha);
  read_opt(doc, "seed", s.seed);
  return s;
}

nlohmann::json generator_spec_to_json(const GeneratorSpec& s) {
  return {{"num_states", s.num_states},     {"num_actions", s.num_actions},
          {"horizon", s.horizon},           {"num_rewards", s.num_rewards},
          {"num_contexts", s.num_contexts}, {"balanced_weights", s.balanced_weights},
          {"dirichlet_alpha", s.dirichlet_alpha}, {"seed", s.seed}};
}

HardSpec hard_spec_from_json(const nlohmann::json& doc) {
  check_keys(doc, {"num_contexts", "degree", "num_actions", "epsilon", "correct", "seed"}, "hard");
  HardSpec s;
  read_opt(doc, "num_contexts", s.num_contexts);
  read_opt(doc, "degree", s.degree);
  read_opt(doc, "num_actions", s.num_actions);
  if (doc.contains("epsilon") && !doc.at("epsilon").is_null()) s.epsilon = doc.at("epsilon").get<double>();
  read_opt(doc, "correct", s.correct);
  read_opt(doc, "seed", s.seed);
  return s;
}

nlohmann::json hard_spec_to_json(const HardSpec& s) {
  nlohmann::json doc{{"num_contexts", s.num_contexts}, {"degree", s.degree},
                     {"num_actions", s.num_actions},   {"correct", s.correct},
                     {"seed", s.seed}};
  doc["epsilon"] = s.epsilon ? nlohmann::json(*s.epsilon) : nlohmann::json(nullptr);
  return doc;
}

FitOptions fit_options_from_json(const nlohmann::json& doc, FitOptions o) {
  check_keys(doc, {"mode", "grid", "restarts", "max_iters", "step", "slack_scale", "tighten_rounds",
                   "exec"},
             "fit");
  if (doc.contains("mode")) o.mode = fit_mode_from_string(doc.at("mode").get<std::string>());
  read_opt(doc, "grid", o.grid);
  read_opt(doc, "restarts", o.restarts);
  read_opt(doc, "max_iters", o.max_iters);
  read_opt(doc, "step", o.step);
  read_opt(doc, "slack_scale", o.slack_scale);
  read_opt(doc, "tighten_rounds", o.tighten_rounds);
  if (doc.contains("exec")) o.exec = exec_from_string(doc.at("exec").get<std::string>());
  return o;
}

nlohmann::json fit_options_to_json(const FitOptions& o) {
  return {{"mode", to_string(o.mode)},   {"grid", o.grid},
          {"restarts", o.restarts},      {"max_iters", o.max_iters},
          {"step", o.step},              {"slack_scale", o.slack_scale},
          {"tighten_rounds", o.tighten_rounds},
          {"exec", o.exec == Execution::serial ? "serial" : "parallel"}};
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  check_keys(doc, {"model", "fit_contexts", "degree", "epsilon", "eta", "max_episodes", "batch", "c_c",
                   "c_T", "c_nu", "fit", "eval_episodes", "seed", "out", "timing"},
             "config");
  RunConfig cfg;
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    if (m.is_string()) {
      cfg.model_path = m.get<std::string>();
    } else {
      check_keys(m, {"generator", "hard"}, "model");
      if (m.contains("generator")) cfg.generator = generator_spec_from_json(m.at("generator"));
      if (m.contains("hard")) cfg.hard = hard_spec_from_json(m.at("hard"));
    }
  }
  read_opt(doc, "fit_contexts", cfg.fit_contexts);
  if (doc.contains("degree") && !doc.at("degree").is_null()) cfg.degree = doc.at("degree").get<int>();
  read_opt(doc, "epsilon", cfg.epsilon);
  read_opt(doc, "eta", cfg.eta);
  read_opt(doc, "max_episodes", cfg.max_episodes);
  read_opt(doc, "batch", cfg.batch);
  read_opt(doc, "c_c", cfg.c_c);
  read_opt(doc, "c_T", cfg.c_T);
  read_opt(doc, "c_nu", cfg.c_nu);
  if (doc.contains("fit")) cfg.fit = fit_options_from_json(doc.at("fit"), cfg.fit);
  read_opt(doc, "eval_episodes", cfg.eval_episodes);
  read_opt(doc, "seed", cfg.seed);
  if (doc.contains("out")) cfg.out = doc.at("out").get<std::string>();
  read_opt(doc, "timing", cfg.timing);
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json doc;
  if (cfg.model_path) doc["model"] = cfg.model_path->string();
  if (cfg.generator) doc["model"] = {{"generator", generator_spec_to_json(*cfg.generator)}};
  if (cfg.hard) doc["model"] = {{"hard", hard_spec_to_json(*cfg.hard)}};
  doc["fit_contexts"] = cfg.fit_contexts;
  doc["degree"] = cfg.degree ? nlohmann::json(*cfg.degree) : nlohmann::json(nullptr);
  doc["epsilon"] = cfg.epsilon;
  doc["eta"] = cfg.eta;
  doc["max_episodes"] = cfg.max_episodes;
  doc["batch"] = cfg.batch;
  doc["c_c"] = cfg.c_c;
  doc["c_T"] = cfg.c_T;
  doc["c_nu"] = cfg.c_nu;
  doc["fit"] = fit_options_to_json(cfg.fit);
  doc["eval_episodes"] = cfg.eval_episodes;
  doc["seed"] = cfg.seed;
  doc["out"] = cfg.out.string();
  doc["timing"] = cfg.timing;
  return doc;
}

HardInstance make_hard_instance(const HardSpec& spec) {
  MixtureOptions mo;
  mo.epsilon = spec.epsilon;
  mo.seed = spec.seed;
  const Mixture mix = build_mixture(spec.num_contexts, spec.degree, mo);
  if (!mix.feasible) {
    std::string msg = "hard instance: no mixture meets the tolerance; max residual " +
                      format_real(mix.max_residual) + ", residuals [";
    for (std::size_t i = 0; i < mix.residuals.size(); ++i) {
      msg += (i ? "," : "") + format_real(mix.residuals[i]);
    }
    throw std::runtime_error(msg + "]");
  }
  std::vector<int> correct = spec.correct;
  if (correct.empty()) correct.assign(static_cast<std::size_t>(spec.degree), 0);
  return assemble_instance(mix, spec.num_actions, std::move(correct));
}

Rmmdp load_true_model(const RunConfig& cfg) {
  if (cfg.model_path) return load_model(*cfg.model_path);
  if (cfg.generator) return random_model(*cfg.generator);
  if (cfg.hard) return make_hard_instance(*cfg.hard).model;
  throw std::invalid_argument("model: no model source");
}

Rmmdp base_model_from_estimate(const TransitionEstimate& est, const EnvironmentShape& shape,
                               int horizon, int num_contexts) {
  Rmmdp base = make_empty_model(shape.num_states, shape.num_actions, horizon, shape.support, num_contexts);
  base.transition = est.transition_matrix();
  base.init = est.init_distribution();
  for (double& w : base.weights) w = 1.0 / num_contexts;
  for (double& p : base.rewards) p = 1.0 / shape.num_rewards();
  return base;
}

nlohmann::json exploration_summary(const EnvironmentShape& shape, int degree,
                                   const ExplorationResult& result) {
  const auto& c = result.constants;
  std::vector<double> support(shape.support.values().begin(), shape.support.values().end());
  return {{"format", "rmm-explore/1"},
          {"num_states", shape.num_states},
          {"num_actions", shape.num_actions},
          {"horizon", shape.horizon},
          {"support", support},
          {"degree", degree},
          {"episodes", result.episodes},
          {"budget_exhausted", result.budget_exhausted},
          {"final_v_tilde_0", result.final_v0},
          {"constants",
           {{"iota_c", c.iota_c}, {"iota_T", c.iota_T}, {"iota_nu", c.iota_nu},
            {"levels", c.levels}, {"eps_pe", c.eps_pe}}}};
}

EnvironmentShape shape_from_summary(const nlohmann::json& doc) {
  if (doc.value("format", "") != "rmm-explore/1") {
    throw std::invalid_argument("expected an \"rmm-explore/1\" document");
  }
  EnvironmentShape shape;
  shape.num_states = doc.at("num_states").get<int>();
  shape.num_actions = doc.at("num_actions").get<int>();
  shape.horizon = doc.at("horizon").get<int>();
  shape.support = RewardSupport(doc.at("support").get<std::vector<double>>());
  return shape;
}

Em2Result run_em2(const RunConfig& cfg, const Rmmdp& truth, bool evaluate) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Em2Result res;
  {
    // The learner's view ends with this block: only the black-box environment.
    SimulatedEnvironment env(truth);
    const EnvironmentShape shape = env.shape();
    res.shape = shape;
    res.degree = cfg.degree.value_or(default_degree(cfg.fit_contexts, shape.horizon));
    ExplorationConfig ec;
    ec.degree = res.degree;
    ec.epsilon = cfg.epsilon;
    ec.eta = cfg.eta;
    ec.max_episodes = cfg.max_episodes;
    ec.batch = cfg.batch;
    ec.c_c = cfg.c_c;
    ec.c_T = cfg.c_T;
    ec.c_nu = cfg.c_nu;
    ec.seed = derive_seed(cfg.seed, 1);
    res.exploration = estimate_moments(env, ec);

    const Rmmdp base = base_model_from_estimate(res.exploration.transitions, shape, shape.horizon,
                                                cfg.fit_contexts);
    FitOptions fo = cfg.fit;
    fo.num_contexts = cfg.fit_contexts;
    fo.seed = derive_seed(cfg.seed, 2);
    const double iota_c = res.exploration.constants.iota_c;
    res.fit = fit_moment_matching(res.exploration.moments, iota_c, base, fo);
    if (!res.fit.feasible) {
      fo.slack_scale *= 2.0;
      res.fit = fit_moment_matching(res.exploration.moments, iota_c, base, fo);
      res.fit_retried = true;
    }
    PlanResult plan = optimal_plan(res.fit.model);
    res.planned_value = plan.value;
    res.policy = std::move(plan.policy);
  }
  if (evaluate) {
    res.optimal_value = optimal_plan(truth).value;
    PolicyValueOptions pv;
    pv.mc_episodes = cfg.eval_episodes;
    pv.mc_seed = derive_seed(cfg.seed, 3);
    const PolicyValue v = policy_value(truth, *res.policy, pv);
    res.policy_value = v.value;
    res.policy_value_exact = v.exact;
  }
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (!res.fit.feasible) {
    res.exit_code = kExitInfeasible;
  } else if (res.exploration.budget_exhausted) {
    res.exit_code = kExitBudget;
  }
  return res;
}

std::string em2_metrics_csv(const Em2Result& res, bool timing) {
  std::string out = explore_log_csv(res.exploration.log);
  out += "\nK,suboptimality,fit_objective,fit_feasible,wall_ms\n";
  out += std::to_string(res.exploration.episodes) + ",";
  if (const auto sub = res.suboptimality()) out += format_real(*sub);
  out += "," + format_real(res.fit.objective) + ",";
  out += res.fit.feasible ? "true" : "false";
  out += ",";
  out += timing ? format_real(std::round(res.wall_ms)) : "0";
  out += "\n";
  return out;
}

void write_em2_artifacts(const RunConfig& cfg, const Em2Result& res) {
  const auto& dir = cfg.out;
  std::filesystem::create_directories(dir);
  write_json(res.exploration.moments.to_json(), dir / "moments.json");
  write_json(res.exploration.transitions.to_json(), dir / "transitions.json");
  write_json(exploration_summary(res.shape, res.degree, res.exploration), dir / "explore.json");
  save_model(res.fit.model, dir / "fitted_model.json");
  write_json(res.policy->to_json(), dir / "policy.json");
  write_text(em2_metrics_csv(res, cfg.timing), dir / "metrics.csv");

  const auto& c = res.exploration.constants;
  nlohmann::json run{{"format", "rmm-run/1"},
                     {"config", run_config_to_json(cfg)},
                     {"episodes", res.exploration.episodes},
                     {"budget_exhausted", res.exploration.budget_exhausted},
                     {"final_v_tilde_0", res.exploration.final_v0},
                     {"constants",
                      {{"iota_c", c.iota_c}, {"iota_T", c.iota_T}, {"iota_nu", c.iota_nu},
                       {"levels", c.levels}, {"eps_pe", c.eps_pe}}},
                     {"fit",
                      {{"feasible", res.fit.feasible}, {"objective", res.fit.objective},
                       {"max_normalized_violation", res.fit.max_normalized_violation},
                       {"retried", res.fit_retried}, {"best_restart", res.fit.best_restart},
                       {"constraints", res.fit.constraints}}},
                     {"planned_value", res.planned_value},
                     {"wall_ms", res.wall_ms},
                     {"exit_code", res.exit_code}};
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  run["optimal_value"] = opt(res.optimal_value);
  run["policy_value"] = opt(res.policy_value);
  run["policy_value_exact"] = res.policy_value_exact;
  run["suboptimality"] = opt(res.suboptimality());
  write_json(run, dir / "run.json");
}

}  // namespace rmm
