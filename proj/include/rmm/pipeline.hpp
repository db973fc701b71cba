#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"
#include "rmm/explore.hpp"
#include "rmm/fit.hpp"
#include "rmm/generators.hpp"
#include "rmm/hardgen.hpp"
#include "rmm/plan.hpp"

namespace rmm {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitBudget = 2, kExitInfeasible = 3 };

struct HardSpec {
  int num_contexts = 2;
  int degree = 2;
  int num_actions = 2;
  std::optional<double> epsilon;
  std::vector<int> correct;  // defaults to all zeros
  std::uint64_t seed = 0;
};

/// FitOptions defaults with four tightening rounds.
inline FitOptions default_em2_fit() {
  FitOptions f;
  f.tighten_rounds = 4;
  return f;
}

struct RunConfig {
  // Exactly one model source.
  std::optional<std::filesystem::path> model_path;
  std::optional<GeneratorSpec> generator;
  std::optional<HardSpec> hard;

  int fit_contexts = 2;
  std::optional<int> degree;  // default min(2 M_fit - 1, H)
  double epsilon = 0.1;
  double eta = 0.1;
  std::uint64_t max_episodes = 10'000;
  std::uint64_t batch = 1;
  double c_c = 2.0;
  double c_T = 2.0;
  double c_nu = 2.0;
  FitOptions fit = default_em2_fit();
  std::uint64_t eval_episodes = 100'000;  // Monte-Carlo fallback only
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  bool timing = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Reads a config document; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& cfg);

GeneratorSpec generator_spec_from_json(const nlohmann::json& doc);
nlohmann::json generator_spec_to_json(const GeneratorSpec& spec);
HardSpec hard_spec_from_json(const nlohmann::json& doc);
nlohmann::json hard_spec_to_json(const HardSpec& spec);
FitOptions fit_options_from_json(const nlohmann::json& doc, FitOptions base = {});
nlohmann::json fit_options_to_json(const FitOptions& opts);

/// Builds the true model named by the config.
Rmmdp load_true_model(const RunConfig& cfg);

HardInstance make_hard_instance(const HardSpec& spec);

/// Same dynamics as the estimate, uniform weights and rewards.
Rmmdp base_model_from_estimate(const TransitionEstimate& est, const EnvironmentShape& shape,
                               int horizon, int num_contexts);

/// "rmm-explore/1": environment shape, degree, constants and episode count.
nlohmann::json exploration_summary(const EnvironmentShape& shape, int degree,
                                   const ExplorationResult& result);
EnvironmentShape shape_from_summary(const nlohmann::json& doc);

struct Em2Result {
  EnvironmentShape shape;
  int degree = 0;
  ExplorationResult exploration;
  FitResult fit;
  bool fit_retried = false;
  std::unique_ptr<BeliefPolicy> policy;
  double planned_value = 0.0;    // V* of the fitted model
  std::optional<double> optimal_value;  // V* of the true model
  std::optional<double> policy_value;   // V^pi_hat on the true model
  bool policy_value_exact = true;
  double wall_ms = 0.0;
  int exit_code = kExitOk;

  std::optional<double> suboptimality() const {
    if (!optimal_value || !policy_value) return std::nullopt;
    return *optimal_value - *policy_value;
  }
};

/// Explore, fit, plan. The learner sees only the environment; the true model
/// is used afterwards for the exact evaluation when `evaluate` is set.
Em2Result run_em2(const RunConfig& cfg, const Rmmdp& truth, bool evaluate = true);

/// explore log, a blank line, then
/// "K,suboptimality,fit_objective,fit_feasible,wall_ms" and one row.
std::string em2_metrics_csv(const Em2Result& res, bool timing);

/// Writes moments.json, transitions.json, explore.json, fitted_model.json,
/// policy.json, metrics.csv and run.json under cfg.out.
void write_em2_artifacts(const RunConfig& cfg, const Em2Result& res);

}  // namespace rmm
