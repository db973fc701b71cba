#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"
#include "rmm/enumerate.hpp"
#include "rmm/moments.hpp"

namespace rmm {

enum class FitMode { general, balanced_two, integral_grid };

std::string to_string(FitMode mode);
FitMode fit_mode_from_string(const std::string& text);

struct FitOptions {
  int num_contexts = 2;
  FitMode mode = FitMode::general;
  int grid = 0;  // P for integral_grid
  int restarts = 200;
  int max_iters = 2000;
  double step = 1.0;  // initial step; cosine decay to zero over max_iters
  double slack_scale = 1.0;
  /// After a feasible point is found, re-solve with radii halved this many
  /// times, keeping the last candidate that stays feasible at full radii.
  int tighten_rounds = 0;
  std::uint64_t seed = 0;
  Execution exec = Execution::parallel;
};

struct FitResult {
  Rmmdp model;  // dynamics of the base model, fitted weights and rewards
  bool feasible = false;
  double objective = 0.0;
  double max_normalized_violation = 0.0;
  std::vector<double> trace;  // objective per iteration of the chosen restart
  int best_restart = -1;
  std::size_t constraints = 0;
};

/// One moment constraint |M_hat(x, z) - target| <= radius.
struct MomentConstraint {
  MomentKey key;
  std::vector<int> rewards;
  double target = 0.0;
  double radius = 0.0;
};

/// Constraints used by a fit. Radii are slack_scale * sqrt(iota_c / n(x));
/// balanced_two uses keys of degree <= 2 and synthesizes degree-3 ones.
std::vector<MomentConstraint> build_constraints(const MomentTable& table, double iota_c,
                                                const FitOptions& opts);

/// Squared-hinge objective sum [(|M_hat - target| - radius)_+]^2.
double fit_objective(const Rmmdp& candidate, const std::vector<MomentConstraint>& constraints);

/// Searches for weights and reward models matching the table's moments.
/// `base` supplies S, A, H, support, T and nu; its mixture is ignored.
FitResult fit_moment_matching(const MomentTable& table, double iota_c, const Rmmdp& base,
                              const FitOptions& opts);

/// -2 M1 M2 M3 + M1 M23 + M2 M13 + M3 M12.
double third_moment_predict(double m1, double m2, double m3, double m12, double m13, double m23);

struct SlackEntry {
  MomentKey key;
  std::vector<int> rewards;
  double empirical = 0.0;
  double predicted = 0.0;
  double radius = 0.0;
  double slack = 0.0;  // (|predicted - empirical| - radius)_+
};

struct ViolationReport {
  std::vector<SlackEntry> entries;
  double max_slack = 0.0;
  double max_normalized = 0.0;  // slack / radius; raw slack where radius is 0
  std::size_t violated = 0;
};

ViolationReport violation_report(const Rmmdp& candidate, const MomentTable& table, double iota_c,
                                 double slack_scale = 1.0);

nlohmann::json violation_report_to_json(const ViolationReport& report);

/// Exhaustive search over w and mu on a simplex grid of the given step.
/// Returns the minimum objective and the minimizing model. Exactness oracle
/// for tiny problems; throws ResourceError beyond `budget` candidates.
FitResult grid_search_fit(const MomentTable& table, double iota_c, const Rmmdp& base,
                          int num_contexts, double step = 0.05, double budget = 5e7);

/// Euclidean projection onto the probability simplex, in place.
void project_simplex(std::span<double> v);

/// Rounds a probability vector to multiples of 1/P preserving the sum
/// (largest-remainder method).
std::vector<double> round_to_grid(std::span<const double> probs, int P);

}  // namespace rmm
