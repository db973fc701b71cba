#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"

namespace rmm {

struct MixtureOptions {
  double tol = 1e-10;
  /// Target top-degree deviation; unset means maximize it.
  std::optional<double> epsilon;
  /// Equal weights with mirrored context pairs mu_{m + M/2} = 1 - mu_m (M even).
  bool symmetric = false;
  int restarts = 64;
  int max_iters = 400;
  std::uint64_t seed = 0;
};

/// Weights and mu*_m(t) = P(r = 1 | s*_t, a*_t, m), row-major [m * d + t].
struct Mixture {
  int num_contexts = 0;
  int degree = 0;
  std::vector<double> weights;
  std::vector<double> mu;
  double epsilon = 0.0;       // top moment - (1/2)^d
  double max_residual = 0.0;  // max over proper subsets of |moment - (1/2)^q|
  bool feasible = false;
  std::vector<double> residuals;  // one per proper nonempty subset, bitmask order

  double at(int m, int t) const { return mu[static_cast<std::size_t>(m * degree + t)]; }
};

/// Multilinear moment sum_m w_m prod_{t in subset} mu_m(t); subset is a bitmask over [d].
double multilinear_moment(const Mixture& mix, unsigned subset);

/// Solves for a mixture whose degree-q < d multilinear moments are (1/2)^q
/// while the degree-d moment exceeds (1/2)^d. Damped Gauss-Newton with
/// projection onto the simplex and the unit box, seeded restarts in parallel,
/// lowest successful restart wins. Never throws on infeasibility: the result
/// has feasible = false and the residuals of the best attempt.
Mixture build_mixture(int num_contexts, int degree, const MixtureOptions& opts = {});

/// Flips coordinate 0 (mu -> 1 - mu) when the top deviation is negative.
/// Sub-top moments are unchanged and the deviation changes sign.
void normalize_sign(Mixture& mix);

/// (2d)^(-2d) regime required by the lower-bound lemmas.
bool epsilon_in_lower_bound_regime(int degree, double epsilon);

struct HardInstance {
  Rmmdp model;
  std::vector<int> correct;  // empty: every action is a fair coin
  Mixture mixture;
  double epsilon = 0.0;
};

/// Chain s_0 .. s_{d-1} then an absorbing terminal s_d; H = d. Every action
/// moves forward. Only correct[t] at s_t pays Bern(mu*_m(t)); everything else
/// pays Bern(1/2).
HardInstance assemble_instance(const Mixture& mix, int num_actions, std::vector<int> correct);

struct ParityEntry {
  std::vector<int> prefix;
  double conditional = 0.0;
  double expected = 0.0;
  double residual = 0.0;
};

struct ParityReport {
  std::vector<ParityEntry> entries;
  double max_residual = 0.0;
};

/// P(r_d = 1 | r_{1:d-1}, correct play) against 1/2 +- eps 2^(d-1), plus
/// when the prefix has an even number of zeros.
ParityReport parity_check(const HardInstance& inst);

struct ValueCheck {
  double optimal = 0.0;
  double bound = 0.0;  // d/2 + eps 2^(d-2)
  double uniform = 0.0;
  bool pass = false;   // optimal >= bound - 1e-9
};

ValueCheck instance_value_check(const HardInstance& inst);

/// Probability that the optimal policy plays the whole correct sequence. Only
/// computed when d > 4 and eps is in the lower-bound regime.
std::optional<double> optimal_play_probability(const HardInstance& inst);

/// Sidecar document "rmm-hard/1".
nlohmann::json hard_instance_sidecar(const HardInstance& inst, const ParityReport& parity);

}  // namespace rmm
