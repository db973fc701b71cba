#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmm {

/// Tolerance used for every simplex check (rows of T, nu, w, mu).
inline constexpr double kSimplexTolerance = 1e-12;

/// Raised when an enumeration or memo table would exceed its budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by belief_update when the observation has zero likelihood.
class ImpossibleObservation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct StateAction {
  int state = 0;
  int action = 0;

  auto operator<=>(const StateAction&) const = default;
};

/// One time step of an episode. `reward` is an index into the reward support.
struct Step {
  int state = 0;
  int action = 0;
  int reward = 0;

  bool operator==(const Step&) const = default;
};

/// Finite, strictly increasing set of reward values with |z| <= 1.
class RewardSupport {
 public:
  RewardSupport() = default;
  explicit RewardSupport(std::vector<double> values);

  static RewardSupport binary() { return RewardSupport({0.0, 1.0}); }

  int size() const { return static_cast<int>(values_.size()); }
  double value(int z) const { return values_[static_cast<std::size_t>(z)]; }
  std::span<const double> values() const { return values_; }

  bool operator==(const RewardSupport&) const = default;

 private:
  std::vector<double> values_;
};

/// Reward-mixing MDP. Transitions and the initial distribution are shared
/// by all contexts; only the reward model depends on the latent context.
///
/// Storage is flat and row-major:
///   transition[(s * A + a) * S + s']
///   rewards[((m * S + s) * A + a) * Z + z]
struct Rmmdp {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  RewardSupport support;
  std::vector<double> transition;
  std::vector<double> init;
  std::vector<double> weights;
  std::vector<double> rewards;

  int num_contexts() const { return static_cast<int>(weights.size()); }
  int num_rewards() const { return support.size(); }
  int num_pairs() const { return num_states * num_actions; }

  double T(int s, int a, int next) const {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + next];
  }
  double mu(int m, int s, int a, int z) const {
    return rewards[((static_cast<std::size_t>(m) * num_states + s) * num_actions + a) *
                       num_rewards() +
                   z];
  }
  double& mu(int m, int s, int a, int z) {
    return rewards[((static_cast<std::size_t>(m) * num_states + s) * num_actions + a) *
                       num_rewards() +
                   z];
  }
  std::span<const double> transition_row(int s, int a) const {
    return std::span<const double>(transition).subspan(
        (static_cast<std::size_t>(s) * num_actions + a) * num_states, num_states);
  }
  std::span<const double> reward_row(int m, int s, int a) const {
    return std::span<const double>(rewards).subspan(
        ((static_cast<std::size_t>(m) * num_states + s) * num_actions + a) * num_rewards(),
        num_rewards());
  }

  bool operator==(const Rmmdp&) const = default;
};

/// Allocates a model with the given dimensions; all probabilities zero.
Rmmdp make_empty_model(int num_states, int num_actions, int horizon, RewardSupport support,
                       int num_contexts);

/// Throws std::invalid_argument if array sizes disagree with the dimensions.
void check_dimensions(const Rmmdp& model);

/// Returns one message per violated simplex invariant. Empty iff valid.
std::vector<std::string> validate_model(const Rmmdp& model);

/// Rescales rows whose sums are within kSimplexTolerance of one.
void renormalize(Rmmdp& model);

/// True when both models have identical S, A, H, support, T and nu.
bool same_dynamics(const Rmmdp& a, const Rmmdp& b);

/// Ordered state-action sequence stored in canonical (sorted) order.
struct MomentKey {
  std::vector<StateAction> pairs;

  std::size_t size() const { return pairs.size(); }
  auto operator<=>(const MomentKey&) const = default;
};

struct CanonicalMoment {
  MomentKey key;
  std::vector<int> rewards;
};

/// Stable-sorts the pairs and co-permutes the rewards; rewards attached to
/// identical pairs are additionally sorted ascending.
CanonicalMoment canonicalize(std::span<const StateAction> pairs, std::span<const int> rewards);

/// "s,a|s,a|..." form used in serialized moment tables.
std::string key_to_string(const MomentKey& key);
MomentKey key_from_string(const std::string& text);

/// sum_m w_m prod_i mu_m(x_i, z_i). The empty sequence has moment 1.
double moment_value(const Rmmdp& model, std::span<const StateAction> pairs,
                    std::span<const int> rewards);

/// Flattened index of a reward pattern, first coordinate most significant.
std::size_t pattern_index(std::span<const int> rewards, int num_rewards);
std::vector<int> pattern_from_index(std::size_t index, std::size_t length, int num_rewards);
std::size_t pattern_count(std::size_t length, int num_rewards);

struct Trajectory {
  std::vector<Step> steps;
  std::optional<int> latent;  // diagnostics only
};

class Policy;

/// nu(s_1) prod T prod pi(a_t | h_t) M(x_{1:H}, r_{1:H}).
double trajectory_probability(const Rmmdp& model, const Policy& policy,
                              const Trajectory& trajectory);

struct Belief {
  std::vector<double> probs;
};

inline Belief prior_belief(const Rmmdp& model) { return Belief{model.weights}; }

/// Bayes posterior after observing reward z at `pair`.
Belief belief_update(const Rmmdp& model, const Belief& belief, StateAction pair, int z);

/// Posterior predictive P(z | b, s, a).
double predictive(const Rmmdp& model, const Belief& belief, int s, int a, int z);

}  // namespace rmm
