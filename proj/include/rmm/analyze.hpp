#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"
#include "rmm/enumerate.hpp"
#include "rmm/moments.hpp"
#include "rmm/policy.hpp"

namespace rmm {

/// Predicate over the state-action part x_{1:H} of a trajectory.
using SequenceEvent = std::function<bool(std::span<const StateAction>)>;

/// Default cap on (S*A)^H prefixes for the sup-event dynamic program.
inline constexpr double kPrefixBudget = 1e6;

/// Thresholds n_0 = K / (SA)^d, n_{l+1} = n_l / 4 and the trajectory levels
/// they induce. Level l of x is the smallest l <= L such that every
/// subsequence of length <= d has count >= n_l, else L + 1.
class LevelStructure {
 public:
  LevelStructure(std::map<MomentKey, std::uint64_t> counts, double episodes, int num_pairs,
                 int degree, double iota_c);

  int levels() const { return L_; }  // L
  double n0() const { return thresholds_.front(); }
  /// n_0 .. n_L
  const std::vector<double>& thresholds() const { return thresholds_; }
  int degree() const { return degree_; }

  std::uint64_t count(const MomentKey& key) const;
  /// Smallest l <= L with n(key) >= n_l, else L + 1.
  int key_level(const MomentKey& key) const;
  /// Index l of the disjoint event E'_l containing x.
  int level_of(std::span<const StateAction> x) const;
  /// Membership in E_l (nested, E_{L+1} is everything).
  bool in_cumulative(std::span<const StateAction> x, int l) const { return level_of(x) <= l; }
  SequenceEvent disjoint_event(int l) const;

 private:
  std::map<MomentKey, std::uint64_t> counts_;
  std::vector<double> thresholds_;
  int L_ = 0;
  int degree_ = 1;
};

LevelStructure build_levels(const MomentTable& table, double episodes, int num_pairs, int degree,
                            double iota_c);

/// sup over history-dependent policies of P(x_{1:H} in event). Rewards never
/// influence transitions, so a DP over state-action prefixes is exact.
double sup_event_probability(const Rmmdp& model, const SequenceEvent& event,
                             double budget = kPrefixBudget);

/// Optimal value of the same DP from a given prefix ending in `state`.
double sup_event_probability_from(const Rmmdp& model, const SequenceEvent& event,
                                  std::span<const StateAction> prefix, int state,
                                  double budget = kPrefixBudget);

/// p(x): sup over policies of the probability that x_{1:H} contains x as a
/// (not necessarily consecutive) ordered subsequence.
double subsequence_reach(const Rmmdp& model, std::span<const StateAction> x);

/// max over keys, nonempty index subsets and reward patterns of
/// |M1(x_I, z) - M2(x_I, z)|. Keys longer than d are rejected; with no keys
/// every canonical key of length d is used.
double moment_mismatch(const Rmmdp& m1, const Rmmdp& m2, std::span<const MomentKey> keys, int d);

/// Same maximum restricted to subsequences (length <= d) of sequences in
/// the event.
double event_moment_mismatch(const Rmmdp& m1, const Rmmdp& m2, const SequenceEvent& event, int d,
                             double budget = kPrefixBudget);

/// sum over trajectories with x in event of |P1 - P2|.
double tv_on_event(const Rmmdp& m1, const Rmmdp& m2, const Policy& policy,
                   const SequenceEvent& event, Execution exec = Execution::parallel);

struct TvCheck {
  std::string policy;
  int event = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = true;
};

struct TvBoundReport {
  int degree = 0;
  std::vector<double> delta;        // per event
  std::vector<double> sup_prob;     // per event, under m1
  std::vector<TvCheck> checks;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // max lhs / rhs over checks with rhs > 0
};

/// Checks lhs <= sup_pi P1(E) (4HZ)^d delta_E for every policy and event.
TvBoundReport verify_tv_bound(const Rmmdp& m1, const Rmmdp& m2, int d,
                              std::span<const Policy* const> policies,
                              std::span<const std::string> policy_names,
                              std::span<const SequenceEvent> events,
                              Execution exec = Execution::parallel);

nlohmann::json tv_report_to_json(const TvBoundReport& report);

/// min(2M - 1, H).
int default_degree(int num_contexts, int horizon);

/// Exploration strategy across K episodes: the policy of episode k may
/// depend on all earlier trajectories. The information identity is exact
/// only when, inside an episode, actions ignore that episode's rewards.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual int num_actions() const = 0;
  virtual void distribution(std::span<const Trajectory> previous, std::span<const Step> past,
                            int state, std::span<double> out) const = 0;
};

/// Same policy in every episode.
class StationaryStrategy final : public Strategy {
 public:
  explicit StationaryStrategy(const Policy& policy) : policy_(policy) {}
  int num_actions() const override { return policy_.num_actions(); }
  void distribution(std::span<const Trajectory>, std::span<const Step> past, int state,
                    std::span<double> out) const override {
    policy_.distribution(past, state, out);
  }

 private:
  const Policy& policy_;
};

/// Plays the action with the best average reward observed in earlier
/// episodes at the current state; untried actions first, ties to the lowest.
class GreedyStrategy final : public Strategy {
 public:
  GreedyStrategy(int num_actions, RewardSupport support)
      : num_actions_(num_actions), support_(std::move(support)) {}
  int num_actions() const override { return num_actions_; }
  void distribution(std::span<const Trajectory> previous, std::span<const Step> past, int state,
                    std::span<double> out) const override;

 private:
  int num_actions_;
  RewardSupport support_;
};

/// Stochastic; weights hashed from every earlier episode and the current
/// episode's states and actions.
class HashedStrategy final : public Strategy {
 public:
  HashedStrategy(int num_actions, std::uint64_t seed) : num_actions_(num_actions), seed_(seed) {}
  int num_actions() const override { return num_actions_; }
  void distribution(std::span<const Trajectory> previous, std::span<const Step> past, int state,
                    std::span<double> out) const override;

 private:
  int num_actions_;
  std::uint64_t seed_;
};

/// KL(M1(x, .) || M2(x, .)) over reward sequences of the full sequence x, in nats.
/// Returns +inf when M2 puts zero mass where M1 does not.
double sequence_kl(const Rmmdp& m1, const Rmmdp& m2, std::span<const StateAction> x);

struct KlIdentity {
  double lhs = 0.0;  // sum_x E1[N_x(K)] KL(M1(x,.) || M2(x,.))
  double rhs = 0.0;  // KL over K-tuples of trajectories
  bool infinite = false;
  double gap() const { return lhs - rhs; }
};

/// Both sides computed by exhaustive enumeration of the K episodes. If the
/// strategy reacts to rewards within an episode the two sides can differ.
/// Throws ResourceError when (S*A*Z)^(H*K) exceeds `budget`.
KlIdentity kl_identity(const Rmmdp& m1, const Rmmdp& m2, const Strategy& strategy, int episodes,
                       double budget = 2e7);

/// P_pi(x in E'_l) for l = 0..L+1.
std::vector<double> level_probabilities(const Rmmdp& model, const Policy& policy,
                                        const LevelStructure& levels,
                                        Execution exec = Execution::parallel);

/// "level,threshold,probability,sup_probability"; threshold is empty for L+1.
std::string level_histogram_csv(const LevelStructure& levels, std::span<const double> probability,
                                std::span<const double> sup_probability);

}  // namespace rmm
