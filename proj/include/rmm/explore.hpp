#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"
#include "rmm/enumerate.hpp"
#include "rmm/env.hpp"
#include "rmm/moments.hpp"

namespace rmm {

struct ExplorationConfig {
  int degree = 2;
  double epsilon = 0.1;
  double eta = 0.1;
  std::uint64_t max_episodes = 10'000;
  std::uint64_t batch = 1;  // episodes between backward-induction recomputes
  double c_c = 2.0;
  double c_T = 2.0;
  double c_nu = 2.0;
  std::uint64_t seed = 0;
  Execution exec = Execution::serial;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct ConfidenceConstants {
  double iota_c = 0.0;
  double iota_T = 0.0;
  double iota_nu = 0.0;
  int levels = 1;         // L
  double eps_pe = 0.0;
};

/// iota_c = c_c d ln(2SAZ K/eta), iota_T = c_T S ln(2SA K/eta),
/// iota_nu = c_nu S ln(2K/eta), eps_pe = eps / (H L (4 H^2 Z)^d).
ConfidenceConstants confidence_constants(const EnvironmentShape& shape,
                                         const ExplorationConfig& cfg);

/// Empirical transition kernel and initial distribution.
class TransitionEstimate {
 public:
  TransitionEstimate() = default;
  TransitionEstimate(int num_states, int num_actions);

  /// Counts every visited pair and every observed transition s_t -> s_{t+1}.
  void add_episode(const Trajectory& trajectory);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  std::uint64_t episodes() const { return episodes_; }
  /// n_T(s, a): visits, including the final step of each episode.
  std::uint64_t visits(int s, int a) const { return visits_[index(s, a)]; }
  /// False when no transition out of (s, a) was observed; T_hat is uniform there.
  bool observed(int s, int a) const { return row_totals_[index(s, a)] > 0; }
  double transition(int s, int a, int next) const;
  double init(int s) const;

  std::vector<double> transition_matrix() const;
  std::vector<double> init_distribution() const;

  nlohmann::json to_json() const;
  static TransitionEstimate from_json(const nlohmann::json& doc);

  bool operator==(const TransitionEstimate&) const = default;

 private:
  std::size_t index(int s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
           static_cast<std::size_t>(a);
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  std::uint64_t episodes_ = 0;
  std::vector<std::uint64_t> transition_counts_;
  std::vector<std::uint64_t> row_totals_;
  std::vector<std::uint64_t> visits_;
  std::vector<std::uint64_t> init_counts_;
};

/// Tabulation of the d-th order MDP. Once a sample is committed the slots no
/// longer influence anything, so all committed states share one node;
/// uncommitted nodes are the time-ordered prefixes of length 0..d-1.
class AugmentedSpace {
 public:
  AugmentedSpace(int num_states, int num_actions, int degree);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int degree() const { return degree_; }
  int num_nodes() const { return static_cast<int>(node_length_.size()); }
  int committed_node() const { return num_nodes() - 1; }
  static constexpr int root() { return 0; }

  int node_of(const AugmentedState& state) const;
  int next_node(int node, int s, int a, int flag) const;
  /// Dense id of the key committed by (node, s, a, flag), or -1.
  int commit_key(int node, int s, int a, int flag) const;

  /// Every canonical key of length 1..d, indexed by dense id.
  const std::vector<MomentKey>& keys() const { return keys_; }
  int key_id(const MomentKey& key) const;

 private:
  int num_states_;
  int num_actions_;
  int degree_;
  std::vector<int> node_length_;
  std::vector<int> child_;       // [node * SA + x], -1 if full
  std::vector<int> commit_key_;  // [node * SA + x]
  std::vector<MomentKey> keys_;
  std::map<MomentKey, int> key_ids_;
};

/// Flag order used for tie-breaking and for the packed action index a*3+b.
inline constexpr int kFlagOrder[3] = {0, 1, -1};

struct OptimisticValues {
  int horizon = 0;
  int num_nodes = 0;
  int num_states = 0;
  int num_actions = 0;
  double v0 = 1.0;
  std::vector<double> value;  // [(t * N + node) * S + s]
  std::vector<double> q;      // [((t * N + node) * S + s) * 3A + a * 3 + b]
  std::vector<int> greedy;    // packed a * 3 + b, same layout as value

  std::size_t cell(int t, int node, int s) const {
    return (static_cast<std::size_t>(t) * num_nodes + node) * num_states + s;
  }
  AugmentedAction greedy_action(int t, int node, int s) const {
    const int g = greedy[cell(t, node, s)];
    return AugmentedAction{g / 3, kFlagOrder[g % 3]};
  }
};

/// Optimistic backward induction over the tabulated d-th order MDP.
/// key_counts[id] is n(x) for keys()[id]; k is the index of the episode
/// about to run (k >= 1).
OptimisticValues compute_optimistic(const AugmentedSpace& space, int horizon,
                                    const std::vector<std::uint64_t>& key_counts,
                                    const TransitionEstimate& transitions,
                                    const ConfidenceConstants& constants, std::uint64_t k,
                                    Execution exec = Execution::serial);

/// Convenience overload reading the counts from a moment table.
OptimisticValues compute_optimistic(const MomentTable& table, const TransitionEstimate& transitions,
                                    const EnvironmentShape& shape, const ExplorationConfig& cfg,
                                    std::uint64_t k);

class GreedyAugmentedPolicy final : public AugmentedPolicy {
 public:
  GreedyAugmentedPolicy(const AugmentedSpace& space, const OptimisticValues& values)
      : space_(space), values_(values) {}
  AugmentedAction act(int t, const AugmentedState& state) const override {
    return values_.greedy_action(t, space_.node_of(state), state.state);
  }

 private:
  const AugmentedSpace& space_;
  const OptimisticValues& values_;
};

/// Exact probability, under `model`, that one episode of the greedy policy
/// commits each key. Indexed like space.keys().
std::vector<double> commit_distribution(const AugmentedSpace& space, const OptimisticValues& values,
                                        const Rmmdp& model);

struct ExploreLogRow {
  std::uint64_t episode = 0;
  double v_tilde_0 = 0.0;
  std::uint64_t commits_total = 0;
};

struct ExplorationHooks {
  /// Called with the values that drive episode k, before it runs.
  std::function<void(std::uint64_t k, const AugmentedSpace&, const OptimisticValues&)> before_episode;
  std::function<void(const EpisodeRecord&)> after_episode;
};

struct ExplorationResult {
  MomentTable moments;
  TransitionEstimate transitions;
  std::vector<ExploreLogRow> log;
  ConfidenceConstants constants;
  std::uint64_t episodes = 0;
  bool budget_exhausted = false;
  double final_v0 = 1.0;
};

/// Pure exploration of moments up to degree cfg.degree. Runs until
/// V~_0 <= eps_pe or max_episodes episodes have been played.
ExplorationResult estimate_moments(Environment& env, const ExplorationConfig& cfg,
                                   const ExplorationHooks& hooks = {});

/// "episode,v_tilde_0,commits_total" header plus one row per episode.
std::string explore_log_csv(const std::vector<ExploreLogRow>& log);

}  // namespace rmm
