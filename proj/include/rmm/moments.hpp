#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "rmm/core.hpp"

namespace rmm {

/// Empirical moment estimate for one canonical key: sample count and the
/// distribution over reward patterns (pattern_index order).
struct MomentEntry {
  std::uint64_t count = 0;
  std::vector<double> probs;

  bool operator==(const MomentEntry&) const = default;
};

class MomentTable {
 public:
  explicit MomentTable(int num_rewards = 2) : num_rewards_(num_rewards) {}

  /// Canonicalizes (pairs, rewards), bumps n(x) and applies the running
  /// average M_n <- (1 - 1/n) M_n + 1{z = z_c} / n, with the indicator
  /// spread evenly over the reward patterns that canonicalize to z_c. M_n(x, .)
  /// therefore estimates M(x, .) pattern by pattern.
  void add_sample(std::span<const StateAction> pairs, std::span<const int> rewards);

  /// Overwrites an entry; `key` must be canonical and probs sized Z^|key|.
  void set(const MomentKey& key, MomentEntry entry);

  const MomentEntry* find(const MomentKey& key) const;
  std::uint64_t count(const MomentKey& key) const;
  /// M_n(x, z) for canonical x and matching z.
  double empirical(const MomentKey& key, std::span<const int> rewards) const;

  const std::map<MomentKey, MomentEntry>& entries() const { return entries_; }
  int num_rewards() const { return num_rewards_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t max_degree() const;
  std::uint64_t total_samples() const;

  nlohmann::json to_json() const;
  static MomentTable from_json(const nlohmann::json& doc);

  bool operator==(const MomentTable&) const = default;

 private:
  int num_rewards_;
  std::map<MomentKey, MomentEntry> entries_;
};

/// Indices of every reward pattern obtained by permuting `rewards` within
/// blocks of identical pairs of `key` (sorted, distinct).
std::vector<std::size_t> pattern_orbit(const MomentKey& key, std::span<const int> rewards,
                                       int num_rewards);

/// Every canonical key (multiset of state-action pairs) of length 1..degree.
std::vector<MomentKey> all_canonical_keys(int num_states, int num_actions, int degree);

/// Table holding the exact moments of `model` for the given keys, each with
/// the same nominal count.
MomentTable exact_moment_table(const Rmmdp& model, std::span<const MomentKey> keys,
                               std::uint64_t count);

}  // namespace rmm
