#include "rmm/moments.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace rmm {

void MomentTable::add_sample(std::span<const StateAction> pairs, std::span<const int> rewards) {
  if (pairs.empty()) throw std::invalid_argument("moment sample is empty");
  const CanonicalMoment c = canonicalize(pairs, rewards);
  auto& entry = entries_[c.key];
  if (entry.probs.empty()) entry.probs.assign(pattern_count(c.key.size(), num_rewards_), 0.0);
  entry.count += 1;
  const double inv = 1.0 / static_cast<double>(entry.count);
  const std::vector<std::size_t> hits = pattern_orbit(c.key, c.rewards, num_rewards_);
  const double share = inv / static_cast<double>(hits.size());
  for (double& p : entry.probs) p *= 1.0 - inv;
  for (std::size_t z : hits) entry.probs[z] += share;
}

std::vector<std::size_t> pattern_orbit(const MomentKey& key, std::span<const int> rewards,
                                       int num_rewards) {
  // Blocks of identical pairs; permute rewards within each block.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (std::size_t i = 0; i < key.size();) {
    std::size_t j = i + 1;
    while (j < key.size() && key.pairs[j] == key.pairs[i]) ++j;
    if (j - i > 1) blocks.emplace_back(i, j);
    i = j;
  }
  std::vector<int> z(rewards.begin(), rewards.end());
  for (auto [b, e] : blocks) std::sort(z.begin() + static_cast<std::ptrdiff_t>(b), z.begin() + static_cast<std::ptrdiff_t>(e));
  std::vector<std::size_t> out;
  while (true) {
    out.push_back(pattern_index(z, num_rewards));
    // Odometer over blocks, last block fastest.
    std::size_t k = blocks.size();
    while (k > 0) {
      auto [b, e] = blocks[k - 1];
      if (std::next_permutation(z.begin() + static_cast<std::ptrdiff_t>(b), z.begin() + static_cast<std::ptrdiff_t>(e))) break;
      --k;
    }
    if (k == 0) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

void MomentTable::set(const MomentKey& key, MomentEntry entry) {
  if (key.pairs.empty()) throw std::invalid_argument("moment key is empty");
  if (!std::is_sorted(key.pairs.begin(), key.pairs.end())) {
    throw std::invalid_argument("moment key " + key_to_string(key) + " is not canonical");
  }
  if (entry.probs.size() != pattern_count(key.size(), num_rewards_)) {
    throw std::invalid_argument("moment entry for " + key_to_string(key) +
                                " has the wrong number of patterns");
  }
  entries_[key] = std::move(entry);
}

const MomentEntry* MomentTable::find(const MomentKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::uint64_t MomentTable::count(const MomentKey& key) const {
  const MomentEntry* e = find(key);
  return e ? e->count : 0;
}

double MomentTable::empirical(const MomentKey& key, std::span<const int> rewards) const {
  const MomentEntry* e = find(key);
  if (!e) throw std::out_of_range("no moment entry for " + key_to_string(key));
  return e->probs[pattern_index(rewards, num_rewards_)];
}

std::size_t MomentTable::max_degree() const {
  std::size_t d = 0;
  for (const auto& [key, entry] : entries_) d = std::max(d, key.size());
  return d;
}

std::uint64_t MomentTable::total_samples() const {
  std::uint64_t n = 0;
  for (const auto& [key, entry] : entries_) n += entry.count;
  return n;
}

nlohmann::json MomentTable::to_json() const {
  nlohmann::json keys = nlohmann::json::object();
  for (const auto& [key, entry] : entries_) {
    keys[key_to_string(key)] = {{"count", entry.count}, {"probs", entry.probs}};
  }
  return {{"format", "rmm-moments/1"}, {"num_rewards", num_rewards_}, {"keys", keys}};
}

MomentTable MomentTable::from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != "rmm-moments/1") {
    throw std::invalid_argument("moment table must carry \"format\": \"rmm-moments/1\"");
  }
  MomentTable table(doc.at("num_rewards").get<int>());
  for (const auto& [text, value] : doc.at("keys").items()) {
    table.set(key_from_string(text), MomentEntry{value.at("count").get<std::uint64_t>(),
                                                 value.at("probs").get<std::vector<double>>()});
  }
  return table;
}

std::vector<MomentKey> all_canonical_keys(int num_states, int num_actions, int degree) {
  std::vector<StateAction> pairs;
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) pairs.push_back({s, a});
  }
  std::vector<MomentKey> out;
  // Non-decreasing index sequences enumerate multisets.
  for (int q = 1; q <= degree; ++q) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(q), 0);
    while (true) {
      MomentKey key;
      for (std::size_t i : idx) key.pairs.push_back(pairs[i]);
      out.push_back(std::move(key));
      int pos = q - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] + 1 == pairs.size()) --pos;
      if (pos < 0) break;
      const std::size_t next = idx[static_cast<std::size_t>(pos)] + 1;
      for (auto j = static_cast<std::size_t>(pos); j < idx.size(); ++j) idx[j] = next;
    }
  }
  return out;
}

MomentTable exact_moment_table(const Rmmdp& model, std::span<const MomentKey> keys,
                               std::uint64_t count) {
  MomentTable table(model.num_rewards());
  for (const MomentKey& key : keys) {
    MomentEntry entry;
    entry.count = count;
    const std::size_t n = pattern_count(key.size(), model.num_rewards());
    entry.probs.resize(n);
    for (std::size_t z = 0; z < n; ++z) {
      entry.probs[z] =
          moment_value(model, key.pairs, pattern_from_index(z, key.size(), model.num_rewards()));
    }
    table.set(key, std::move(entry));
  }
  return table;
}

}  // namespace rmm
