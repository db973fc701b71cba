#include "rmm/policy.hpp"

#include <algorithm>

#include "rmm/rng.hpp"

namespace rmm {

namespace {

std::uint64_t hash_history(std::uint64_t seed, std::span<const Step> past, int state) {
  std::uint64_t h = splitmix64(seed);
  for (const Step& step : past) {
    h = splitmix64(h ^ static_cast<std::uint64_t>(step.state));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(step.action) << 20));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(step.reward) << 40));
  }
  return splitmix64(h ^ (static_cast<std::uint64_t>(state) + 0x5bd1e995ULL));
}

}  // namespace

void DeterministicPolicy::distribution(std::span<const Step> past, int state,
                                       std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  out[static_cast<std::size_t>(action(past, state))] = 1.0;
}

int OpenLoopPolicy::action(std::span<const Step> past, int) const {
  return actions_[std::min(past.size(), actions_.size() - 1)];
}

int ReactivePolicy::action(std::span<const Step> past, int state) const {
  return table_[past.size() * static_cast<std::size_t>(num_states_) +
                static_cast<std::size_t>(state)];
}

std::vector<ReactivePolicy> all_reactive_policies(int num_states, int num_actions, int horizon,
                                                  std::size_t limit) {
  const std::size_t cells = static_cast<std::size_t>(num_states) * static_cast<std::size_t>(horizon);
  std::size_t count = 1;
  for (std::size_t i = 0; i < cells; ++i) {
    count *= static_cast<std::size_t>(num_actions);
    if (count > limit) return {};
  }
  std::vector<ReactivePolicy> out;
  out.reserve(count);
  std::vector<int> table(cells, 0);
  for (std::size_t n = 0; n < count; ++n) {
    out.emplace_back(num_states, num_actions, table);
    for (std::size_t c = 0; c < cells; ++c) {
      if (++table[c] < num_actions) break;
      table[c] = 0;
    }
  }
  return out;
}

void UniformPolicy::distribution(std::span<const Step>, int, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 1.0 / num_actions_);
}

int HashedHistoryPolicy::action(std::span<const Step> past, int state) const {
  return static_cast<int>(hash_history(seed_, past, state) %
                          static_cast<std::uint64_t>(num_actions()));
}

void HashedStochasticPolicy::distribution(std::span<const Step> past, int state,
                                          std::span<double> out) const {
  std::uint64_t h = hash_history(seed_, past, state);
  double total = 0.0;
  for (double& p : out) {
    h = splitmix64(h);
    p = 0.05 + static_cast<double>(h >> 11) * 0x1.0p-53;
    total += p;
  }
  for (double& p : out) p /= total;
}

}  // namespace rmm
