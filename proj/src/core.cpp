#include "rmm/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rmm/policy.hpp"

namespace rmm {

namespace {

std::string fmt_residual(double sum) {
  std::ostringstream os;
  os.precision(17);
  os << sum;
  return os.str();
}

double row_sum(std::span<const double> row) { return std::accumulate(row.begin(), row.end(), 0.0); }

// Appends a violation for a probability row; returns nothing.
void check_row(std::span<const double> row, const std::string& label,
               std::vector<std::string>& out) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!(row[i] >= 0.0 && row[i] <= 1.0)) {
      out.push_back(label + " entry " + std::to_string(i) + " out of [0,1]: " +
                    fmt_residual(row[i]));
    }
  }
  const double sum = row_sum(row);
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    out.push_back(label + " sum " + fmt_residual(sum) + " (residual " +
                  fmt_residual(sum - 1.0) + ")");
  }
}

// Rows already exact to a few ulps are left bit-for-bit untouched so that
// save/load is a fixed point.
constexpr double kExactEnough = 1e-15;

void rescale(std::span<double> row) {
  const double sum = std::accumulate(row.begin(), row.end(), 0.0);
  if (sum > 0.0 && std::abs(sum - 1.0) > kExactEnough && std::abs(sum - 1.0) <= kSimplexTolerance) {
    for (double& v : row) v /= sum;
  }
}

}  // namespace

RewardSupport::RewardSupport(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("reward support is empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(std::abs(values_[i]) <= 1.0)) {
      throw std::invalid_argument("reward value " + fmt_residual(values_[i]) + " has |z| > 1");
    }
    if (i > 0 && !(values_[i] > values_[i - 1])) {
      throw std::invalid_argument("reward support must be strictly increasing");
    }
  }
}

Rmmdp make_empty_model(int num_states, int num_actions, int horizon, RewardSupport support,
                       int num_contexts) {
  Rmmdp model;
  model.num_states = num_states;
  model.num_actions = num_actions;
  model.horizon = horizon;
  model.support = std::move(support);
  const auto S = static_cast<std::size_t>(num_states);
  const auto A = static_cast<std::size_t>(num_actions);
  const auto M = static_cast<std::size_t>(num_contexts);
  model.transition.assign(S * A * S, 0.0);
  model.init.assign(S, 0.0);
  model.weights.assign(M, 0.0);
  model.rewards.assign(M * S * A * static_cast<std::size_t>(model.num_rewards()), 0.0);
  return model;
}

void check_dimensions(const Rmmdp& model) {
  if (model.num_states < 1 || model.num_actions < 1 || model.horizon < 1) {
    throw std::invalid_argument("S, A and H must be positive");
  }
  if (model.support.size() < 1) throw std::invalid_argument("reward support is empty");
  if (model.weights.empty()) throw std::invalid_argument("model has no contexts");
  const auto S = static_cast<std::size_t>(model.num_states);
  const auto A = static_cast<std::size_t>(model.num_actions);
  const auto Z = static_cast<std::size_t>(model.num_rewards());
  const auto M = model.weights.size();
  if (model.transition.size() != S * A * S) {
    throw std::invalid_argument("transition array has " + std::to_string(model.transition.size()) +
                                " entries, expected " + std::to_string(S * A * S));
  }
  if (model.init.size() != S) {
    throw std::invalid_argument("init array has " + std::to_string(model.init.size()) +
                                " entries, expected " + std::to_string(S));
  }
  if (model.rewards.size() != M * S * A * Z) {
    throw std::invalid_argument("reward array has " + std::to_string(model.rewards.size()) +
                                " entries, expected " + std::to_string(M * S * A * Z));
  }
}

std::vector<std::string> validate_model(const Rmmdp& model) {
  check_dimensions(model);
  std::vector<std::string> out;
  for (int s = 0; s < model.num_states; ++s) {
    for (int a = 0; a < model.num_actions; ++a) {
      check_row(model.transition_row(s, a),
                "transition (s=" + std::to_string(s) + ",a=" + std::to_string(a) + ")", out);
    }
  }
  check_row(model.init, "init", out);
  check_row(model.weights, "weights", out);
  for (int m = 0; m < model.num_contexts(); ++m) {
    for (int s = 0; s < model.num_states; ++s) {
      for (int a = 0; a < model.num_actions; ++a) {
        check_row(model.reward_row(m, s, a),
                  "rewards (m=" + std::to_string(m) + ",s=" + std::to_string(s) +
                      ",a=" + std::to_string(a) + ")",
                  out);
      }
    }
  }
  return out;
}

void renormalize(Rmmdp& model) {
  check_dimensions(model);
  const auto S = static_cast<std::size_t>(model.num_states);
  const auto Z = static_cast<std::size_t>(model.num_rewards());
  for (std::size_t r = 0; r < model.transition.size() / S; ++r) {
    rescale(std::span<double>(model.transition).subspan(r * S, S));
  }
  rescale(model.init);
  rescale(model.weights);
  for (std::size_t r = 0; r < model.rewards.size() / Z; ++r) {
    rescale(std::span<double>(model.rewards).subspan(r * Z, Z));
  }
}

bool same_dynamics(const Rmmdp& a, const Rmmdp& b) {
  return a.num_states == b.num_states && a.num_actions == b.num_actions &&
         a.horizon == b.horizon && a.support == b.support && a.transition == b.transition &&
         a.init == b.init;
}

CanonicalMoment canonicalize(std::span<const StateAction> pairs, std::span<const int> rewards) {
  if (pairs.size() != rewards.size()) {
    throw std::invalid_argument("canonicalize: pair and reward sequences differ in length");
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return pairs[i] < pairs[j]; });
  CanonicalMoment out;
  out.key.pairs.reserve(pairs.size());
  out.rewards.reserve(pairs.size());
  for (std::size_t i : order) {
    out.key.pairs.push_back(pairs[i]);
    out.rewards.push_back(rewards[i]);
  }
  // Rewards at a repeated pair are exchangeable within a context.
  std::size_t begin = 0;
  while (begin < out.key.pairs.size()) {
    std::size_t end = begin + 1;
    while (end < out.key.pairs.size() && out.key.pairs[end] == out.key.pairs[begin]) ++end;
    std::sort(out.rewards.begin() + static_cast<std::ptrdiff_t>(begin),
              out.rewards.begin() + static_cast<std::ptrdiff_t>(end));
    begin = end;
  }
  return out;
}

std::string key_to_string(const MomentKey& key) {
  std::string out;
  for (std::size_t i = 0; i < key.pairs.size(); ++i) {
    if (i > 0) out += '|';
    out += std::to_string(key.pairs[i].state) + "," + std::to_string(key.pairs[i].action);
  }
  return out;
}

MomentKey key_from_string(const std::string& text) {
  MomentKey key;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, '|')) {
    const auto comma = token.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("bad moment key: " + text);
    key.pairs.push_back({std::stoi(token.substr(0, comma)), std::stoi(token.substr(comma + 1))});
  }
  if (key.pairs.empty()) throw std::invalid_argument("empty moment key");
  return key;
}

double moment_value(const Rmmdp& model, std::span<const StateAction> pairs,
                    std::span<const int> rewards) {
  if (pairs.size() != rewards.size()) {
    throw std::invalid_argument("moment_value: pair and reward sequences differ in length");
  }
  double total = 0.0;
  for (int m = 0; m < model.num_contexts(); ++m) {
    double prod = model.weights[static_cast<std::size_t>(m)];
    for (std::size_t i = 0; i < pairs.size() && prod != 0.0; ++i) {
      prod *= model.mu(m, pairs[i].state, pairs[i].action, rewards[i]);
    }
    total += prod;
  }
  return total;
}

std::size_t pattern_index(std::span<const int> rewards, int num_rewards) {
  std::size_t idx = 0;
  for (int z : rewards) idx = idx * static_cast<std::size_t>(num_rewards) + static_cast<std::size_t>(z);
  return idx;
}

std::vector<int> pattern_from_index(std::size_t index, std::size_t length, int num_rewards) {
  std::vector<int> out(length);
  for (std::size_t i = length; i-- > 0;) {
    out[i] = static_cast<int>(index % static_cast<std::size_t>(num_rewards));
    index /= static_cast<std::size_t>(num_rewards);
  }
  return out;
}

std::size_t pattern_count(std::size_t length, int num_rewards) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < length; ++i) n *= static_cast<std::size_t>(num_rewards);
  return n;
}

double trajectory_probability(const Rmmdp& model, const Policy& policy,
                              const Trajectory& trajectory) {
  const auto& steps = trajectory.steps;
  if (static_cast<int>(steps.size()) != model.horizon) {
    throw std::invalid_argument("trajectory length differs from the horizon");
  }
  double p = model.init[static_cast<std::size_t>(steps.front().state)];
  std::vector<double> probs(static_cast<std::size_t>(model.num_actions));
  std::vector<StateAction> pairs;
  std::vector<int> rewards;
  for (std::size_t t = 0; t < steps.size() && p != 0.0; ++t) {
    if (t > 0) p *= model.T(steps[t - 1].state, steps[t - 1].action, steps[t].state);
    policy.distribution(std::span<const Step>(steps).first(t), steps[t].state, probs);
    p *= probs[static_cast<std::size_t>(steps[t].action)];
    pairs.push_back({steps[t].state, steps[t].action});
    rewards.push_back(steps[t].reward);
  }
  if (p == 0.0) return 0.0;
  return p * moment_value(model, pairs, rewards);
}

double predictive(const Rmmdp& model, const Belief& belief, int s, int a, int z) {
  double p = 0.0;
  for (int m = 0; m < model.num_contexts(); ++m) {
    p += belief.probs[static_cast<std::size_t>(m)] * model.mu(m, s, a, z);
  }
  return p;
}

Belief belief_update(const Rmmdp& model, const Belief& belief, StateAction pair, int z) {
  Belief next{belief.probs};
  double norm = 0.0;
  for (int m = 0; m < model.num_contexts(); ++m) {
    auto& b = next.probs[static_cast<std::size_t>(m)];
    b *= model.mu(m, pair.state, pair.action, z);
    norm += b;
  }
  if (!(norm > 0.0)) {
    throw ImpossibleObservation("impossible observation: reward " + std::to_string(z) +
                                " at (s=" + std::to_string(pair.state) +
                                ",a=" + std::to_string(pair.action) + ")");
  }
  for (double& b : next.probs) b /= norm;
  return next;
}

}  // namespace rmm
