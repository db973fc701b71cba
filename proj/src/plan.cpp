#include "rmm/plan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <tuple>

#include "rmm/env.hpp"
#include "rmm/model_io.hpp"
#include "rmm/rng.hpp"

namespace rmm {

namespace {

constexpr const char* kPolicyFormat = "rmm-policy/1";

std::uint64_t fnv1a(const std::vector<std::int64_t>& values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::int64_t v : values) {
    auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (u >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::size_t BeliefPolicy::KeyHash::operator()(const Key& k) const {
  std::uint64_t h = fnv1a(k.belief);
  h = splitmix64(h ^ static_cast<std::uint64_t>(k.t));
  return static_cast<std::size_t>(splitmix64(h ^ (static_cast<std::uint64_t>(k.state) << 32)));
}

BeliefPolicy::BeliefPolicy(Rmmdp model, std::size_t memo_budget, double belief_quantum)
    : DeterministicPolicy(model.num_actions),
      model_(std::move(model)),
      memo_budget_(memo_budget),
      quantum_(belief_quantum) {
  if (!(belief_quantum > 0.0)) throw std::invalid_argument("belief quantum must be positive");
  check_dimensions(model_);
}

BeliefPolicy::Key BeliefPolicy::make_key(int t, int state, const Belief& belief) const {
  double total = 0.0;
  for (double b : belief.probs) total += b;
  Key key{t, state, {}};
  key.belief.reserve(belief.probs.size());
  for (double b : belief.probs) key.belief.push_back(std::llround(b / total / quantum_));
  return key;
}

const BeliefPolicy::Entry& BeliefPolicy::solve(int t, const Belief& belief, int state) const {
  Key key = make_key(t, state, belief);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  Entry entry;
  entry.belief = belief.probs;
  if (t < model_.horizon) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < model_.num_actions; ++a) {
      double q = 0.0;
      for (int z = 0; z < model_.num_rewards(); ++z) {
        const double pz = predictive(model_, belief, state, a, z);
        if (pz <= 0.0) continue;
        double future = 0.0;
        if (t + 1 < model_.horizon) {
          const Belief next = belief_update(model_, belief, {state, a}, z);
          for (int s2 = 0; s2 < model_.num_states; ++s2) {
            const double p = model_.T(state, a, s2);
            if (p > 0.0) future += p * solve(t + 1, next, s2).value;
          }
        }
        q += pz * (model_.support.value(z) + future);
      }
      if (q > best) {
        best = q;
        entry.action = a;
      }
    }
    entry.value = best;
  }
  if (memo_.size() >= memo_budget_) {
    throw ResourceError("belief planner memo exceeded its budget of " +
                        std::to_string(memo_budget_) + " entries after reaching " +
                        std::to_string(memo_.size()) + " (t, belief, state) nodes");
  }
  return memo_.emplace(std::move(key), std::move(entry)).first->second;
}

double BeliefPolicy::value_at(int t, const Belief& belief, int state) const {
  std::lock_guard lock(mutex_);
  return solve(t, belief, state).value;
}

double BeliefPolicy::value() const {
  const Belief prior = prior_belief(model_);
  std::lock_guard lock(mutex_);
  double v = 0.0;
  for (int s = 0; s < model_.num_states; ++s) {
    const double p = model_.init[static_cast<std::size_t>(s)];
    if (p > 0.0) v += p * solve(0, prior, s).value;
  }
  return v;
}

Belief BeliefPolicy::belief_after(std::span<const Step> past) const {
  Belief b = prior_belief(model_);
  for (const Step& step : past) {
    if (predictive(model_, b, step.state, step.action, step.reward) > 0.0) {
      b = belief_update(model_, b, {step.state, step.action}, step.reward);
    }
  }
  return b;
}

int BeliefPolicy::action(std::span<const Step> past, int state) const {
  const Belief b = belief_after(past);
  std::lock_guard lock(mutex_);
  return solve(static_cast<int>(past.size()), b, state).action;
}

std::size_t BeliefPolicy::memo_size() const {
  std::lock_guard lock(mutex_);
  return memo_.size();
}

nlohmann::json BeliefPolicy::to_json() const {
  std::lock_guard lock(mutex_);
  // Sort for a deterministic document.
  std::map<std::tuple<int, int, std::vector<std::int64_t>>, const Entry*> ordered;
  for (const auto& [key, entry] : memo_) {
    if (key.t < model_.horizon) ordered.emplace(std::make_tuple(key.t, key.state, key.belief), &entry);
  }
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [k, entry] : ordered) {
    const auto& [t, state, qb] = k;
    table.push_back({{"t", t},
                     {"state", state},
                     {"belief_hash", hex(fnv1a(qb))},
                     {"belief", entry->belief},
                     {"action", entry->action},
                     {"value", entry->value}});
  }
  nlohmann::json doc;
  doc["format"] = kPolicyFormat;
  doc["belief_quantum"] = quantum_;
  doc["model"] = model_to_json(model_);
  doc["decisions"] = std::move(table);
  return doc;
}

std::unique_ptr<BeliefPolicy> BeliefPolicy::from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != kPolicyFormat) {
    throw std::invalid_argument(std::string("policy document must carry \"format\": \"") +
                                kPolicyFormat + "\"");
  }
  auto policy = std::make_unique<BeliefPolicy>(model_from_json(doc.at("model")), kDefaultMemoBudget,
                                               doc.value("belief_quantum", kBeliefQuantum));
  for (const auto& row : doc.at("decisions")) {
    Entry entry;
    entry.belief = row.at("belief").get<std::vector<double>>();
    entry.action = row.at("action").get<int>();
    entry.value = row.at("value").get<double>();
    Key key = policy->make_key(row.at("t").get<int>(), row.at("state").get<int>(), Belief{entry.belief});
    policy->memo_.emplace(std::move(key), std::move(entry));
  }
  return policy;
}

PlanResult optimal_plan(const Rmmdp& model, std::size_t memo_budget, double belief_quantum) {
  PlanResult out;
  out.policy = std::make_unique<BeliefPolicy>(model, memo_budget, belief_quantum);
  out.value = out.policy->value();
  return out;
}

PolicyValue policy_value(const Rmmdp& model, const Policy& policy, const PolicyValueOptions& opts) {
  PolicyValue out;
  if (trajectory_space_size(model) <= opts.enumeration_budget) {
    const Rmmdp* models[] = {&model};
    const auto acc = accumulate_trajectories(
        models, policy, 1,
        [&model](std::span<const Step> steps, std::span<const double> probs, std::span<double> acc) {
          double ret = 0.0;
          for (const Step& s : steps) ret += model.support.value(s.reward);
          acc[0] += probs[0] * ret;
        },
        opts.exec, opts.enumeration_budget);
    out.value = acc[0];
    return out;
  }
  out.exact = false;
  out.episodes = opts.mc_episodes;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < opts.mc_episodes; ++i) {
    const auto rec = sample_episode(model, policy, derive_seed(opts.mc_seed, i));
    double ret = 0.0;
    for (const Step& s : rec.trajectory.steps) ret += model.support.value(s.reward);
    sum += ret;
    sum_sq += ret * ret;
  }
  const double n = static_cast<double>(opts.mc_episodes);
  out.value = sum / n;
  const double var = std::max(0.0, sum_sq / n - out.value * out.value);
  out.ci_halfwidth = 1.96 * std::sqrt(var / n);
  return out;
}

namespace {

class HistoryTree {
 public:
  explicit HistoryTree(const Rmmdp& model) : model_(model) {}

  // Joint-probability-weighted value of the subtree below (t, s) where
  // joint[m] = w_m * prod of reward likelihoods so far under context m.
  double node(int t, int s, const std::vector<double>& joint) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> child(joint.size());
    for (int a = 0; a < model_.num_actions; ++a) {
      double total = 0.0;
      for (int z = 0; z < model_.num_rewards(); ++z) {
        double mass = 0.0;
        for (std::size_t m = 0; m < joint.size(); ++m) {
          child[m] = joint[m] * model_.mu(static_cast<int>(m), s, a, z);
          mass += child[m];
        }
        if (mass == 0.0) continue;
        total += mass * model_.support.value(z);
        if (t + 1 < model_.horizon) {
          for (int s2 = 0; s2 < model_.num_states; ++s2) {
            const double p = model_.T(s, a, s2);
            if (p > 0.0) total += p * node(t + 1, s2, child);
          }
        }
      }
      best = std::max(best, total);
    }
    return best;
  }

 private:
  const Rmmdp& model_;
};

}  // namespace

double brute_force_optimal(const Rmmdp& model, double node_budget) {
  check_dimensions(model);
  const double branching =
      static_cast<double>(model.num_states) * model.num_actions * model.num_rewards();
  double nodes = 0.0, level = 1.0;
  for (int t = 0; t < model.horizon; ++t) {
    level *= branching;
    nodes += level;
  }
  if (nodes > node_budget) {
    throw ResourceError("history tree has " + std::to_string(nodes) + " nodes, budget " +
                        std::to_string(node_budget));
  }
  HistoryTree tree(model);
  double v = 0.0;
  for (int s = 0; s < model.num_states; ++s) {
    const double p = model.init[static_cast<std::size_t>(s)];
    if (p > 0.0) v += p * tree.node(0, s, model.weights);
  }
  return v;
}

}  // namespace rmm
