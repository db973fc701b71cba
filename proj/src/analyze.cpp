#include "rmm/analyze.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rmm/model_io.hpp"
#include "rmm/rng.hpp"

namespace rmm {

namespace {

MomentKey sorted_key(std::vector<StateAction> pairs) {
  std::sort(pairs.begin(), pairs.end());
  return MomentKey{std::move(pairs)};
}

// Calls f(sub) for every subsequence of x with 1..max_len elements.
template <class F>
void for_each_subsequence(std::span<const StateAction> x, std::size_t max_len, F&& f) {
  std::vector<StateAction> cur;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    for (std::size_t i = start; i < x.size(); ++i) {
      cur.push_back(x[i]);
      f(std::span<const StateAction>(cur));
      if (cur.size() < max_len) self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
}

double int_pow(double base, int exp) {
  double r = 1.0;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

void check_comparable(const Rmmdp& m1, const Rmmdp& m2) {
  check_dimensions(m1);
  check_dimensions(m2);
  if (m1.num_states != m2.num_states || m1.num_actions != m2.num_actions ||
      !(m1.support == m2.support)) {
    throw std::invalid_argument("models differ in S, A or reward support");
  }
}

void require_same_dynamics(const Rmmdp& m1, const Rmmdp& m2) {
  check_comparable(m1, m2);
  if (!same_dynamics(m1, m2)) {
    throw std::invalid_argument("models must share transitions, initial distribution and horizon");
  }
}

double mismatch_over(const Rmmdp& m1, const Rmmdp& m2, const std::set<MomentKey>& keys) {
  const int Z = m1.num_rewards();
  double worst = 0.0;
  for (const MomentKey& key : keys) {
    const std::size_t P = pattern_count(key.size(), Z);
    for (std::size_t p = 0; p < P; ++p) {
      const auto z = pattern_from_index(p, key.size(), Z);
      worst = std::max(worst, std::abs(moment_value(m1, key.pairs, z) -
                                       moment_value(m2, key.pairs, z)));
    }
  }
  return worst;
}

double sup_rec(const Rmmdp& model, const SequenceEvent& event, std::vector<StateAction>& prefix,
               int state) {
  double best = 0.0;
  const bool last = static_cast<int>(prefix.size()) + 1 == model.horizon;
  for (int a = 0; a < model.num_actions; ++a) {
    prefix.push_back({state, a});
    double v = 0.0;
    if (last) {
      v = event(prefix) ? 1.0 : 0.0;
    } else {
      for (int next = 0; next < model.num_states; ++next) {
        const double p = model.T(state, a, next);
        if (p > 0.0) v += p * sup_rec(model, event, prefix, next);
      }
    }
    prefix.pop_back();
    best = std::max(best, v);
    if (best >= 1.0) break;
  }
  return best;
}

void check_prefix_budget(const Rmmdp& model, int remaining, double budget) {
  const double size = int_pow(static_cast<double>(model.num_pairs()), remaining);
  if (size > budget) {
    std::ostringstream os;
    os << "state-action prefix space " << size << " exceeds budget " << budget;
    throw ResourceError(os.str());
  }
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ v); }

}  // namespace

LevelStructure::LevelStructure(std::map<MomentKey, std::uint64_t> counts, double episodes,
                               int num_pairs, int degree, double iota_c)
    : counts_(std::move(counts)), degree_(degree) {
  if (degree < 1) throw std::invalid_argument("degree must be >= 1");
  if (num_pairs < 1) throw std::invalid_argument("num_pairs must be >= 1");
  if (!(episodes > 0.0)) throw std::invalid_argument("episode count must be positive");
  const double n0 = episodes / int_pow(static_cast<double>(num_pairs), degree);
  thresholds_.push_back(n0);
  while (thresholds_.back() / 4.0 > iota_c) thresholds_.push_back(thresholds_.back() / 4.0);
  L_ = static_cast<int>(thresholds_.size()) - 1;
}

std::uint64_t LevelStructure::count(const MomentKey& key) const {
  const auto it = counts_.find(key);
  return it == counts_.end() ? 0 : it->second;
}

int LevelStructure::key_level(const MomentKey& key) const {
  const auto n = static_cast<double>(count(key));
  for (int l = 0; l <= L_; ++l) {
    if (n >= thresholds_[static_cast<std::size_t>(l)]) return l;
  }
  return L_ + 1;
}

int LevelStructure::level_of(std::span<const StateAction> x) const {
  int level = 0;
  for_each_subsequence(x, static_cast<std::size_t>(degree_), [&](std::span<const StateAction> sub) {
    if (level > L_) return;
    level = std::max(level, key_level(sorted_key({sub.begin(), sub.end()})));
  });
  return level;
}

SequenceEvent LevelStructure::disjoint_event(int l) const {
  return [this, l](std::span<const StateAction> x) { return level_of(x) == l; };
}

LevelStructure build_levels(const MomentTable& table, double episodes, int num_pairs, int degree,
                            double iota_c) {
  std::map<MomentKey, std::uint64_t> counts;
  for (const auto& [key, entry] : table.entries()) counts.emplace(key, entry.count);
  return LevelStructure(std::move(counts), episodes, num_pairs, degree, iota_c);
}

double sup_event_probability_from(const Rmmdp& model, const SequenceEvent& event,
                                  std::span<const StateAction> prefix, int state, double budget) {
  check_dimensions(model);
  const int t = static_cast<int>(prefix.size());
  if (t >= model.horizon) throw std::invalid_argument("prefix is as long as the horizon");
  check_prefix_budget(model, model.horizon - t, budget);
  std::vector<StateAction> buf(prefix.begin(), prefix.end());
  return sup_rec(model, event, buf, state);
}

double sup_event_probability(const Rmmdp& model, const SequenceEvent& event, double budget) {
  check_dimensions(model);
  check_prefix_budget(model, model.horizon, budget);
  std::vector<StateAction> prefix;
  double total = 0.0;
  for (int s = 0; s < model.num_states; ++s) {
    const double p = model.init[static_cast<std::size_t>(s)];
    if (p > 0.0) total += p * sup_rec(model, event, prefix, s);
  }
  return total;
}

double subsequence_reach(const Rmmdp& model, std::span<const StateAction> x) {
  check_dimensions(model);
  const int H = model.horizon;
  const int S = model.num_states;
  const auto len = x.size();
  if (len == 0) return 1.0;
  if (static_cast<int>(len) > H) return 0.0;
  // value[(s * (len + 1)) + j] at time t: best probability of finishing the match
  // from state s with j pairs already matched.
  const std::size_t width = len + 1;
  std::vector<double> next(static_cast<std::size_t>(S) * width, 0.0);
  for (int s = 0; s < S; ++s) next[static_cast<std::size_t>(s) * width + len] = 1.0;
  std::vector<double> cur(next.size());
  for (int t = H - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      for (std::size_t j = 0; j <= len; ++j) {
        double best = 0.0;
        for (int a = 0; a < model.num_actions; ++a) {
          const std::size_t j2 = (j < len && x[j] == StateAction{s, a}) ? j + 1 : j;
          double v = 0.0;
          if (t == H - 1) {
            v = j2 == len ? 1.0 : 0.0;
          } else {
            for (int s2 = 0; s2 < S; ++s2) {
              v += model.T(s, a, s2) * next[static_cast<std::size_t>(s2) * width + j2];
            }
          }
          best = std::max(best, v);
        }
        cur[static_cast<std::size_t>(s) * width + j] = best;
      }
    }
    std::swap(cur, next);
  }
  double total = 0.0;
  for (int s = 0; s < S; ++s) total += model.init[static_cast<std::size_t>(s)] * next[static_cast<std::size_t>(s) * width];
  return std::min(total, 1.0);
}

double moment_mismatch(const Rmmdp& m1, const Rmmdp& m2, std::span<const MomentKey> keys, int d) {
  check_comparable(m1, m2);
  if (d < 1) throw std::invalid_argument("degree must be >= 1");
  std::vector<MomentKey> all;
  if (keys.empty()) {
    all = all_canonical_keys(m1.num_states, m1.num_actions, d);
    keys = all;
  }
  std::set<MomentKey> subkeys;
  for (const MomentKey& key : keys) {
    if (static_cast<int>(key.size()) > d) {
      throw std::invalid_argument("key " + key_to_string(key) + " is longer than the degree");
    }
    for_each_subsequence(key.pairs, key.size(), [&](std::span<const StateAction> sub) {
      subkeys.insert(sorted_key({sub.begin(), sub.end()}));
    });
  }
  return mismatch_over(m1, m2, subkeys);
}

double event_moment_mismatch(const Rmmdp& m1, const Rmmdp& m2, const SequenceEvent& event, int d,
                             double budget) {
  check_comparable(m1, m2);
  if (d < 1) throw std::invalid_argument("degree must be >= 1");
  check_prefix_budget(m1, m1.horizon, budget);
  // Only sequences the dynamics can produce contribute.
  std::set<MomentKey> subkeys;
  std::vector<StateAction> x;
  auto rec = [&](auto&& self, int state) -> void {
    for (int a = 0; a < m1.num_actions; ++a) {
      x.push_back({state, a});
      if (static_cast<int>(x.size()) == m1.horizon) {
        if (event(x)) {
          for_each_subsequence(x, static_cast<std::size_t>(d), [&](std::span<const StateAction> sub) {
            subkeys.insert(sorted_key({sub.begin(), sub.end()}));
          });
        }
      } else {
        for (int next = 0; next < m1.num_states; ++next) {
          if (m1.T(state, a, next) > 0.0) self(self, next);
        }
      }
      x.pop_back();
    }
  };
  for (int s = 0; s < m1.num_states; ++s) {
    if (m1.init[static_cast<std::size_t>(s)] > 0.0) rec(rec, s);
  }
  return mismatch_over(m1, m2, subkeys);
}

double tv_on_event(const Rmmdp& m1, const Rmmdp& m2, const Policy& policy,
                   const SequenceEvent& event, Execution exec) {
  require_same_dynamics(m1, m2);
  const std::array<const Rmmdp*, 2> models{&m1, &m2};
  const auto acc = accumulate_trajectories(
      models, policy, 1,
      [&](std::span<const Step> steps, std::span<const double> probs, std::span<double> out) {
        std::vector<StateAction> x;
        x.reserve(steps.size());
        for (const Step& st : steps) x.push_back({st.state, st.action});
        if (event(x)) out[0] += std::abs(probs[0] - probs[1]);
      },
      exec);
  return acc[0];
}

int default_degree(int num_contexts, int horizon) {
  return std::min(2 * num_contexts - 1, horizon);
}

TvBoundReport verify_tv_bound(const Rmmdp& m1, const Rmmdp& m2, int d,
                              std::span<const Policy* const> policies,
                              std::span<const std::string> policy_names,
                              std::span<const SequenceEvent> events, Execution exec) {
  require_same_dynamics(m1, m2);
  if (policy_names.size() != policies.size()) {
    throw std::invalid_argument("one name per policy is required");
  }
  constexpr double kAbsTolerance = 1e-12;
  TvBoundReport report;
  report.degree = d;
  const double scale = int_pow(4.0 * m1.horizon * m1.num_rewards(), d);
  std::vector<double> rhs;
  for (const auto& ev : events) {
    report.delta.push_back(event_moment_mismatch(m1, m2, ev, d));
    report.sup_prob.push_back(sup_event_probability(m1, ev));
    rhs.push_back(report.sup_prob.back() * scale * report.delta.back());
  }
  const std::array<const Rmmdp*, 2> models{&m1, &m2};
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto lhs = accumulate_trajectories(
        models, *policies[i], events.size(),
        [&](std::span<const Step> steps, std::span<const double> probs, std::span<double> out) {
          std::vector<StateAction> x;
          x.reserve(steps.size());
          for (const Step& st : steps) x.push_back({st.state, st.action});
          const double diff = std::abs(probs[0] - probs[1]);
          for (std::size_t e = 0; e < events.size(); ++e) {
            if (events[e](x)) out[e] += diff;
          }
        },
        exec);
    for (std::size_t e = 0; e < events.size(); ++e) {
      TvCheck c{policy_names[i], static_cast<int>(e), lhs[e], rhs[e], lhs[e] <= rhs[e] + kAbsTolerance};
      if (!c.pass) ++report.violations;
      if (rhs[e] > 0.0) report.worst_ratio = std::max(report.worst_ratio, lhs[e] / rhs[e]);
      report.checks.push_back(std::move(c));
    }
  }
  return report;
}

nlohmann::json tv_report_to_json(const TvBoundReport& report) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"policy", c.policy}, {"event", c.event}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"pass", c.pass}});
  }
  return {{"degree", report.degree},       {"delta", report.delta},
          {"sup_probability", report.sup_prob}, {"violations", report.violations},
          {"worst_ratio", report.worst_ratio},  {"checks", checks}};
}

void GreedyStrategy::distribution(std::span<const Trajectory> previous, std::span<const Step>,
                                  int state, std::span<double> out) const {
  std::vector<double> sum(static_cast<std::size_t>(num_actions_), 0.0);
  std::vector<int> n(static_cast<std::size_t>(num_actions_), 0);
  for (const auto& tr : previous) {
    for (const Step& st : tr.steps) {
      if (st.state != state) continue;
      sum[static_cast<std::size_t>(st.action)] += support_.value(st.reward);
      ++n[static_cast<std::size_t>(st.action)];
    }
  }
  int pick = -1;
  for (int a = 0; a < num_actions_ && pick < 0; ++a) {
    if (n[static_cast<std::size_t>(a)] == 0) pick = a;
  }
  if (pick < 0) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_actions_; ++a) {
      const double avg = sum[static_cast<std::size_t>(a)] / n[static_cast<std::size_t>(a)];
      if (avg > best) {
        best = avg;
        pick = a;
      }
    }
  }
  std::fill(out.begin(), out.end(), 0.0);
  out[static_cast<std::size_t>(pick)] = 1.0;
}

void HashedStrategy::distribution(std::span<const Trajectory> previous, std::span<const Step> past,
                                  int state, std::span<double> out) const {
  std::uint64_t h = splitmix64(seed_);
  auto absorb = [&](std::span<const Step> steps) {
    for (const Step& st : steps) {
      h = mix(h, static_cast<std::uint64_t>(st.state));
      h = mix(h, static_cast<std::uint64_t>(st.action) << 20);
      h = mix(h, static_cast<std::uint64_t>(st.reward) << 40);
    }
  };
  for (const auto& tr : previous) {
    absorb(tr.steps);
    h = mix(h, 0xa5a5a5a5ULL);
  }
  for (const Step& st : past) {
    h = mix(h, static_cast<std::uint64_t>(st.state));
    h = mix(h, static_cast<std::uint64_t>(st.action) << 20);
  }
  h = mix(h, static_cast<std::uint64_t>(state) + 0x5bd1e995ULL);
  double total = 0.0;
  for (int a = 0; a < num_actions_; ++a) {
    const double w = 1.0 + static_cast<double>(splitmix64(h + static_cast<std::uint64_t>(a)) % 1000);
    out[static_cast<std::size_t>(a)] = w;
    total += w;
  }
  for (double& w : out) w /= total;
}

double sequence_kl(const Rmmdp& m1, const Rmmdp& m2, std::span<const StateAction> x) {
  check_comparable(m1, m2);
  const int Z = m1.num_rewards();
  const std::size_t P = pattern_count(x.size(), Z);
  double kl = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    const auto z = pattern_from_index(p, x.size(), Z);
    const double a = moment_value(m1, x, z);
    if (a <= 0.0) continue;
    const double b = moment_value(m2, x, z);
    if (b <= 0.0) return std::numeric_limits<double>::infinity();
    kl += a * std::log(a / b);
  }
  return kl;
}

KlIdentity kl_identity(const Rmmdp& m1, const Rmmdp& m2, const Strategy& strategy, int episodes,
                       double budget) {
  require_same_dynamics(m1, m2);
  if (episodes < 1) throw std::invalid_argument("need at least one episode");
  if (strategy.num_actions() != m1.num_actions) {
    throw std::invalid_argument("strategy action count differs from the model");
  }
  const double per_episode = trajectory_space_size(m1);
  const double size = std::pow(per_episode, episodes);
  if (size > budget) {
    std::ostringstream os;
    os << "K-episode trajectory space " << size << " exceeds budget " << budget;
    throw ResourceError(os.str());
  }
  const int H = m1.horizon;
  const int S = m1.num_states;
  const int A = m1.num_actions;
  const int Z = m1.num_rewards();

  KlIdentity out;
  std::map<std::vector<StateAction>, double> expected_visits;
  std::vector<Trajectory> history;
  Trajectory current;
  std::vector<StateAction> x;
  std::vector<int> r;
  std::vector<double> probs(static_cast<std::size_t>(A));

  // Walks episode k step by step; w1, w2 are the probabilities of the earlier
  // episodes and `path` the dynamics-and-strategy weight so far in episode k.
  auto episode = [&](auto&& self, int k, double w1, double w2, double path, int state) -> void {
    strategy.distribution(history, current.steps, state, probs);
    const std::vector<double> pi = probs;
    for (int a = 0; a < A; ++a) {
      const double pa = pi[static_cast<std::size_t>(a)];
      if (pa <= 0.0) continue;
      for (int z = 0; z < Z; ++z) {
        current.steps.push_back({state, a, z});
        x.push_back({state, a});
        r.push_back(z);
        if (static_cast<int>(x.size()) == H) {
          const double p1 = path * pa * moment_value(m1, x, r);
          if (p1 > 0.0) {
            const double p2 = path * pa * moment_value(m2, x, r);
            expected_visits[x] += w1 * p1;
            if (p2 <= 0.0) {
              out.infinite = true;
            } else if (k + 1 == episodes) {
              const double a1 = w1 * p1;
              out.rhs += a1 * std::log(a1 / (w2 * p2));
            } else {
              const auto saved_x = x;
              const auto saved_r = r;
              history.push_back(current);
              current.steps.clear();
              x.clear();
              r.clear();
              for (int s = 0; s < S; ++s) {
                const double p0 = m1.init[static_cast<std::size_t>(s)];
                if (p0 > 0.0) self(self, k + 1, w1 * p1, w2 * p2, p0, s);
              }
              current = history.back();
              history.pop_back();
              x = saved_x;
              r = saved_r;
            }
          }
        } else {
          for (int next = 0; next < S; ++next) {
            const double pt = m1.T(state, a, next);
            if (pt > 0.0) self(self, k, w1, w2, path * pa * pt, next);
          }
        }
        current.steps.pop_back();
        x.pop_back();
        r.pop_back();
      }
    }
  };
  for (int s = 0; s < S; ++s) {
    const double p0 = m1.init[static_cast<std::size_t>(s)];
    if (p0 > 0.0) episode(episode, 0, 1.0, 1.0, p0, s);
  }

  for (const auto& [seq, n] : expected_visits) {
    if (n <= 0.0) continue;
    const double kl = sequence_kl(m1, m2, seq);
    if (std::isinf(kl)) {
      out.infinite = true;
      continue;
    }
    out.lhs += n * kl;
  }
  if (out.infinite) {
    out.lhs = std::numeric_limits<double>::infinity();
    out.rhs = std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<double> level_probabilities(const Rmmdp& model, const Policy& policy,
                                        const LevelStructure& levels, Execution exec) {
  const std::array<const Rmmdp*, 1> models{&model};
  const auto width = static_cast<std::size_t>(levels.levels() + 2);
  return accumulate_trajectories(
      models, policy, width,
      [&](std::span<const Step> steps, std::span<const double> probs, std::span<double> out) {
        std::vector<StateAction> x;
        x.reserve(steps.size());
        for (const Step& st : steps) x.push_back({st.state, st.action});
        out[static_cast<std::size_t>(levels.level_of(x))] += probs[0];
      },
      exec);
}

std::string level_histogram_csv(const LevelStructure& levels, std::span<const double> probability,
                                std::span<const double> sup_probability) {
  std::string out = "level,threshold,probability,sup_probability\n";
  const int rows = levels.levels() + 2;
  for (int l = 0; l < rows; ++l) {
    const auto i = static_cast<std::size_t>(l);
    out += std::to_string(l) + ",";
    if (l <= levels.levels()) out += format_real(levels.thresholds()[i]);
    out += ",";
    if (i < probability.size()) out += format_real(probability[i]);
    out += ",";
    if (i < sup_probability.size()) out += format_real(sup_probability[i]);
    out += "\n";
  }
  return out;
}

}  // namespace rmm
