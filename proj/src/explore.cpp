#include "rmm/explore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rmm/model_io.hpp"
#include "rmm/rng.hpp"

namespace rmm {

void ExplorationConfig::validate() const {
  if (degree < 1) throw std::invalid_argument("degree must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0,1)");
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0,1)");
  if (max_episodes < 1) throw std::invalid_argument("max_episodes must be >= 1");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(c_c > 0.0 && c_T > 0.0 && c_nu > 0.0)) {
    throw std::invalid_argument("confidence constants must be positive");
  }
}

ConfidenceConstants confidence_constants(const EnvironmentShape& shape,
                                         const ExplorationConfig& cfg) {
  cfg.validate();
  const double S = shape.num_states, A = shape.num_actions, Z = shape.num_rewards();
  const double K = static_cast<double>(cfg.max_episodes);
  const double d = cfg.degree, H = shape.horizon;
  ConfidenceConstants c;
  c.iota_c = cfg.c_c * d * std::log(2.0 * S * A * Z * K / cfg.eta);
  c.iota_T = cfg.c_T * S * std::log(2.0 * S * A * K / cfg.eta);
  c.iota_nu = cfg.c_nu * S * std::log(2.0 * K / cfg.eta);
  const double ratio = K / std::pow(S * A, d) / c.iota_c;
  c.levels = ratio > 1.0 ? std::max(1, static_cast<int>(std::ceil(std::log(ratio) / std::log(4.0))))
                         : 1;
  c.eps_pe = cfg.epsilon / (H * c.levels * std::pow(4.0 * H * H * Z, d));
  return c;
}

TransitionEstimate::TransitionEstimate(int num_states, int num_actions)
    : num_states_(num_states),
      num_actions_(num_actions),
      transition_counts_(static_cast<std::size_t>(num_states) * num_actions * num_states, 0),
      row_totals_(static_cast<std::size_t>(num_states) * num_actions, 0),
      visits_(static_cast<std::size_t>(num_states) * num_actions, 0),
      init_counts_(static_cast<std::size_t>(num_states), 0) {}

void TransitionEstimate::add_episode(const Trajectory& trajectory) {
  const auto& steps = trajectory.steps;
  if (steps.empty()) return;
  ++episodes_;
  ++init_counts_[static_cast<std::size_t>(steps.front().state)];
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const std::size_t row = index(steps[t].state, steps[t].action);
    ++visits_[row];
    if (t + 1 < steps.size()) {
      ++row_totals_[row];
      ++transition_counts_[row * num_states_ + static_cast<std::size_t>(steps[t + 1].state)];
    }
  }
}

double TransitionEstimate::transition(int s, int a, int next) const {
  const std::size_t row = index(s, a);
  if (row_totals_[row] == 0) return 1.0 / num_states_;
  return static_cast<double>(transition_counts_[row * num_states_ + static_cast<std::size_t>(next)]) /
         static_cast<double>(row_totals_[row]);
}

double TransitionEstimate::init(int s) const {
  if (episodes_ == 0) return 1.0 / num_states_;
  return static_cast<double>(init_counts_[static_cast<std::size_t>(s)]) /
         static_cast<double>(episodes_);
}

std::vector<double> TransitionEstimate::transition_matrix() const {
  std::vector<double> out;
  out.reserve(transition_counts_.size());
  for (int s = 0; s < num_states_; ++s)
    for (int a = 0; a < num_actions_; ++a)
      for (int n = 0; n < num_states_; ++n) out.push_back(transition(s, a, n));
  return out;
}

std::vector<double> TransitionEstimate::init_distribution() const {
  std::vector<double> out;
  for (int s = 0; s < num_states_; ++s) out.push_back(init(s));
  return out;
}

nlohmann::json TransitionEstimate::to_json() const {
  return {{"format", "rmm-transitions/1"},
          {"num_states", num_states_},
          {"num_actions", num_actions_},
          {"episodes", episodes_},
          {"transition_counts", transition_counts_},
          {"visits", visits_},
          {"init_counts", init_counts_},
          {"transition", transition_matrix()},
          {"init", init_distribution()}};
}

TransitionEstimate TransitionEstimate::from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != "rmm-transitions/1") {
    throw std::invalid_argument("transition estimate must carry \"format\": \"rmm-transitions/1\"");
  }
  TransitionEstimate t(doc.at("num_states").get<int>(), doc.at("num_actions").get<int>());
  t.episodes_ = doc.at("episodes").get<std::uint64_t>();
  auto load = [](const nlohmann::json& v, std::vector<std::uint64_t>& dst, const char* name) {
    auto src = v.get<std::vector<std::uint64_t>>();
    if (src.size() != dst.size()) throw std::invalid_argument(std::string(name) + " has wrong size");
    dst = std::move(src);
  };
  load(doc.at("transition_counts"), t.transition_counts_, "transition_counts");
  load(doc.at("visits"), t.visits_, "visits");
  load(doc.at("init_counts"), t.init_counts_, "init_counts");
  for (std::size_t row = 0; row < t.row_totals_.size(); ++row) {
    for (int n = 0; n < t.num_states_; ++n) {
      t.row_totals_[row] += t.transition_counts_[row * t.num_states_ + static_cast<std::size_t>(n)];
    }
  }
  return t;
}

AugmentedSpace::AugmentedSpace(int num_states, int num_actions, int degree)
    : num_states_(num_states), num_actions_(num_actions), degree_(degree) {
  if (degree < 1) throw std::invalid_argument("moment degree must be at least 1");
  const int SA = num_states * num_actions;
  std::vector<int> offset{0};
  std::size_t width = 1;
  for (int len = 0; len < degree; ++len) {
    for (std::size_t i = 0; i < width; ++i) node_length_.push_back(len);
    offset.push_back(offset.back() + static_cast<int>(width));
    width *= static_cast<std::size_t>(SA);
    if (node_length_.size() > 10'000'000) throw ResourceError("augmented space too large");
  }
  node_length_.push_back(degree);  // committed

  for (const MomentKey& key : all_canonical_keys(num_states, num_actions, degree)) {
    key_ids_.emplace(key, static_cast<int>(keys_.size()));
    keys_.push_back(key);
  }

  const int uncommitted = offset[static_cast<std::size_t>(degree)];
  child_.assign(static_cast<std::size_t>(uncommitted) * SA, -1);
  commit_key_.assign(static_cast<std::size_t>(uncommitted) * SA, -1);
  std::vector<int> codes;
  for (int node = 0; node < uncommitted; ++node) {
    const int len = node_length_[static_cast<std::size_t>(node)];
    // Decode the prefix (first pair most significant).
    codes.assign(static_cast<std::size_t>(len), 0);
    int rest = node - offset[static_cast<std::size_t>(len)];
    for (int j = len - 1; j >= 0; --j) {
      codes[static_cast<std::size_t>(j)] = rest % SA;
      rest /= SA;
    }
    for (int x = 0; x < SA; ++x) {
      const std::size_t cell = static_cast<std::size_t>(node) * SA + x;
      if (len + 1 < degree) {
        child_[cell] = offset[static_cast<std::size_t>(len) + 1] +
                       (node - offset[static_cast<std::size_t>(len)]) * SA + x;
      }
      MomentKey key;
      for (int c : codes) key.pairs.push_back({c / num_actions, c % num_actions});
      key.pairs.push_back({x / num_actions, x % num_actions});
      std::sort(key.pairs.begin(), key.pairs.end());
      commit_key_[cell] = key_ids_.at(key);
    }
  }
}

int AugmentedSpace::node_of(const AugmentedState& state) const {
  if (state.degree() != degree_) throw std::invalid_argument("augmented state has wrong degree");
  if (state.committed()) return committed_node();
  const int SA = num_states_ * num_actions_;
  int node = 0, offset = 0, width = 1;
  for (int j = 0; j < state.index - 1; ++j) {
    offset += width;
    width *= SA;
  }
  for (int j = 0; j < state.index - 1; ++j) {
    const StateAction& p = *state.slots[static_cast<std::size_t>(j)];
    node = node * SA + p.state * num_actions_ + p.action;
  }
  return offset + node;
}

int AugmentedSpace::next_node(int node, int s, int a, int flag) const {
  if (node == committed_node() || flag == 0) return node;
  if (flag == -1) return committed_node();
  const int c = child_[static_cast<std::size_t>(node) * num_states_ * num_actions_ +
                       static_cast<std::size_t>(s) * num_actions_ + a];
  return c < 0 ? committed_node() : c;
}

int AugmentedSpace::commit_key(int node, int s, int a, int flag) const {
  if (node == committed_node() || flag == 0) return -1;
  const std::size_t cell = static_cast<std::size_t>(node) * num_states_ * num_actions_ +
                           static_cast<std::size_t>(s) * num_actions_ + a;
  if (flag == 1 && child_[cell] >= 0) return -1;
  return commit_key_[cell];
}

int AugmentedSpace::key_id(const MomentKey& key) const {
  auto it = key_ids_.find(key);
  return it == key_ids_.end() ? -1 : it->second;
}

namespace {

double bonus(double iota, std::uint64_t n) {
  if (n == 0) return 1.0;
  return std::min(1.0, std::sqrt(iota / static_cast<double>(n)));
}

double initial_value(const OptimisticValues& v, const TransitionEstimate& tr,
                     const ConfidenceConstants& c, std::uint64_t k) {
  double sum = std::sqrt(c.iota_nu / static_cast<double>(k));
  for (int s = 0; s < v.num_states; ++s) {
    sum += tr.init(s) * v.value[v.cell(0, AugmentedSpace::root(), s)];
  }
  return sum;
}

}  // namespace

OptimisticValues compute_optimistic(const AugmentedSpace& space, int horizon,
                                    const std::vector<std::uint64_t>& key_counts,
                                    const TransitionEstimate& transitions,
                                    const ConfidenceConstants& constants, std::uint64_t k,
                                    Execution exec) {
  if (k < 1) throw std::invalid_argument("episode index k must be >= 1");
  if (key_counts.size() != space.keys().size()) {
    throw std::invalid_argument("key_counts does not match the augmented space");
  }
  const int S = space.num_states(), A = space.num_actions(), N = space.num_nodes();
  OptimisticValues v;
  v.horizon = horizon;
  v.num_nodes = N;
  v.num_states = S;
  v.num_actions = A;
  const std::size_t cells = static_cast<std::size_t>(horizon) * N * S;
  v.value.assign(cells, 0.0);
  v.greedy.assign(cells, 0);
  v.q.assign(cells * 3 * A, 0.0);

  const std::vector<double> T = transitions.transition_matrix();
  std::vector<double> qT(static_cast<std::size_t>(S) * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) qT[static_cast<std::size_t>(s) * A + a] = bonus(constants.iota_T, transitions.visits(s, a));

  const int work = N * S;
  const bool parallel = exec == Execution::parallel && work >= 256;
  for (int t = horizon - 1; t >= 0; --t) {
#pragma omp parallel for schedule(static) if (parallel)
    for (int cellno = 0; cellno < work; ++cellno) {
      const int node = cellno / S, s = cellno % S;
      const std::size_t here = v.cell(t, node, s);
      double best = -1.0;
      int best_idx = 0;
      for (int a = 0; a < A; ++a) {
        const std::size_t row = static_cast<std::size_t>(s) * A + a;
        for (int b = 0; b < 3; ++b) {
          const int flag = kFlagOrder[b];
          const int next = space.next_node(node, s, a, flag);
          const int kid = space.commit_key(node, s, a, flag);
          const double qc = kid >= 0 ? bonus(constants.iota_c, key_counts[static_cast<std::size_t>(kid)]) : 0.0;
          double ev = 0.0;
          if (t + 1 < horizon) {
            const double* vn = &v.value[v.cell(t + 1, next, 0)];
            for (int s2 = 0; s2 < S; ++s2) ev += T[row * S + s2] * vn[s2];
          }
          const double q = std::min(1.0, qc + ev + qT[row]);
          v.q[here * 3 * A + static_cast<std::size_t>(a) * 3 + b] = q;
          if (q > best) {
            best = q;
            best_idx = a * 3 + b;
          }
        }
      }
      v.value[here] = best;
      v.greedy[here] = best_idx;
    }
  }
  v.v0 = initial_value(v, transitions, constants, k);
  return v;
}

OptimisticValues compute_optimistic(const MomentTable& table, const TransitionEstimate& transitions,
                                    const EnvironmentShape& shape, const ExplorationConfig& cfg,
                                    std::uint64_t k) {
  const AugmentedSpace space(shape.num_states, shape.num_actions, cfg.degree);
  std::vector<std::uint64_t> counts(space.keys().size(), 0);
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = table.count(space.keys()[i]);
  return compute_optimistic(space, shape.horizon, counts, transitions,
                            confidence_constants(shape, cfg), k, cfg.exec);
}

std::vector<double> commit_distribution(const AugmentedSpace& space, const OptimisticValues& values,
                                        const Rmmdp& model) {
  const int S = space.num_states(), N = space.num_nodes();
  std::vector<double> out(space.keys().size(), 0.0);
  std::vector<double> cur(static_cast<std::size_t>(N) * S, 0.0), nxt(cur.size());
  for (int s = 0; s < S; ++s) cur[static_cast<std::size_t>(s)] = model.init[static_cast<std::size_t>(s)];
  for (int t = 0; t < values.horizon; ++t) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int node = 0; node < N; ++node) {
      for (int s = 0; s < S; ++s) {
        const double p = cur[static_cast<std::size_t>(node) * S + s];
        if (p == 0.0) continue;
        const AugmentedAction act = values.greedy_action(t, node, s);
        const int kid = space.commit_key(node, s, act.action, act.flag);
        if (kid >= 0) out[static_cast<std::size_t>(kid)] += p;
        const int next = space.next_node(node, s, act.action, act.flag);
        for (int s2 = 0; s2 < S; ++s2) {
          nxt[static_cast<std::size_t>(next) * S + s2] += p * model.T(s, act.action, s2);
        }
      }
    }
    std::swap(cur, nxt);
  }
  return out;
}

ExplorationResult estimate_moments(Environment& env, const ExplorationConfig& cfg,
                                   const ExplorationHooks& hooks) {
  cfg.validate();
  const EnvironmentShape& shape = env.shape();
  ExplorationResult out;
  out.constants = confidence_constants(shape, cfg);
  out.moments = MomentTable(shape.num_rewards());
  out.transitions = TransitionEstimate(shape.num_states, shape.num_actions);

  const AugmentedSpace space(shape.num_states, shape.num_actions, cfg.degree);
  std::vector<std::uint64_t> counts(space.keys().size(), 0);
  std::uint64_t commits = 0;
  OptimisticValues values;
  for (std::uint64_t k = 1;; ++k) {
    if ((k - 1) % cfg.batch == 0) {
      values = compute_optimistic(space, shape.horizon, counts, out.transitions, out.constants, k,
                                  cfg.exec);
    } else {
      values.v0 = initial_value(values, out.transitions, out.constants, k);
    }
    out.final_v0 = values.v0;
    if (values.v0 <= out.constants.eps_pe) break;
    if (k > cfg.max_episodes) {
      out.budget_exhausted = true;
      break;
    }
    if (hooks.before_episode) hooks.before_episode(k, space, values);
    const GreedyAugmentedPolicy policy(space, values);
    const EpisodeRecord rec = sample_augmented_episode(env, policy, cfg.degree, derive_seed(cfg.seed, k));
    if (rec.committed) {
      out.moments.add_sample(rec.committed->pairs, rec.committed->rewards);
      MomentKey key{rec.committed->pairs};
      std::sort(key.pairs.begin(), key.pairs.end());
      ++counts[static_cast<std::size_t>(space.key_id(key))];
      ++commits;
    }
    out.transitions.add_episode(rec.trajectory);
    out.log.push_back({k, values.v0, commits});
    out.episodes = k;
    if (hooks.after_episode) hooks.after_episode(rec);
  }
  return out;
}

std::string explore_log_csv(const std::vector<ExploreLogRow>& log) {
  std::ostringstream os;
  os << "episode,v_tilde_0,commits_total\n";
  for (const auto& row : log) {
    os << row.episode << ',' << format_real(row.v_tilde_0) << ',' << row.commits_total << '\n';
  }
  return os.str();
}

}  // namespace rmm
