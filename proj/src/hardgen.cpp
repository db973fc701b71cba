#include "rmm/hardgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "rmm/enumerate.hpp"
#include "rmm/fit.hpp"
#include "rmm/plan.hpp"
#include "rmm/policy.hpp"
#include "rmm/rng.hpp"

namespace rmm {

namespace {

// Smallest top deviation that counts as a successful construction.
constexpr double kMinEpsilon = 1e-6;
constexpr int kBisectionSteps = 30;

// The chain visits one state per step, so only (2A)^d trajectories exist
// even though the nominal (S A Z)^H is much larger.
double chain_budget(const Rmmdp& model) {
  const double effective = std::pow(2.0 * model.num_actions, model.horizon);
  return effective <= kEnumerationBudget ? std::numeric_limits<double>::infinity() : kEnumerationBudget;
}

struct Problem {
  int M = 0;
  int d = 0;
  bool symmetric = false;
  double target = 0.0;  // desired top moment

  int full_size() const { return M + M * d; }
  int free_size() const { return symmetric ? (M / 2) * d : full_size(); }
  unsigned top() const { return (1u << d) - 1u; }
  // proper nonempty subsets, the top moment and the weight sum
  int num_residuals() const { return static_cast<int>(top()) + 1; }
};

// Full layout: [w_0..w_{M-1}, mu_{0,0}..mu_{M-1,d-1}].
std::vector<double> expand(const Problem& p, const std::vector<double>& theta) {
  if (!p.symmetric) return theta;
  std::vector<double> full(static_cast<std::size_t>(p.full_size()));
  const int half = p.M / 2;
  for (int m = 0; m < p.M; ++m) full[static_cast<std::size_t>(m)] = 1.0 / p.M;
  for (int m = 0; m < half; ++m) {
    for (int t = 0; t < p.d; ++t) {
      const double v = theta[static_cast<std::size_t>(m * p.d + t)];
      full[static_cast<std::size_t>(p.M + m * p.d + t)] = v;
      full[static_cast<std::size_t>(p.M + (m + half) * p.d + t)] = 1.0 - v;
    }
  }
  return full;
}

double moment_of(const Problem& p, const std::vector<double>& full, unsigned subset) {
  double total = 0.0;
  for (int m = 0; m < p.M; ++m) {
    double prod = full[static_cast<std::size_t>(m)];
    for (int t = 0; t < p.d; ++t) {
      if (subset & (1u << t)) prod *= full[static_cast<std::size_t>(p.M + m * p.d + t)];
    }
    total += prod;
  }
  return total;
}

Eigen::VectorXd residuals(const Problem& p, const std::vector<double>& full) {
  Eigen::VectorXd r(p.num_residuals());
  for (unsigned s = 1; s < p.top(); ++s) {
    r(static_cast<int>(s) - 1) = moment_of(p, full, s) - std::ldexp(1.0, -std::popcount(s));
  }
  r(static_cast<int>(p.top()) - 1) = moment_of(p, full, p.top()) - p.target;
  double wsum = 0.0;
  for (int m = 0; m < p.M; ++m) wsum += full[static_cast<std::size_t>(m)];
  r(static_cast<int>(p.top())) = wsum - 1.0;
  return r;
}

Eigen::MatrixXd full_jacobian(const Problem& p, const std::vector<double>& full) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(p.num_residuals(), p.full_size());
  auto mu = [&](int m, int t) { return full[static_cast<std::size_t>(p.M + m * p.d + t)]; };
  for (unsigned s = 1; s <= p.top(); ++s) {
    const int row = static_cast<int>(s) - 1;
    for (int m = 0; m < p.M; ++m) {
      double prod = 1.0;
      for (int t = 0; t < p.d; ++t) {
        if (s & (1u << t)) prod *= mu(m, t);
      }
      J(row, m) = prod;
      for (int t = 0; t < p.d; ++t) {
        if (!(s & (1u << t))) continue;
        double others = full[static_cast<std::size_t>(m)];
        for (int u = 0; u < p.d; ++u) {
          if (u != t && (s & (1u << u))) others *= mu(m, u);
        }
        J(row, p.M + m * p.d + t) = others;
      }
    }
  }
  for (int m = 0; m < p.M; ++m) J(static_cast<int>(p.top()), m) = 1.0;
  return J;
}

Eigen::MatrixXd jacobian(const Problem& p, const std::vector<double>& theta) {
  const std::vector<double> full = expand(p, theta);
  Eigen::MatrixXd J = full_jacobian(p, full);
  if (!p.symmetric) return J;
  const int half = p.M / 2;
  Eigen::MatrixXd out(J.rows(), p.free_size());
  for (int m = 0; m < half; ++m) {
    for (int t = 0; t < p.d; ++t) {
      out.col(m * p.d + t) = J.col(p.M + m * p.d + t) - J.col(p.M + (m + half) * p.d + t);
    }
  }
  return out;
}

void project(const Problem& p, std::vector<double>& theta) {
  if (!p.symmetric) project_simplex(std::span<double>(theta).first(static_cast<std::size_t>(p.M)));
  const std::size_t begin = p.symmetric ? 0 : static_cast<std::size_t>(p.M);
  for (std::size_t i = begin; i < theta.size(); ++i) theta[i] = std::clamp(theta[i], 0.0, 1.0);
}

struct Attempt {
  std::vector<double> theta;
  double max_residual = std::numeric_limits<double>::infinity();
};

Attempt solve(const Problem& p, std::vector<double> theta, int max_iters) {
  project(p, theta);
  Eigen::VectorXd r = residuals(p, expand(p, theta));
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < max_iters && r.cwiseAbs().maxCoeff() > 1e-15; ++it) {
    const Eigen::MatrixXd J = jacobian(p, theta);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal().array() += lambda;
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      std::vector<double> cand = theta;
      for (std::size_t i = 0; i < cand.size(); ++i) cand[i] += step(static_cast<int>(i));
      project(p, cand);
      const Eigen::VectorXd rc = residuals(p, expand(p, cand));
      if (rc.squaredNorm() < cost) {
        theta = std::move(cand);
        r = rc;
        cost = rc.squaredNorm();
        lambda = std::max(lambda / 3.0, 1e-15);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) break;
  }
  return Attempt{std::move(theta), r.cwiseAbs().maxCoeff()};
}

std::vector<double> random_start(const Problem& p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> theta(static_cast<std::size_t>(p.free_size()));
  std::size_t i = 0;
  if (!p.symmetric) {
    double total = 0.0;
    for (; i < static_cast<std::size_t>(p.M); ++i) {
      theta[i] = -std::log(1.0 - uniform01(rng));
      total += theta[i];
    }
    for (std::size_t m = 0; m < static_cast<std::size_t>(p.M); ++m) theta[m] /= total;
  }
  for (; i < theta.size(); ++i) theta[i] = uniform01(rng);
  return theta;
}

// Lowest-index restart meeting tol, else the attempt with the smallest residual.
std::pair<Attempt, bool> run_restarts(const Problem& p, const MixtureOptions& opts,
                                      std::uint64_t round, const std::vector<double>* warm) {
  const int R = std::max(1, opts.restarts);
  std::vector<Attempt> attempts(static_cast<std::size_t>(R));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < R; ++i) {
    std::vector<double> start = (i == 0 && warm != nullptr)
                                    ? *warm
                                    : random_start(p, derive_seed(opts.seed, round * 4096 + static_cast<std::uint64_t>(i)));
    attempts[static_cast<std::size_t>(i)] = solve(p, std::move(start), opts.max_iters);
  }
  for (auto& a : attempts) {
    if (a.max_residual <= opts.tol) return {std::move(a), true};
  }
  auto best = std::min_element(attempts.begin(), attempts.end(), [](const Attempt& a, const Attempt& b) {
    return a.max_residual < b.max_residual;
  });
  return {std::move(*best), false};
}

Mixture to_mixture(const Problem& p, const std::vector<double>& theta, bool feasible) {
  const std::vector<double> full = expand(p, theta);
  Mixture mix;
  mix.num_contexts = p.M;
  mix.degree = p.d;
  mix.weights.assign(full.begin(), full.begin() + p.M);
  mix.mu.assign(full.begin() + p.M, full.end());
  mix.feasible = feasible;
  for (unsigned s = 1; s < p.top(); ++s) {
    const double r = multilinear_moment(mix, s) - std::ldexp(1.0, -std::popcount(s));
    mix.residuals.push_back(r);
    mix.max_residual = std::max(mix.max_residual, std::abs(r));
  }
  mix.epsilon = multilinear_moment(mix, p.top()) - std::ldexp(1.0, -p.d);
  return mix;
}

}  // namespace

double multilinear_moment(const Mixture& mix, unsigned subset) {
  double total = 0.0;
  for (int m = 0; m < mix.num_contexts; ++m) {
    double prod = mix.weights[static_cast<std::size_t>(m)];
    for (int t = 0; t < mix.degree; ++t) {
      if (subset & (1u << t)) prod *= mix.at(m, t);
    }
    total += prod;
  }
  return total;
}

Mixture build_mixture(int num_contexts, int degree, const MixtureOptions& opts) {
  if (num_contexts < 1 || degree < 1) throw std::invalid_argument("M and d must be positive");
  if (degree > 2 * num_contexts - 1) throw std::invalid_argument("d must be at most 2M - 1");
  if (degree > 20) throw std::invalid_argument("d above 20 is not supported");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (opts.symmetric && num_contexts % 2 != 0) {
    throw std::invalid_argument("the symmetric ansatz needs an even number of contexts");
  }
  Problem p{num_contexts, degree, opts.symmetric, 0.0};
  const double base = std::ldexp(1.0, -degree);

  if (opts.epsilon) {
    if (!(*opts.epsilon >= 0.0)) throw std::invalid_argument("target epsilon must be >= 0");
    p.target = base + *opts.epsilon;
    auto [attempt, ok] = run_restarts(p, opts, 0, nullptr);
    Mixture mix = to_mixture(p, attempt.theta, ok);
    if (ok) normalize_sign(mix);
    return mix;
  }

  // Bisection on the achievable deviation, warm-starting from the last success.
  double lo = 0.0;
  double hi = degree == 1 ? 0.5 : 0.5 - base;
  std::vector<double> best_theta;
  Attempt last_failure;
  for (int step = 0; step <= kBisectionSteps; ++step) {
    const double eps = step == 0 ? hi : 0.5 * (lo + hi);
    p.target = base + eps;
    auto [attempt, ok] = run_restarts(p, opts, static_cast<std::uint64_t>(step) + 1,
                                      best_theta.empty() ? nullptr : &best_theta);
    if (ok) {
      lo = eps;
      best_theta = std::move(attempt.theta);
      if (step == 0) break;
    } else {
      hi = eps;
      last_failure = std::move(attempt);
    }
  }
  if (best_theta.empty() || lo < kMinEpsilon) {
    p.target = base + hi;
    return to_mixture(p, last_failure.theta, false);
  }
  p.target = base + lo;
  Mixture mix = to_mixture(p, best_theta, true);
  normalize_sign(mix);
  return mix;
}

void normalize_sign(Mixture& mix) {
  if (mix.epsilon >= 0.0) return;
  for (int m = 0; m < mix.num_contexts; ++m) {
    mix.mu[static_cast<std::size_t>(m * mix.degree)] = 1.0 - mix.at(m, 0);
  }
  mix.epsilon = multilinear_moment(mix, (1u << mix.degree) - 1u) - std::ldexp(1.0, -mix.degree);
}

bool epsilon_in_lower_bound_regime(int degree, double epsilon) {
  return epsilon <= std::pow(2.0 * degree, -2.0 * degree);
}

HardInstance assemble_instance(const Mixture& mix, int num_actions, std::vector<int> correct) {
  const int d = mix.degree;
  const int M = mix.num_contexts;
  if (num_actions < 2) throw std::invalid_argument("hard instances need at least two actions");
  if (!correct.empty() && static_cast<int>(correct.size()) != d) {
    throw std::invalid_argument("correct sequence must have length d or be empty");
  }
  for (int a : correct) {
    if (a < 0 || a >= num_actions) throw std::invalid_argument("correct action out of range");
  }
  HardInstance inst;
  inst.model = make_empty_model(d + 1, num_actions, d, RewardSupport::binary(), M);
  Rmmdp& m = inst.model;
  const auto S = static_cast<std::size_t>(d + 1);
  for (int s = 0; s <= d; ++s) {
    const int next = std::min(s + 1, d);
    for (int a = 0; a < num_actions; ++a) {
      m.transition[(static_cast<std::size_t>(s) * num_actions + a) * S + static_cast<std::size_t>(next)] = 1.0;
    }
  }
  m.init[0] = 1.0;
  m.weights = mix.weights;
  for (int c = 0; c < M; ++c) {
    for (int s = 0; s <= d; ++s) {
      for (int a = 0; a < num_actions; ++a) {
        double p1 = 0.5;
        if (!correct.empty() && s < d && a == correct[static_cast<std::size_t>(s)]) p1 = mix.at(c, s);
        m.mu(c, s, a, 0) = 1.0 - p1;
        m.mu(c, s, a, 1) = p1;
      }
    }
  }
  inst.epsilon = correct.empty() ? 0.0 : mix.epsilon;
  inst.correct = std::move(correct);
  inst.mixture = mix;
  return inst;
}

ParityReport parity_check(const HardInstance& inst) {
  const int d = inst.model.horizon;
  std::vector<StateAction> x;
  for (int t = 0; t < d; ++t) x.push_back({t, inst.correct.empty() ? 0 : inst.correct[static_cast<std::size_t>(t)]});
  const std::span<const StateAction> head(x.data(), static_cast<std::size_t>(d - 1));
  ParityReport rep;
  const std::size_t P = pattern_count(static_cast<std::size_t>(d - 1), 2);
  for (std::size_t idx = 0; idx < P; ++idx) {
    ParityEntry e;
    e.prefix = pattern_from_index(idx, static_cast<std::size_t>(d - 1), 2);
    std::vector<int> full = e.prefix;
    full.push_back(1);
    e.conditional = moment_value(inst.model, x, full) / moment_value(inst.model, head, e.prefix);
    const auto zeros = std::count(e.prefix.begin(), e.prefix.end(), 0);
    const double sign = zeros % 2 == 0 ? 1.0 : -1.0;
    e.expected = 0.5 + sign * inst.epsilon * std::ldexp(1.0, d - 1);
    e.residual = std::abs(e.conditional - e.expected);
    rep.max_residual = std::max(rep.max_residual, e.residual);
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

ValueCheck instance_value_check(const HardInstance& inst) {
  const int d = inst.model.horizon;
  ValueCheck out;
  out.optimal = optimal_plan(inst.model).value;
  out.bound = 0.5 * d + inst.epsilon * std::ldexp(1.0, d - 2);
  PolicyValueOptions pv;
  pv.enumeration_budget = chain_budget(inst.model);
  out.uniform = policy_value(inst.model, UniformPolicy(inst.model.num_actions), pv).value;
  out.pass = out.optimal >= out.bound - 1e-9;
  return out;
}

std::optional<double> optimal_play_probability(const HardInstance& inst) {
  const int d = inst.model.horizon;
  if (d <= 4 || inst.correct.empty() || !epsilon_in_lower_bound_regime(d, inst.epsilon)) {
    return std::nullopt;
  }
  // Posteriors move by about eps per step here, far below the default quantum.
  const PlanResult plan = optimal_plan(inst.model, kDefaultMemoBudget, 1e-15);
  const std::array<const Rmmdp*, 1> models{&inst.model};
  return accumulate_trajectories(
      models, *plan.policy, 1,
      [&](std::span<const Step> steps, std::span<const double> p, std::span<double> acc) {
        for (std::size_t t = 0; t < steps.size(); ++t) {
          if (steps[t].action != inst.correct[t]) return;
        }
        acc[0] += p[0];
      },
      Execution::parallel, chain_budget(inst.model))[0];
}

nlohmann::json hard_instance_sidecar(const HardInstance& inst, const ParityReport& parity) {
  nlohmann::json mu = nlohmann::json::array();
  for (int m = 0; m < inst.mixture.num_contexts; ++m) {
    nlohmann::json row = nlohmann::json::array();
    for (int t = 0; t < inst.mixture.degree; ++t) row.push_back(inst.mixture.at(m, t));
    mu.push_back(row);
  }
  return {{"format", "rmm-hard/1"},
          {"degree", inst.mixture.degree},
          {"num_contexts", inst.mixture.num_contexts},
          {"correct", inst.correct},
          {"epsilon", inst.epsilon},
          {"weights", inst.mixture.weights},
          {"mu", mu},
          {"max_multilinear_residual", inst.mixture.max_residual},
          {"parity_max_residual", parity.max_residual},
          {"lower_bound_regime", epsilon_in_lower_bound_regime(inst.mixture.degree, inst.epsilon)}};
}

}  // namespace rmm
