#include "rmm/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "rmm/rng.hpp"

namespace rmm {

std::string to_string(FitMode mode) {
  switch (mode) {
    case FitMode::general: return "general";
    case FitMode::balanced_two: return "balanced-two";
    case FitMode::integral_grid: return "integral-grid";
  }
  return "general";
}

FitMode fit_mode_from_string(const std::string& text) {
  if (text == "general") return FitMode::general;
  if (text == "balanced-two") return FitMode::balanced_two;
  if (text == "integral-grid") return FitMode::integral_grid;
  throw std::invalid_argument("unknown fit mode \"" + text +
                              "\" (expected general, balanced-two or integral-grid)");
}

double third_moment_predict(double m1, double m2, double m3, double m12, double m13, double m23) {
  return -2.0 * m1 * m2 * m3 + m1 * m23 + m2 * m13 + m3 * m12;
}

void project_simplex(std::span<double> v) {
  // Sort-based projection (Held, Wolfe and Crowder).
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (double& x : v) x = std::max(0.0, x - theta);
}

std::vector<double> round_to_grid(std::span<const double> probs, int P) {
  if (P < 1) throw std::invalid_argument("grid resolution P must be >= 1");
  std::vector<double> scaled(probs.size());
  std::vector<int> units(probs.size());
  int used = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    scaled[i] = std::max(0.0, probs[i]) * P;
    units[i] = static_cast<int>(std::floor(scaled[i]));
    used += units[i];
  }
  std::vector<std::size_t> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scaled[a] - units[a] > scaled[b] - units[b];
  });
  for (std::size_t k = 0; used < P; ++k, ++used) ++units[order[k % order.size()]];
  for (std::size_t k = order.size(); used > P; ++k) {
    std::size_t i = order[order.size() - 1 - (k % order.size())];
    if (units[i] > 0) {
      --units[i];
      --used;
    }
  }
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(units[i]) / P;
  return out;
}

namespace {

constexpr int kMaxContexts = 16;

bool canonical_pattern(const MomentKey& key, const std::vector<int>& z) {
  for (std::size_t i = 1; i < key.size(); ++i) {
    if (key.pairs[i] == key.pairs[i - 1] && z[i] < z[i - 1]) return false;
  }
  return true;
}

double radius_for(double iota_c, std::uint64_t n, double scale) {
  if (n == 0) return std::numeric_limits<double>::infinity();
  return scale * std::sqrt(iota_c / static_cast<double>(n));
}

// Lookup of M_n and its radius for an arbitrary (not necessarily canonical)
// key and pattern.
bool lookup(const MomentTable& table, double iota_c, double scale, std::vector<StateAction> pairs,
            std::vector<int> z, double& value, double& radius) {
  const CanonicalMoment c = canonicalize(pairs, z);
  const MomentEntry* e = table.find(c.key);
  if (!e || e->count == 0) return false;
  value = e->probs[pattern_index(c.rewards, table.num_rewards())];
  radius = radius_for(iota_c, e->count, scale);
  return true;
}

}  // namespace

std::vector<MomentConstraint> build_constraints(const MomentTable& table, double iota_c,
                                                const FitOptions& opts) {
  const int Z = table.num_rewards();
  const std::size_t max_q = opts.mode == FitMode::balanced_two ? 2 : table.max_degree();
  std::vector<MomentConstraint> out;
  for (const auto& [key, entry] : table.entries()) {
    if (key.size() > max_q || entry.count == 0) continue;
    const double radius = radius_for(iota_c, entry.count, opts.slack_scale);
    for (std::size_t zi = 0; zi < entry.probs.size(); ++zi) {
      std::vector<int> z = pattern_from_index(zi, key.size(), Z);
      if (!canonical_pattern(key, z)) continue;
      out.push_back({key, std::move(z), entry.probs[zi], radius});
    }
  }
  if (opts.mode != FitMode::balanced_two) return out;

  std::vector<StateAction> singles;
  for (const auto& [key, entry] : table.entries()) {
    if (key.size() == 1 && entry.count > 0) singles.push_back(key.pairs[0]);
  }
  for (std::size_t i = 0; i < singles.size(); ++i) {
    for (std::size_t j = i; j < singles.size(); ++j) {
      for (std::size_t k = j; k < singles.size(); ++k) {
        const MomentKey key{{singles[i], singles[j], singles[k]}};
        for (std::size_t zi = 0; zi < pattern_count(3, Z); ++zi) {
          const std::vector<int> z = pattern_from_index(zi, 3, Z);
          if (!canonical_pattern(key, z)) continue;
          double m[3], r[3], mp[3], rp[3];
          bool ok = true;
          for (int c = 0; c < 3 && ok; ++c) {
            ok = lookup(table, iota_c, opts.slack_scale, {key.pairs[c]}, {z[c]}, m[c], r[c]);
          }
          // Pair order: (1,2), (1,3), (2,3).
          const int pa[3][2] = {{0, 1}, {0, 2}, {1, 2}};
          for (int c = 0; c < 3 && ok; ++c) {
            ok = lookup(table, iota_c, opts.slack_scale, {key.pairs[pa[c][0]], key.pairs[pa[c][1]]},
                        {z[pa[c][0]], z[pa[c][1]]}, mp[c], rp[c]);
          }
          if (!ok) continue;
          const double radius = 6.0 * std::max({r[0], r[1], r[2], rp[0], rp[1], rp[2]});
          out.push_back(
              {key, z, third_moment_predict(m[0], m[1], m[2], mp[0], mp[1], mp[2]), radius});
        }
      }
    }
  }
  return out;
}

namespace {

// Constraints flattened to parameter offsets inside one context's block.
struct Problem {
  int M = 0, SA = 0, Z = 0;
  std::vector<std::size_t> begin;  // into idx, size C + 1
  std::vector<int> idx;            // pair_code * Z + z
  std::vector<double> target;
  std::vector<double> radius;

  explicit Problem(const std::vector<MomentConstraint>& cs, int num_contexts, int S, int A, int Zr)
      : M(num_contexts), SA(S * A), Z(Zr) {
    begin.push_back(0);
    for (const auto& c : cs) {
      for (std::size_t i = 0; i < c.key.size(); ++i) {
        idx.push_back((c.key.pairs[i].state * A + c.key.pairs[i].action) * Z + c.rewards[i]);
      }
      begin.push_back(idx.size());
      target.push_back(c.target);
      radius.push_back(c.radius);
    }
  }

  std::size_t size() const { return target.size(); }
  std::size_t block() const { return static_cast<std::size_t>(SA) * Z; }

  // Objective at radii scaled by `shrink`; optional gradients. Also counts
  // constraints violated at the full radii.
  double eval(const std::vector<double>& w, const std::vector<double>& mu, double shrink,
              std::vector<double>* gw, std::vector<double>* gmu, std::size_t* violated) const {
    double F = 0.0;
    std::size_t bad = 0;
    double prod[kMaxContexts];
    for (std::size_t c = 0; c < size(); ++c) {
      double mhat = 0.0;
      for (int m = 0; m < M; ++m) {
        const double* row = &mu[static_cast<std::size_t>(m) * block()];
        double p = 1.0;
        for (std::size_t i = begin[c]; i < begin[c + 1]; ++i) p *= row[idx[i]];
        prod[m] = p;
        mhat += w[static_cast<std::size_t>(m)] * p;
      }
      const double r = mhat - target[c];
      if (std::abs(r) > radius[c]) ++bad;
      const double h = std::abs(r) - radius[c] * shrink;
      if (!(h > 0.0)) continue;
      F += h * h;
      if (!gw) continue;
      const double g = 2.0 * h * (r > 0.0 ? 1.0 : -1.0);
      for (int m = 0; m < M; ++m) {
        (*gw)[static_cast<std::size_t>(m)] += g * prod[m];
        const double* row = &mu[static_cast<std::size_t>(m) * block()];
        double* grow = &(*gmu)[static_cast<std::size_t>(m) * block()];
        for (std::size_t j = begin[c]; j < begin[c + 1]; ++j) {
          double others = w[static_cast<std::size_t>(m)];
          for (std::size_t i = begin[c]; i < begin[c + 1]; ++i) {
            if (i != j) others *= row[idx[i]];
          }
          grow[idx[j]] += g * others;
        }
      }
    }
    if (violated) *violated = bad;
    return F;
  }

  double objective(const std::vector<double>& w, const std::vector<double>& mu) const {
    return eval(w, mu, 1.0, nullptr, nullptr, nullptr);
  }
  std::size_t violations(const std::vector<double>& w, const std::vector<double>& mu) const {
    std::size_t bad = 0;
    eval(w, mu, 1.0, nullptr, nullptr, &bad);
    return bad;
  }
};

constexpr double kMargin = 0.999;

struct Candidate {
  std::vector<double> w, mu;
  double objective = std::numeric_limits<double>::infinity();
  double scale = 1.0;  // tightest radius scale at which it was feasible
  std::vector<double> trace;
};

// Projected gradient descent with cosine step decay. Returns true when the
// iterate satisfies every constraint at full radii.
bool descend(const Problem& pb, std::vector<double>& w, std::vector<double>& mu, bool fix_weights,
             double shrink, const FitOptions& opts, std::vector<double>* trace) {
  std::vector<double> gw(w.size()), gmu(mu.size());
  const std::size_t blk = static_cast<std::size_t>(pb.Z);
  for (int it = 0; it < opts.max_iters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gmu.begin(), gmu.end(), 0.0);
    const double F = pb.eval(w, mu, shrink * kMargin, &gw, &gmu, nullptr);
    if (trace) trace->push_back(F);
    if (F == 0.0) return pb.violations(w, mu) == 0;
    const double lr = opts.step * 0.5 * (1.0 + std::cos(std::numbers::pi * it / opts.max_iters));
    if (!fix_weights) {
      for (std::size_t m = 0; m < w.size(); ++m) w[m] -= lr * gw[m];
      project_simplex(w);
    }
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] -= lr * gmu[i];
    for (std::size_t r = 0; r < mu.size(); r += blk) project_simplex(std::span<double>(mu).subspan(r, blk));
  }
  return pb.violations(w, mu) == 0;
}

void random_simplex(std::span<double> v, Rng& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  double total = 0.0;
  for (double& x : v) total += (x = g(rng));
  for (double& x : v) x /= total;
}

// Closed-form balanced initialization from singleton and diagonal moments,
// with signs aligned across pairs through cross moments.
void balanced_init(const MomentTable& table, int S, int A, int Z, std::vector<double>& mu) {
  const int SA = S * A;
  std::vector<double> mean(static_cast<std::size_t>(SA) * Z, 1.0 / Z), dev(mean.size(), 0.0);
  std::vector<bool> known(static_cast<std::size_t>(SA), false);
  for (int x = 0; x < SA; ++x) {
    const StateAction p{x / A, x % A};
    const MomentEntry* e1 = table.find(MomentKey{{p}});
    const MomentEntry* e2 = table.find(MomentKey{{p, p}});
    if (!e1 || e1->count == 0) continue;
    known[static_cast<std::size_t>(x)] = true;
    double* m1 = &mean[static_cast<std::size_t>(x) * Z];
    double* dv = &dev[static_cast<std::size_t>(x) * Z];
    for (int z = 0; z < Z; ++z) m1[z] = e1->probs[static_cast<std::size_t>(z)];
    if (!e2 || e2->count == 0) continue;
    int ref = 0;
    for (int z = 0; z < Z; ++z) {
      const double diag = e2->probs[static_cast<std::size_t>(z) * Z + z];
      dv[z] = std::sqrt(std::max(0.0, diag - m1[z] * m1[z]));
      if (dv[z] > dv[ref]) ref = z;
    }
    for (int z = 0; z < Z; ++z) {
      if (z == ref) continue;
      const int lo = std::min(z, ref), hi = std::max(z, ref);
      const double cross = e2->probs[static_cast<std::size_t>(lo) * Z + hi];
      if (cross - m1[z] * m1[ref] < 0.0) dv[z] = -dv[z];
    }
  }
  // Align each pair's sign with the pair of largest deviation.
  int anchor = -1;
  double best = 0.0;
  for (int x = 0; x < SA; ++x) {
    for (int z = 0; z < Z; ++z) {
      const double d = std::abs(dev[static_cast<std::size_t>(x) * Z + z]);
      if (d > best) {
        best = d;
        anchor = x;
      }
    }
  }
  auto argmax_dev = [&](int x) {
    int r = 0;
    for (int z = 1; z < Z; ++z) {
      if (std::abs(dev[static_cast<std::size_t>(x) * Z + z]) >
          std::abs(dev[static_cast<std::size_t>(x) * Z + r]))
        r = z;
    }
    return r;
  };
  if (anchor >= 0) {
    const int za = argmax_dev(anchor);
    const StateAction pa{anchor / A, anchor % A};
    for (int x = 0; x < SA; ++x) {
      if (x == anchor || !known[static_cast<std::size_t>(x)]) continue;
      const int zx = argmax_dev(x);
      double cross = 0.0, radius = 0.0;
      const StateAction px{x / A, x % A};
      if (!lookup(table, 0.0, 1.0, {pa, px}, {za, zx}, cross, radius)) continue;
      const double sign_needed = cross - mean[static_cast<std::size_t>(anchor) * Z + za] *
                                             mean[static_cast<std::size_t>(x) * Z + zx];
      const double sign_have = dev[static_cast<std::size_t>(anchor) * Z + za] *
                               dev[static_cast<std::size_t>(x) * Z + zx];
      if (sign_needed * sign_have < 0.0) {
        for (int z = 0; z < Z; ++z) dev[static_cast<std::size_t>(x) * Z + z] *= -1.0;
      }
    }
  }
  const std::size_t blk = static_cast<std::size_t>(SA) * Z;
  for (std::size_t i = 0; i < blk; ++i) {
    mu[i] = mean[i] + dev[i];
    mu[blk + i] = mean[i] - dev[i];
  }
  for (std::size_t r = 0; r < mu.size(); r += static_cast<std::size_t>(Z)) {
    project_simplex(std::span<double>(mu).subspan(r, static_cast<std::size_t>(Z)));
  }
}

Candidate run_restart(const Problem& pb, const MomentTable& table, int S, int A, int r,
                      const FitOptions& opts) {
  Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
  Candidate c;
  const int M = opts.num_contexts, Z = pb.Z;
  c.w.assign(static_cast<std::size_t>(M), 1.0 / M);
  c.mu.assign(static_cast<std::size_t>(M) * pb.block(), 0.0);
  const bool balanced = opts.mode == FitMode::balanced_two;
  if (balanced && r == 0) {
    balanced_init(table, S, A, Z, c.mu);
  } else {
    if (!balanced) random_simplex(c.w, rng);
    for (std::size_t i = 0; i < c.mu.size(); i += static_cast<std::size_t>(Z)) {
      random_simplex(std::span<double>(c.mu).subspan(i, static_cast<std::size_t>(Z)), rng);
    }
  }
  const bool feasible = descend(pb, c.w, c.mu, balanced, 1.0, opts, &c.trace);
  if (feasible) {
    for (int round = 1; round <= opts.tighten_rounds; ++round) {
      std::vector<double> w = c.w, mu = c.mu;
      const double shrink = std::ldexp(1.0, -round);
      descend(pb, w, mu, balanced, shrink, opts, nullptr);
      if (pb.violations(w, mu) != 0) break;
      c.w = std::move(w);
      c.mu = std::move(mu);
      c.scale = shrink;
    }
  }
  if (opts.mode == FitMode::integral_grid) {
    c.w = round_to_grid(c.w, opts.grid);
    for (std::size_t i = 0; i < c.mu.size(); i += static_cast<std::size_t>(Z)) {
      const auto rounded =
          round_to_grid(std::span<const double>(c.mu).subspan(i, static_cast<std::size_t>(Z)), opts.grid);
      std::copy(rounded.begin(), rounded.end(), c.mu.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  c.objective = pb.objective(c.w, c.mu);
  if (pb.violations(c.w, c.mu) != 0 && c.objective == 0.0) {
    // Violations within the float noise of the hinge; keep the order strict.
    c.objective = std::numeric_limits<double>::min();
  }
  return c;
}

Rmmdp assemble(const Rmmdp& base, int M, const std::vector<double>& w, const std::vector<double>& mu) {
  Rmmdp out = base;
  out.weights = w;
  out.rewards = mu;
  (void)M;
  return out;
}

}  // namespace

double fit_objective(const Rmmdp& candidate, const std::vector<MomentConstraint>& constraints) {
  double F = 0.0;
  for (const auto& c : constraints) {
    const double h = std::abs(moment_value(candidate, c.key.pairs, c.rewards) - c.target) - c.radius;
    if (h > 0.0) F += h * h;
  }
  return F;
}

FitResult fit_moment_matching(const MomentTable& table, double iota_c, const Rmmdp& base,
                              const FitOptions& opts) {
  check_dimensions(base);
  if (table.empty()) throw std::invalid_argument("moment table is empty");
  if (opts.num_contexts < 1 || opts.num_contexts > kMaxContexts) {
    throw std::invalid_argument("num_contexts must lie in [1, " + std::to_string(kMaxContexts) + "]");
  }
  if (opts.restarts < 1 || opts.max_iters < 1) {
    throw std::invalid_argument("restarts and max_iters must be >= 1");
  }
  if (opts.mode == FitMode::balanced_two && opts.num_contexts != 2) {
    throw std::invalid_argument("balanced-two mode fits exactly two contexts");
  }
  if (opts.mode == FitMode::integral_grid && opts.grid < 1) {
    throw std::invalid_argument("integral-grid mode needs a grid resolution P >= 1");
  }
  if (table.num_rewards() != base.num_rewards()) {
    throw std::invalid_argument("moment table and base model disagree on the reward support");
  }
  const std::size_t need = opts.mode == FitMode::balanced_two ? 2 : table.max_degree();
  for (std::size_t q = 1; q <= need; ++q) {
    bool any = false;
    for (const auto& [key, entry] : table.entries()) any = any || (key.size() == q && entry.count > 0);
    if (!any) throw std::invalid_argument("moment table has no sampled key of degree " + std::to_string(q));
  }
  for (const auto& [key, entry] : table.entries()) {
    for (const auto& p : key.pairs) {
      if (p.state >= base.num_states || p.action >= base.num_actions) {
        throw std::invalid_argument("moment key " + key_to_string(key) + " is out of range");
      }
    }
  }

  const auto constraints = build_constraints(table, iota_c, opts);
  const Problem pb(constraints, opts.num_contexts, base.num_states, base.num_actions, base.num_rewards());
  std::vector<Candidate> runs(static_cast<std::size_t>(opts.restarts));
  const bool parallel = opts.exec == Execution::parallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int r = 0; r < opts.restarts; ++r) {
    runs[static_cast<std::size_t>(r)] = run_restart(pb, table, base.num_states, base.num_actions, r, opts);
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    const auto& a = runs[r];
    const auto& b = runs[best];
    if (a.objective < b.objective || (a.objective == b.objective && a.scale < b.scale)) best = r;
  }

  FitResult out;
  out.model = assemble(base, opts.num_contexts, runs[best].w, runs[best].mu);
  out.objective = runs[best].objective;
  out.trace = std::move(runs[best].trace);
  out.best_restart = static_cast<int>(best);
  out.constraints = constraints.size();
  double worst = 0.0;
  for (const auto& c : constraints) {
    const double slack = std::abs(moment_value(out.model, c.key.pairs, c.rewards) - c.target) - c.radius;
    if (slack > 0.0) worst = std::max(worst, c.radius > 0.0 ? slack / c.radius : slack);
  }
  out.max_normalized_violation = worst;
  out.feasible = worst == 0.0;
  return out;
}

ViolationReport violation_report(const Rmmdp& candidate, const MomentTable& table, double iota_c,
                                 double slack_scale) {
  ViolationReport rep;
  const int Z = table.num_rewards();
  for (const auto& [key, entry] : table.entries()) {
    if (entry.count == 0) continue;
    const double radius = radius_for(iota_c, entry.count, slack_scale);
    for (std::size_t zi = 0; zi < entry.probs.size(); ++zi) {
      SlackEntry s;
      s.key = key;
      s.rewards = pattern_from_index(zi, key.size(), Z);
      s.empirical = entry.probs[zi];
      s.predicted = moment_value(candidate, key.pairs, s.rewards);
      s.radius = radius;
      s.slack = std::max(0.0, std::abs(s.predicted - s.empirical) - radius);
      if (s.slack > 0.0) {
        ++rep.violated;
        rep.max_slack = std::max(rep.max_slack, s.slack);
        rep.max_normalized = std::max(rep.max_normalized, radius > 0.0 ? s.slack / radius : s.slack);
      }
      rep.entries.push_back(std::move(s));
    }
  }
  return rep;
}

nlohmann::json violation_report_to_json(const ViolationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : report.entries) {
    rows.push_back({{"key", key_to_string(e.key)},
                    {"rewards", e.rewards},
                    {"empirical", e.empirical},
                    {"predicted", e.predicted},
                    {"radius", e.radius},
                    {"slack", e.slack}});
  }
  return {{"max_slack", report.max_slack},
          {"max_normalized", report.max_normalized},
          {"violated", report.violated},
          {"entries", rows}};
}

FitResult grid_search_fit(const MomentTable& table, double iota_c, const Rmmdp& base,
                          int num_contexts, double step, double budget) {
  const int Z = base.num_rewards();
  if (num_contexts < 1 || num_contexts > kMaxContexts) throw std::invalid_argument("bad context count");
  const int steps = static_cast<int>(std::lround(1.0 / step));
  if (steps < 1 || std::abs(steps * step - 1.0) > 1e-9) {
    throw std::invalid_argument("grid step must divide 1");
  }
  // All points of the Z-simplex with coordinates in multiples of step.
  std::vector<std::vector<double>> simplex;
  std::vector<int> units(static_cast<std::size_t>(Z), 0);
  auto fill = [&](auto&& self, int pos, int left) -> void {
    if (pos == Z - 1) {
      units[static_cast<std::size_t>(pos)] = left;
      std::vector<double> p;
      for (int u : units) p.push_back(u * step);
      simplex.push_back(std::move(p));
      return;
    }
    for (int u = 0; u <= left; ++u) {
      units[static_cast<std::size_t>(pos)] = u;
      self(self, pos + 1, left - u);
    }
  };
  fill(fill, 0, steps);
  std::vector<std::vector<double>> weight_points;
  {
    units.assign(static_cast<std::size_t>(num_contexts), 0);
    std::vector<std::vector<double>> tmp;
    auto fill_w = [&](auto&& self, int pos, int left) -> void {
      if (pos == num_contexts - 1) {
        units[static_cast<std::size_t>(pos)] = left;
        std::vector<double> p;
        for (int u : units) p.push_back(u * step);
        weight_points.push_back(std::move(p));
        return;
      }
      for (int u = 0; u <= left; ++u) {
        units[static_cast<std::size_t>(pos)] = u;
        self(self, pos + 1, left - u);
      }
    };
    fill_w(fill_w, 0, steps);
  }
  const int rows = num_contexts * base.num_states * base.num_actions;
  const double total = static_cast<double>(weight_points.size()) *
                       std::pow(static_cast<double>(simplex.size()), rows);
  if (total > budget) {
    throw ResourceError("grid search needs " + std::to_string(total) + " candidates, budget " +
                        std::to_string(budget));
  }
  FitOptions opts;
  opts.num_contexts = num_contexts;
  const auto constraints = build_constraints(table, iota_c, opts);
  const Problem pb(constraints, num_contexts, base.num_states, base.num_actions, Z);

  FitResult out;
  out.objective = std::numeric_limits<double>::infinity();
  out.constraints = constraints.size();
  std::vector<std::size_t> pick(static_cast<std::size_t>(rows), 0);
  std::vector<double> mu(static_cast<std::size_t>(rows) * Z);
  while (true) {
    for (int r = 0; r < rows; ++r) {
      const auto& p = simplex[pick[static_cast<std::size_t>(r)]];
      std::copy(p.begin(), p.end(), mu.begin() + static_cast<std::ptrdiff_t>(r) * Z);
    }
    for (const auto& w : weight_points) {
      const double F = pb.objective(w, mu);
      if (F < out.objective) {
        out.objective = F;
        out.model = assemble(base, num_contexts, w, mu);
      }
    }
    int r = rows - 1;
    while (r >= 0 && ++pick[static_cast<std::size_t>(r)] == simplex.size()) pick[static_cast<std::size_t>(r--)] = 0;
    if (r < 0) break;
  }
  out.feasible = violation_report(out.model, table, iota_c).violated == 0;
  return out;
}

}  // namespace rmm
