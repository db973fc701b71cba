#pragma once

#include <cstdint>

#include "rmm/core.hpp"

namespace rmm {

/// Single state, two actions, binary rewards, two equally likely contexts.
/// Action 0 pays Bern(0.2) / Bern(0.8); action 1 pays Bern(0.5) in both.
Rmmdp example_e1(int horizon);

/// Same dynamics as `model`, every reward distribution uniform on the support.
Rmmdp uniform_rewards_like(const Rmmdp& model);

struct GeneratorSpec {
  int num_states = 2;
  int num_actions = 2;
  int horizon = 3;
  int num_rewards = 2;  // support is evenly spaced on [0, 1]
  int num_contexts = 2;
  bool balanced_weights = false;
  double dirichlet_alpha = 1.0;
  std::uint64_t seed = 0;
};

/// Random RMMDP: Dirichlet(alpha) rows for T, nu, w and every mu_m(s, a, .).
Rmmdp random_model(const GeneratorSpec& spec);

}  // namespace rmm
