#include "rmm/generators.hpp"

#include <random>

#include "rmm/rng.hpp"

namespace rmm {

namespace {

void dirichlet(std::span<double> row, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  double total = 0.0;
  for (double& v : row) {
    v = gamma(rng);
    total += v;
  }
  for (double& v : row) v /= total;
}

}  // namespace

Rmmdp example_e1(int horizon) {
  Rmmdp model = make_empty_model(1, 2, horizon, RewardSupport::binary(), 2);
  model.transition = {1.0, 1.0};
  model.init = {1.0};
  model.weights = {0.5, 0.5};
  model.rewards = {0.8, 0.2, 0.5, 0.5,   // context 0: a0 ~ Bern(0.2), a1 ~ Bern(0.5)
                   0.2, 0.8, 0.5, 0.5};  // context 1: a0 ~ Bern(0.8), a1 ~ Bern(0.5)
  return model;
}

Rmmdp uniform_rewards_like(const Rmmdp& model) {
  Rmmdp out = model;
  const double p = 1.0 / model.num_rewards();
  for (double& v : out.rewards) v = p;
  return out;
}

Rmmdp random_model(const GeneratorSpec& spec) {
  std::vector<double> values(static_cast<std::size_t>(spec.num_rewards));
  for (int z = 0; z < spec.num_rewards; ++z) {
    values[static_cast<std::size_t>(z)] =
        spec.num_rewards == 1 ? 1.0 : static_cast<double>(z) / (spec.num_rewards - 1);
  }
  Rmmdp model = make_empty_model(spec.num_states, spec.num_actions, spec.horizon,
                                 RewardSupport(std::move(values)), spec.num_contexts);
  Rng rng(derive_seed(spec.seed, 0x6d6f64656cULL));
  const auto S = static_cast<std::size_t>(spec.num_states);
  const auto Z = static_cast<std::size_t>(spec.num_rewards);
  for (std::size_t r = 0; r < model.transition.size() / S; ++r) {
    dirichlet(std::span<double>(model.transition).subspan(r * S, S), spec.dirichlet_alpha, rng);
  }
  dirichlet(model.init, spec.dirichlet_alpha, rng);
  if (spec.balanced_weights) {
    for (double& w : model.weights) w = 1.0 / spec.num_contexts;
  } else {
    dirichlet(model.weights, spec.dirichlet_alpha, rng);
  }
  for (std::size_t r = 0; r < model.rewards.size() / Z; ++r) {
    dirichlet(std::span<double>(model.rewards).subspan(r * Z, Z), spec.dirichlet_alpha, rng);
  }
  return model;
}

}  // namespace rmm
