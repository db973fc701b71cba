#include "rmm/enumerate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rmm {

namespace {

class Walker {
 public:
  Walker(std::span<const Rmmdp* const> models, const Policy& policy,
         const TrajectoryVisitor& visit, std::span<double> acc)
      : models_(models), policy_(policy), visit_(visit), acc_(acc), base_(*models.front()) {
    const auto H = static_cast<std::size_t>(base_.horizon);
    offsets_.push_back(0);
    for (const Rmmdp* m : models_) offsets_.push_back(offsets_.back() + m->weights.size());
    alpha_.assign(H + 1, std::vector<double>(offsets_.back(), 0.0));
    for (std::size_t i = 0; i < models_.size(); ++i) {
      std::copy(models_[i]->weights.begin(), models_[i]->weights.end(),
                alpha_[0].begin() + static_cast<std::ptrdiff_t>(offsets_[i]));
    }
    action_probs_.assign(H, std::vector<double>(static_cast<std::size_t>(base_.num_actions)));
    steps_.resize(H);
    probs_.resize(models_.size());
  }

  void root() {
    for (int s = 0; s < base_.num_states; ++s) {
      const double p = base_.init[static_cast<std::size_t>(s)];
      if (p > 0.0) state_node(0, s, p);
    }
  }

  // Runs the subtree below first-step branch (s, a, z).
  void branch(int s, int a, int z) {
    const double p = base_.init[static_cast<std::size_t>(s)];
    if (p <= 0.0) return;
    auto& pi = action_probs_[0];
    policy_.distribution({}, s, pi);
    const double pa = pi[static_cast<std::size_t>(a)];
    if (pa <= 0.0) return;
    reward_node(0, s, a, z, p * pa);
  }

 private:
  void state_node(std::size_t t, int s, double weight) {
    auto& pi = action_probs_[t];
    policy_.distribution(std::span<const Step>(steps_).first(t), s, pi);
    for (int a = 0; a < base_.num_actions; ++a) {
      const double pa = pi[static_cast<std::size_t>(a)];
      if (pa <= 0.0) continue;
      for (int z = 0; z < base_.num_rewards(); ++z) reward_node(t, s, a, z, weight * pa);
    }
  }

  void reward_node(std::size_t t, int s, int a, int z, double weight) {
    const auto& alpha = alpha_[t];
    auto& next = alpha_[t + 1];
    bool any = false;
    for (std::size_t i = 0; i < models_.size(); ++i) {
      const Rmmdp& model = *models_[i];
      for (int m = 0; m < model.num_contexts(); ++m) {
        const std::size_t k = offsets_[i] + static_cast<std::size_t>(m);
        next[k] = alpha[k] * model.mu(m, s, a, z);
        any = any || next[k] != 0.0;
      }
    }
    if (!any) return;
    steps_[t] = Step{s, a, z};
    if (t + 1 == steps_.size()) {
      for (std::size_t i = 0; i < models_.size(); ++i) {
        double total = 0.0;
        for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) total += next[k];
        probs_[i] = weight * total;
      }
      visit_(steps_, probs_, acc_);
      return;
    }
    for (int s2 = 0; s2 < base_.num_states; ++s2) {
      const double p = base_.T(s, a, s2);
      if (p > 0.0) state_node(t + 1, s2, weight * p);
    }
  }

  std::span<const Rmmdp* const> models_;
  const Policy& policy_;
  const TrajectoryVisitor& visit_;
  std::span<double> acc_;
  const Rmmdp& base_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<double>> alpha_;
  std::vector<std::vector<double>> action_probs_;
  std::vector<Step> steps_;
  std::vector<double> probs_;
};

void check_models(std::span<const Rmmdp* const> models, const Policy& policy) {
  if (models.empty()) throw std::invalid_argument("no models to enumerate");
  for (const Rmmdp* m : models) {
    check_dimensions(*m);
    if (!same_dynamics(*models.front(), *m)) {
      throw std::invalid_argument("enumerated models must share transitions and initial state");
    }
  }
  if (policy.num_actions() != models.front()->num_actions) {
    throw std::invalid_argument("policy action count differs from the model");
  }
}

}  // namespace

double trajectory_space_size(const Rmmdp& model) {
  return std::pow(static_cast<double>(model.num_states) * model.num_actions * model.num_rewards(),
                  model.horizon);
}

std::vector<double> accumulate_trajectories(std::span<const Rmmdp* const> models,
                                            const Policy& policy, std::size_t width,
                                            const TrajectoryVisitor& visit, Execution exec,
                                            double budget) {
  check_models(models, policy);
  const Rmmdp& base = *models.front();
  const double size = trajectory_space_size(base);
  if (size > budget) {
    throw ResourceError("trajectory enumeration over " + std::to_string(size) +
                        " sequences exceeds the budget of " + std::to_string(budget));
  }

  std::vector<double> acc(width, 0.0);
  if (exec == Execution::serial) {
    Walker walker(models, policy, visit, acc);
    walker.root();
    return acc;
  }

  const int S = base.num_states;
  const int A = base.num_actions;
  const int Z = base.num_rewards();
  const int branches = S * A * Z;
  std::vector<double> partial(static_cast<std::size_t>(branches) * width, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < branches; ++b) {
    const int s = b / (A * Z);
    const int a = (b / Z) % A;
    const int z = b % Z;
    std::span<double> slot(partial.data() + static_cast<std::size_t>(b) * width, width);
    Walker walker(models, policy, visit, slot);
    walker.branch(s, a, z);
  }
  for (int b = 0; b < branches; ++b) {
    for (std::size_t k = 0; k < width; ++k) acc[k] += partial[static_cast<std::size_t>(b) * width + k];
  }
  return acc;
}

}  // namespace rmm
