#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rmm/core.hpp"
#include "rmm/policy.hpp"

namespace rmm {

enum class Execution { serial, parallel };

/// Default cap on (S*A*Z)^H for exact enumeration.
inline constexpr double kEnumerationBudget = 1e6;

/// Called once per trajectory with positive path weight.
/// probs[i] is the probability of the trajectory under models[i].
/// Contributions go into `acc`, a buffer of the width passed to the kernel.
using TrajectoryVisitor = std::function<void(std::span<const Step> steps,
                                             std::span<const double> probs,
                                             std::span<double> acc)>;

/// Sums visitor contributions over every trajectory of length H.
///
/// All models must share dynamics (same_dynamics). The serial path is a
/// single depth-first walk and is kept as the reference implementation; the
/// parallel path splits on first-step (s, a, r) branches and reduces the
/// per-branch buffers in branch order, so its result does not depend on the
/// thread count. Throws ResourceError when (S*A*Z)^H exceeds `budget`.
std::vector<double> accumulate_trajectories(std::span<const Rmmdp* const> models,
                                            const Policy& policy, std::size_t width,
                                            const TrajectoryVisitor& visit,
                                            Execution exec = Execution::parallel,
                                            double budget = kEnumerationBudget);

/// (S*A*Z)^H as a double (no overflow).
double trajectory_space_size(const Rmmdp& model);

}  // namespace rmm
