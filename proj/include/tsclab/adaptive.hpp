#pragma once

#include <cstdint>

#include "tsclab/align.hpp"
#include "tsclab/curve.hpp"

namespace tsclab {

// Subspace-aware attacker: un-aligns the backdoored model against itself,
// spans a quadratic curve to the permuted twin, and trains endpoints and
// control jointly on the attacker's (poisoned) data so the whole low-loss
// region keeps the backdoor.
struct AdaptiveAttackConfig {
    int curve_epochs = 200;
    double curve_lr = 0.02;
    TrainingMethod method; // kind, batch size, temperature and schedule
};

struct AdaptiveAttackResult {
    Weights model;              // first curve endpoint after joint training
    BezierCurve curve;          // the trained subspace, for inspection
    PermutationSet permutation; // the max-distance self-permutation used
};

AdaptiveAttackResult adaptive_subspace_attack(const NetworkSpec& spec, const Weights& w_adv,
                                              const Dataset& d_adv,
                                              const AdaptiveAttackConfig& cfg,
                                              std::uint64_t seed);

} // namespace tsclab
