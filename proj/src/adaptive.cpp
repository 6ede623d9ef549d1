#include "tsclab/adaptive.hpp"

namespace tsclab {

AdaptiveAttackResult adaptive_subspace_attack(const NetworkSpec& spec, const Weights& w_adv,
                                              const Dataset& d_adv,
                                              const AdaptiveAttackConfig& cfg,
                                              std::uint64_t seed) {
    check_shapes(spec, w_adv);
    if (cfg.curve_epochs < 0)
        throw ArgumentError("adaptive attack: curve epochs must be >= 0");

    AdaptiveAttackResult out;
    out.permutation =
        find_permutation(spec, w_adv, w_adv, d_adv, AlignObjective::max_distance);
    Weights twin = permute_layers(spec, w_adv, out.permutation);

    TrainingMethod method = cfg.method;
    method.learning_rate = cfg.curve_lr;

    BezierCurve curve = init_curve(w_adv, twin);
    out.curve = fit_quad_curve(spec, curve, d_adv, method, cfg.curve_epochs,
                               /*update_endpoints=*/true, derive_seed(seed, "adaptive-curve"));
    out.model = out.curve.a;
    return out;
}

} // namespace tsclab
