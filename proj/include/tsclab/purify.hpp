#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tsclab/align.hpp"
#include "tsclab/curve.hpp"

namespace tsclab {

// Two-stage symmetry-connectivity defense settings. The method field carries
// the loss kind, batch size and temperature used for curve fits and fine-tuning.
struct TscConfig {
    int global_epochs = 3;     // purification rounds
    double curve_index = 0.4;  // t at which models are retrieved from curves
    int curve_epochs = 200;    // SGD epochs per curve fit
    double curve_lr = 0.02;    // curve training step size (cosine decayed)
    int finetune_epochs = 5;   // clean fine-tune after every round
    double finetune_lr = 1e-4;
    TrainingMethod method;

    static TscConfig supervised_defaults();
    static TscConfig contrastive_defaults();
    void validate() const;
};

struct StageRecord {
    int round = 0;
    int stage = 0;               // 1 = un-align, 2 = re-align (mcr uses stage 1)
    PermutationSet permutation;
    CurveProfile profile;        // filled when an inspector is provided
    Weights retrieved;           // stage 1: curve point; stage 2: round output
    double seconds = 0.0;
};

struct DefenseReport {
    std::string defense;
    Metrics before, after;       // filled by the experiment harness
    std::vector<StageRecord> stages;
    double total_seconds = 0.0;
};

// Evaluation hook the harness may attach; the defense itself never touches any
// data beyond d_c, so profiling against held-out sets happens out here.
using StageInspector = std::function<CurveProfile(int round, int stage, const BezierCurve&)>;

// One round: un-align w against itself, fit a curve to the permuted twin and
// retrieve t; re-align the retrieved model to w, fit a second curve, retrieve
// again; fine-tune on d_c. Repeated global_epochs times.
std::pair<Weights, DefenseReport> tsc_defend(const NetworkSpec& spec, const Weights& w_adv,
                                             const Dataset& d_c, const TscConfig& cfg,
                                             std::uint64_t seed,
                                             const StageInspector& inspector = {});

// Mode-connectivity repair baseline: fine-tune a copy of w_adv briefly, fit one
// curve between original and copy on d_c, return curve_point(curve_index).
std::pair<Weights, DefenseReport> mcr_defend(const NetworkSpec& spec, const Weights& w_adv,
                                             const Dataset& d_c, const TscConfig& cfg,
                                             std::uint64_t seed,
                                             const StageInspector& inspector = {});

// Constant-lr training wrapper used by the defenses.
Weights fine_tune(const NetworkSpec& spec, const Weights& w, const Dataset& data,
                  const TrainingMethod& method, int epochs, double lr, std::uint64_t seed);

// The affine plane through three weight vectors, orthonormalised with
// Gram-Schmidt. Anchor coordinates: a at (0, 0), b at (bx, 0), c at (cx, cy).
struct Plane {
    Weights origin, e1, e2;
    double bx = 0.0, cx = 0.0, cy = 0.0;
};

Plane make_plane(const Weights& a, const Weights& b, const Weights& c);
Weights plane_point(const Plane& plane, double x, double y);

struct LossSet {
    Matrix samples;
    std::vector<int> labels;
};

struct LandscapePoint {
    double x = 0.0, y = 0.0;
    double loss_clean = 0.0, loss_poison = 0.0;
};

struct LandscapeGrid {
    Plane plane;
    int nx = 0, ny = 0;
    std::vector<LandscapePoint> points; // x-major, nx * ny entries
};

// Cross-entropy of both loss sets on an nx x ny grid covering the anchors'
// bounding box with a relative margin on each side.
LandscapeGrid loss_landscape_plane(const NetworkSpec& spec, const Weights& a, const Weights& b,
                                   const Weights& c, const LossSet& clean, const LossSet& poison,
                                   int nx, int ny, double margin);

void landscape_to_csv(const std::string& path, const LandscapeGrid& grid);

double weights_dot(const Weights& a, const Weights& b);
double weights_norm(const Weights& a);

} // namespace tsclab
