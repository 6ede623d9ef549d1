#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsclab/data.hpp"
#include "tsclab/dataset.hpp"
#include "tsclab/net.hpp"

namespace tsclab {

// Quadratic Bezier in weight space:
//   gamma(t) = (1-t)^2 a + 2 t (1-t) control + t^2 b.
struct BezierCurve {
    Weights a;
    Weights control;
    Weights b;
};

// Control point starts at the chord midpoint (a + b) / 2.
BezierCurve init_curve(const Weights& a, const Weights& b);

// Point on the curve; t = 0 and t = 1 return the endpoints bitwise.
Weights curve_point(const BezierCurve& c, double t);

// Loss and chain-rule gradients at a fixed t: with g the loss gradient at
// gamma(t), d a = (1-t)^2 g, d control = 2 t (1-t) g, d b = t^2 g.
struct CurveGradients {
    double loss = 0.0;
    Gradients d_a, d_control, d_b;
};

CurveGradients curve_gradients_ce(const NetworkSpec& spec, const BezierCurve& c, double t,
                                  const Matrix& batch, const std::vector<int>& labels);
CurveGradients curve_gradients_ntxent(const NetworkSpec& spec, const BezierCurve& c, double t,
                                      const Matrix& views_a, const Matrix& views_b,
                                      double temperature);

// Minibatch SGD on the expected loss along the curve, one fresh t ~ U(0, 1)
// drawn per minibatch. With update_endpoints = false (defense mode) only the
// control point moves and the endpoints stay bitwise identical; with true
// (adaptive mode) all three points are updated. `epochs` overrides
// method.epochs; the other method fields (kind, lr, batch, temperature,
// schedule) apply as in train().
BezierCurve fit_quad_curve(const NetworkSpec& spec, const BezierCurve& c, const Dataset& data,
                           const TrainingMethod& method, int epochs, bool update_endpoints,
                           std::uint64_t seed);

struct ProfileRow {
    double t = 0.0;
    double acc = 0.0;
    double asr = 0.0;
    double loss_clean = 0.0;
    double loss_poison = 0.0;
};

struct CurveProfile {
    std::vector<ProfileRow> rows;
};

// k evenly spaced values covering [0, 1] inclusive.
std::vector<double> uniform_t_grid(int k);

// ACC / ASR / losses of curve_point(t) for every t in the grid, measured by the
// given evaluator (direct argmax or retrained linear probe).
CurveProfile eval_along_curve(const NetworkSpec& spec, const BezierCurve& c,
                              const std::vector<double>& t_grid, const Dataset& clean_test,
                              const TriggerSpec& trigger, const Evaluator& evaluator);

// CSV with header t,acc,asr,loss_clean,loss_poison; 17 significant digits.
void profile_to_csv(const std::string& path, const CurveProfile& profile);
CurveProfile profile_from_csv(const std::string& path);

} // namespace tsclab
