#include "tsclab/curve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tsclab {

BezierCurve init_curve(const Weights& a, const Weights& b) {
    if (!a.same_shape(b)) throw DimensionError("init_curve: endpoint shapes disagree");
    BezierCurve c;
    c.a = a;
    c.b = b;
    c.control = weights_axpby(0.5, a, 0.5, b);
    return c;
}

namespace {

void check_curve(const BezierCurve& c) {
    if (!c.a.same_shape(c.b) || !c.a.same_shape(c.control))
        throw DimensionError("curve: endpoint and control shapes disagree");
}

Weights combine3(double ca, const Weights& a, double cc, const Weights& c, double cb,
                 const Weights& b) {
    Weights out = zeros_like(a);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t i = 0; i < a.layers[l].w.size(); ++i)
            out.layers[l].w.data()[i] = ca * a.layers[l].w.data()[i] +
                                        cc * c.layers[l].w.data()[i] +
                                        cb * b.layers[l].w.data()[i];
        for (std::size_t i = 0; i < a.layers[l].b.size(); ++i)
            out.layers[l].b[i] =
                ca * a.layers[l].b[i] + cc * c.layers[l].b[i] + cb * b.layers[l].b[i];
    }
    return out;
}

Weights scale_weights(const Weights& w, double s) {
    Weights out = w;
    for (auto& layer : out.layers) {
        for (double& v : layer.w.data()) v *= s;
        for (double& v : layer.b) v *= s;
    }
    return out;
}

} // namespace

Weights curve_point(const BezierCurve& c, double t) {
    check_curve(c);
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("curve_point: t must lie in [0, 1]");
    if (t == 0.0) return c.a; // boundary points are the endpoints, bitwise
    if (t == 1.0) return c.b;
    const double u = 1.0 - t;
    return combine3(u * u, c.a, 2.0 * t * u, c.control, t * t, c.b);
}

namespace {

CurveGradients chain_rule(const BezierCurve& c, double t, double loss, Gradients g) {
    const double u = 1.0 - t;
    CurveGradients out;
    out.loss = loss;
    out.d_a = scale_weights(g, u * u);
    out.d_control = scale_weights(g, 2.0 * t * u);
    out.d_b = scale_weights(std::move(g), t * t);
    (void)c;
    return out;
}

} // namespace

CurveGradients curve_gradients_ce(const NetworkSpec& spec, const BezierCurve& c, double t,
                                  const Matrix& batch, const std::vector<int>& labels) {
    check_curve(c);
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("curve gradients: t must lie in [0, 1]");
    Weights point = curve_point(c, t);
    auto [loss, g] = ce_gradients(spec, point, batch, labels);
    return chain_rule(c, t, loss, std::move(g));
}

CurveGradients curve_gradients_ntxent(const NetworkSpec& spec, const BezierCurve& c, double t,
                                      const Matrix& views_a, const Matrix& views_b,
                                      double temperature) {
    check_curve(c);
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("curve gradients: t must lie in [0, 1]");
    Weights point = curve_point(c, t);
    auto [loss, g] = ntxent_gradients(spec, point, views_a, views_b, temperature);
    return chain_rule(c, t, loss, std::move(g));
}

BezierCurve fit_quad_curve(const NetworkSpec& spec, const BezierCurve& c, const Dataset& data,
                           const TrainingMethod& method, int epochs, bool update_endpoints,
                           std::uint64_t seed) {
    check_curve(c);
    check_shapes(spec, c.a);
    method.validate();
    if (epochs < 0) throw ArgumentError("fit_quad_curve: epochs must be >= 0");
    if (data.size() == 0) throw ArgumentError("fit_quad_curve: empty dataset");
    if (data.dim() != static_cast<std::size_t>(spec.layer_dims[0]))
        throw DimensionError("fit_quad_curve: sample width does not match d_0");
    const bool supervised = method.kind == TrainKind::supervised_ce;
    if (supervised && !data.labels)
        throw ArgumentError("fit_quad_curve: supervised fitting needs labels");

    BezierCurve cur = c;
    Rng rng(seed);
    const std::size_t n = data.size();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lr = schedule_lr(method, epoch, epochs);
        std::vector<std::size_t> order = rng.permutation(n);
        for (std::size_t start = 0; start < n; start += method.batch_size) {
            const std::size_t stop = std::min(n, start + method.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            if (!supervised && idx.size() < 2) continue;
            const double t = rng.uniform(); // fresh t per minibatch
            Matrix batch = gather_rows(data, idx);
            CurveGradients g;
            if (supervised) {
                std::vector<int> labels = gather_labels(data, idx);
                g = curve_gradients_ce(spec, cur, t, batch, labels);
            } else {
                auto [va, vb] = contrastive_views(batch, rng);
                g = curve_gradients_ntxent(spec, cur, t, va, vb, method.temperature);
            }
            if (!std::isfinite(g.loss)) throw NumericError("fit_quad_curve: non-finite loss");
            weights_add_scaled(cur.control, -lr, g.d_control);
            if (update_endpoints) {
                weights_add_scaled(cur.a, -lr, g.d_a);
                weights_add_scaled(cur.b, -lr, g.d_b);
            }
        }
    }
    return cur;
}

std::vector<double> uniform_t_grid(int k) {
    if (k < 2) throw ArgumentError("uniform_t_grid: need at least two points");
    std::vector<double> grid(k);
    for (int i = 0; i < k; ++i)
        grid[i] = static_cast<double>(i) / static_cast<double>(k - 1);
    grid.front() = 0.0;
    grid.back() = 1.0;
    return grid;
}

CurveProfile eval_along_curve(const NetworkSpec& spec, const BezierCurve& c,
                              const std::vector<double>& t_grid, const Dataset& clean_test,
                              const TriggerSpec& trigger, const Evaluator& evaluator) {
    check_curve(c);
    if (t_grid.empty()) throw ArgumentError("eval_along_curve: empty t grid");
    for (double t : t_grid)
        if (!(t >= 0.0 && t <= 1.0))
            throw ArgumentError("eval_along_curve: grid values must lie in [0, 1]");

    CurveProfile profile;
    for (double t : t_grid) {
        Weights point = curve_point(c, t);
        Evaluator::Result r = evaluator(spec, point, clean_test, trigger);
        ProfileRow row;
        row.t = t;
        row.acc = r.metrics.acc;
        row.asr = r.metrics.asr;
        row.loss_clean = r.loss_clean;
        row.loss_poison = r.loss_poison;
        profile.rows.push_back(row);
    }
    return profile;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void profile_to_csv(const std::string& path, const CurveProfile& profile) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("profile csv: cannot open '" + path + "' for writing");
    f << "t,acc,asr,loss_clean,loss_poison\n";
    for (const auto& r : profile.rows)
        f << fmt_double(r.t) << ',' << fmt_double(r.acc) << ',' << fmt_double(r.asr) << ','
          << fmt_double(r.loss_clean) << ',' << fmt_double(r.loss_poison) << "\n";
    if (!f) throw IoError("profile csv: write to '" + path + "' failed");
}

CurveProfile profile_from_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("profile csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line) || line != "t,acc,asr,loss_clean,loss_poison")
        throw IoError("profile csv: unexpected header");
    CurveProfile profile;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("profile csv: unparseable cell '" + cell + "'");
            }
        }
        if (vals.size() != 5) throw IoError("profile csv: row width mismatch");
        profile.rows.push_back({vals[0], vals[1], vals[2], vals[3], vals[4]});
    }
    return profile;
}

} // namespace tsclab
