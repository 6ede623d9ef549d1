#include "tsclab/purify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace tsclab {

TscConfig TscConfig::supervised_defaults() {
    TscConfig cfg;
    cfg.global_epochs = 3;
    cfg.curve_index = 0.4;
    cfg.curve_epochs = 200;
    cfg.curve_lr = 0.02;
    cfg.finetune_epochs = 5;
    cfg.finetune_lr = 1e-4;
    cfg.method.kind = TrainKind::supervised_ce;
    cfg.method.batch_size = 64;
    cfg.method.lr_schedule = LrSchedule::cosine;
    return cfg;
}

TscConfig TscConfig::contrastive_defaults() {
    TscConfig cfg = supervised_defaults();
    cfg.global_epochs = 2;
    cfg.curve_index = 0.25;
    cfg.finetune_lr = 5e-5;
    cfg.method.kind = TrainKind::contrastive_ntxent;
    cfg.method.temperature = 0.5;
    return cfg;
}

void TscConfig::validate() const {
    if (global_epochs < 0) throw ArgumentError("tsc config: rounds must be >= 0");
    if (!(curve_index >= 0.0 && curve_index <= 1.0))
        throw ArgumentError("tsc config: curve index must lie in [0, 1]");
    if (curve_epochs < 1) throw ArgumentError("tsc config: curve epochs must be >= 1");
    if (!(curve_lr > 0.0)) throw ArgumentError("tsc config: curve lr must be > 0");
    if (finetune_epochs < 0) throw ArgumentError("tsc config: fine-tune epochs must be >= 0");
    if (!(finetune_lr > 0.0)) throw ArgumentError("tsc config: fine-tune lr must be > 0");
}

Weights fine_tune(const NetworkSpec& spec, const Weights& w, const Dataset& data,
                  const TrainingMethod& method, int epochs, double lr, std::uint64_t seed) {
    TrainingMethod m = method;
    m.epochs = epochs;
    m.learning_rate = lr;
    m.lr_schedule = LrSchedule::constant;
    return train(spec, w, data, m, seed);
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TrainingMethod curve_method(const TscConfig& cfg) {
    TrainingMethod m = cfg.method;
    m.learning_rate = cfg.curve_lr;
    m.lr_schedule = LrSchedule::cosine;
    return m;
}

} // namespace

std::pair<Weights, DefenseReport> tsc_defend(const NetworkSpec& spec, const Weights& w_adv,
                                             const Dataset& d_c, const TscConfig& cfg,
                                             std::uint64_t seed,
                                             const StageInspector& inspector) {
    check_shapes(spec, w_adv);
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    DefenseReport report;
    report.defense = "tsc";

    Weights w = w_adv;
    const TrainingMethod method = curve_method(cfg);
    for (int round = 1; round <= cfg.global_epochs; ++round) {
        // Stage 1: push the model out of its basin along its own symmetry
        // orbit, connect, and step onto the curve.
        auto t1 = std::chrono::steady_clock::now();
        StageRecord s1;
        s1.round = round;
        s1.stage = 1;
        s1.permutation = find_permutation(spec, w, w, d_c, AlignObjective::max_distance);
        Weights twin = permute_layers(spec, w, s1.permutation);
        BezierCurve c1 = fit_quad_curve(spec, init_curve(w, twin), d_c, method, cfg.curve_epochs,
                                        /*update_endpoints=*/false,
                                        derive_seed(seed, "tsc-curve", round, 1));
        Weights w_t = curve_point(c1, cfg.curve_index);
        if (inspector) s1.profile = inspector(round, 1, c1);
        s1.retrieved = w_t;
        s1.seconds = seconds_since(t1);
        report.stages.push_back(std::move(s1));

        // Stage 2: re-align the retrieved model to the round's starting point
        // and connect again.
        auto t2 = std::chrono::steady_clock::now();
        StageRecord s2;
        s2.round = round;
        s2.stage = 2;
        s2.permutation = find_permutation(spec, w, w_t, d_c, AlignObjective::min_distance);
        Weights aligned = permute_layers(spec, w_t, s2.permutation);
        BezierCurve c2 = fit_quad_curve(spec, init_curve(w, aligned), d_c, method,
                                        cfg.curve_epochs, /*update_endpoints=*/false,
                                        derive_seed(seed, "tsc-curve", round, 2));
        w = curve_point(c2, cfg.curve_index);

        // Clean fine-tune closes every round, including the last.
        w = fine_tune(spec, w, d_c, cfg.method, cfg.finetune_epochs, cfg.finetune_lr,
                      derive_seed(seed, "tsc-finetune", round));
        if (inspector) s2.profile = inspector(round, 2, c2);
        s2.retrieved = w;
        s2.seconds = seconds_since(t2);
        report.stages.push_back(std::move(s2));
    }
    report.total_seconds = seconds_since(t_start);
    return {std::move(w), std::move(report)};
}

std::pair<Weights, DefenseReport> mcr_defend(const NetworkSpec& spec, const Weights& w_adv,
                                             const Dataset& d_c, const TscConfig& cfg,
                                             std::uint64_t seed,
                                             const StageInspector& inspector) {
    check_shapes(spec, w_adv);
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    DefenseReport report;
    report.defense = "mcr";

    Weights tuned = fine_tune(spec, w_adv, d_c, cfg.method, cfg.finetune_epochs, cfg.finetune_lr,
                              derive_seed(seed, "mcr-finetune"));
    BezierCurve c = fit_quad_curve(spec, init_curve(w_adv, tuned), d_c, curve_method(cfg),
                                   cfg.curve_epochs, /*update_endpoints=*/false,
                                   derive_seed(seed, "mcr-curve"));
    Weights w = curve_point(c, cfg.curve_index);

    StageRecord s;
    s.round = 1;
    s.stage = 1;
    if (inspector) s.profile = inspector(1, 1, c);
    s.retrieved = w;
    s.seconds = seconds_since(t_start);
    report.stages.push_back(std::move(s));
    report.total_seconds = seconds_since(t_start);
    return {std::move(w), std::move(report)};
}

double weights_dot(const Weights& a, const Weights& b) {
    if (!a.same_shape(b)) throw DimensionError("weights_dot: shape mismatch");
    KahanSum s;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t i = 0; i < a.layers[l].w.size(); ++i)
            s.add(a.layers[l].w.data()[i] * b.layers[l].w.data()[i]);
        for (std::size_t i = 0; i < a.layers[l].b.size(); ++i)
            s.add(a.layers[l].b[i] * b.layers[l].b[i]);
    }
    return s.value();
}

double weights_norm(const Weights& a) { return std::sqrt(weights_dot(a, a)); }

Plane make_plane(const Weights& a, const Weights& b, const Weights& c) {
    if (!a.same_shape(b) || !a.same_shape(c))
        throw DimensionError("make_plane: anchor shapes disagree");
    Plane plane;
    plane.origin = a;

    Weights u = weights_axpby(1.0, b, -1.0, a);
    const double nu = weights_norm(u);
    if (!(nu > 1e-12)) throw NumericError("make_plane: first two anchors coincide");
    plane.e1 = u;
    for (auto& layer : plane.e1.layers) {
        for (double& v : layer.w.data()) v /= nu;
        for (double& v : layer.b) v /= nu;
    }
    plane.bx = nu;

    Weights v = weights_axpby(1.0, c, -1.0, a);
    const double proj = weights_dot(v, plane.e1);
    Weights v_perp = v;
    weights_add_scaled(v_perp, -proj, plane.e1);
    const double nv = weights_norm(v_perp);
    if (!(nv > 1e-10 * std::max(1.0, weights_norm(v))))
        throw NumericError("make_plane: anchors are collinear, the plane is degenerate");
    plane.e2 = v_perp;
    for (auto& layer : plane.e2.layers) {
        for (double& w : layer.w.data()) w /= nv;
        for (double& w : layer.b) w /= nv;
    }
    plane.cx = proj;
    plane.cy = nv;
    return plane;
}

Weights plane_point(const Plane& plane, double x, double y) {
    Weights w = plane.origin;
    weights_add_scaled(w, x, plane.e1);
    weights_add_scaled(w, y, plane.e2);
    return w;
}

LandscapeGrid loss_landscape_plane(const NetworkSpec& spec, const Weights& a, const Weights& b,
                                   const Weights& c, const LossSet& clean, const LossSet& poison,
                                   int nx, int ny, double margin) {
    if (nx < 2 || ny < 2) throw ArgumentError("landscape: grid needs at least 2x2 points");
    if (!(margin >= 0.0)) throw ArgumentError("landscape: margin must be >= 0");
    if (clean.samples.rows() != clean.labels.size() ||
        poison.samples.rows() != poison.labels.size())
        throw DimensionError("landscape: loss set labels do not match samples");

    LandscapeGrid grid;
    grid.plane = make_plane(a, b, c);
    grid.nx = nx;
    grid.ny = ny;

    const double xs[3] = {0.0, grid.plane.bx, grid.plane.cx};
    const double ys[3] = {0.0, 0.0, grid.plane.cy};
    double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
    for (int i = 1; i < 3; ++i) {
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
    }
    const double xspan = xmax - xmin, yspan = ymax - ymin;
    xmin -= margin * xspan;
    xmax += margin * xspan;
    ymin -= margin * yspan;
    ymax += margin * yspan;

    for (int ix = 0; ix < nx; ++ix) {
        const double x = xmin + (xmax - xmin) * static_cast<double>(ix) /
                                    static_cast<double>(nx - 1);
        for (int iy = 0; iy < ny; ++iy) {
            const double y = ymin + (ymax - ymin) * static_cast<double>(iy) /
                                        static_cast<double>(ny - 1);
            Weights w = plane_point(grid.plane, x, y);
            LandscapePoint p;
            p.x = x;
            p.y = y;
            p.loss_clean = ce_loss(spec, w, clean.samples, clean.labels);
            p.loss_poison = ce_loss(spec, w, poison.samples, poison.labels);
            grid.points.push_back(p);
        }
    }
    return grid;
}

void landscape_to_csv(const std::string& path, const LandscapeGrid& grid) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("landscape csv: cannot open '" + path + "' for writing");
    auto fmt = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    f << "x,y,loss_clean,loss_poison\n";
    for (const auto& p : grid.points)
        f << fmt(p.x) << ',' << fmt(p.y) << ',' << fmt(p.loss_clean) << ','
          << fmt(p.loss_poison) << "\n";
    if (!f) throw IoError("landscape csv: write to '" + path + "' failed");
}

} // namespace tsclab
