#pragma once

// Shared test utilities. The oracles here are deliberately independent
// reimplementations: plain per-sample loops for the forward pass, central
// finite differences for gradients, and exhaustive enumeration for assignments.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tsclab/align.hpp"
#include "tsclab/data.hpp"
#include "tsclab/net.hpp"
#include "tsclab/rng.hpp"

namespace testutil {

using namespace tsclab;

inline NetworkSpec make_spec(std::vector<int> dims, std::uint64_t seed = 1) {
    NetworkSpec spec;
    spec.layer_dims = std::move(dims);
    spec.seed = seed;
    return spec;
}

inline Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d, double lo = 0.0,
                            double hi = 1.0) {
    Matrix m(n, d);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

inline Dataset random_dataset(Rng& rng, std::size_t n, std::size_t d, int num_classes) {
    Dataset data;
    data.samples = random_matrix(rng, n, d);
    data.labels = std::vector<int>(n);
    for (auto& y : *data.labels) y = static_cast<int>(rng.below(num_classes));
    data.poison_mask.assign(n, 0);
    data.num_classes = num_classes;
    return data;
}

// Weights with a positive bias offset; handy to keep relu units alive.
inline Weights random_weights(const NetworkSpec& spec, Rng& rng, double scale = 0.5,
                              double bias = 0.0) {
    Weights w;
    for (int l = 0; l < spec.num_layers(); ++l) {
        Layer layer;
        layer.w = Matrix(spec.layer_dims[l + 1], spec.layer_dims[l]);
        for (double& v : layer.w.data()) v = rng.uniform(-scale, scale);
        layer.b.assign(spec.layer_dims[l + 1], 0.0);
        for (double& v : layer.b) v = bias + rng.uniform(-0.05, 0.05);
        w.layers.push_back(std::move(layer));
    }
    return w;
}

// Independent forward oracle: naive per-sample loops, no shared code with the
// library's matmul helpers.
inline std::vector<double> forward_oracle(const NetworkSpec& spec, const Weights& w,
                                          const std::vector<double>& x) {
    std::vector<double> cur = x;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const Matrix& wm = w.layers[l].w;
        std::vector<double> next(wm.rows(), 0.0);
        for (std::size_t i = 0; i < wm.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < wm.cols(); ++j) s += wm(i, j) * cur[j];
            next[i] = s + w.layers[l].b[i];
        }
        if (l + 1 < spec.num_layers())
            for (double& v : next) v = std::max(0.0, v);
        cur = std::move(next);
    }
    return cur;
}

// Central finite differences of a scalar function of the weights.
inline Gradients fd_gradients(const Weights& w, const std::function<double(const Weights&)>& f,
                              double h = 1e-6) {
    Gradients g = zeros_like(w);
    Weights probe = w;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        for (std::size_t i = 0; i < w.layers[l].w.size(); ++i) {
            const double orig = probe.layers[l].w.data()[i];
            probe.layers[l].w.data()[i] = orig + h;
            const double up = f(probe);
            probe.layers[l].w.data()[i] = orig - h;
            const double dn = f(probe);
            probe.layers[l].w.data()[i] = orig;
            g.layers[l].w.data()[i] = (up - dn) / (2.0 * h);
        }
        for (std::size_t i = 0; i < w.layers[l].b.size(); ++i) {
            const double orig = probe.layers[l].b[i];
            probe.layers[l].b[i] = orig + h;
            const double up = f(probe);
            probe.layers[l].b[i] = orig - h;
            const double dn = f(probe);
            probe.layers[l].b[i] = orig;
            g.layers[l].b[i] = (up - dn) / (2.0 * h);
        }
    }
    return g;
}

inline double weights_l2(const Weights& a) {
    double s = 0.0;
    for (const auto& l : a.layers) {
        for (double v : l.w.data()) s += v * v;
        for (double v : l.b) s += v * v;
    }
    return std::sqrt(s);
}

// Norm-based relative error between two same-shaped gradient sets.
inline double grad_rel_err(const Weights& a, const Weights& b) {
    const Weights diff = weights_axpby(1.0, a, -1.0, b);
    const double denom = std::max({1e-8, weights_l2(a), weights_l2(b)});
    return weights_l2(diff) / denom;
}

struct BruteAssign {
    std::vector<int> assign;
    double value = 0.0;
};

// Exhaustive assignment oracle. Enumerates permutations in lexicographic order
// and keeps only strictly better values, so ties resolve to the
// lexicographically smallest optimum.
inline BruteAssign brute_force_assignment(const Matrix& m, bool maximize) {
    const int n = static_cast<int>(m.rows());
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    BruteAssign best;
    bool first = true;
    do {
        double v = assignment_value(m, perm);
        if (first || (maximize ? v > best.value : v < best.value)) {
            best.assign = perm;
            best.value = v;
            first = false;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace testutil
