#include "tsclab/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tsclab {

void PermutationSet::validate(const NetworkSpec& spec) const {
    spec.validate();
    const int hidden = spec.num_layers() - 1;
    if (static_cast<int>(perms.size()) != hidden)
        throw DimensionError("permutation set: expected " + std::to_string(hidden) +
                             " hidden-layer permutations, got " + std::to_string(perms.size()));
    for (int l = 0; l < hidden; ++l) {
        const int d = spec.layer_dims[l + 1];
        const auto& p = perms[l];
        if (static_cast<int>(p.size()) != d)
            throw DimensionError("permutation set: layer " + std::to_string(l + 1) +
                                 " has length " + std::to_string(p.size()) + ", expected " +
                                 std::to_string(d));
        std::vector<char> seen(d, 0);
        for (int v : p) {
            if (v < 0 || v >= d || seen[v])
                throw ArgumentError("permutation set: layer " + std::to_string(l + 1) +
                                    " is not a permutation");
            seen[v] = 1;
        }
    }
}

bool PermutationSet::is_identity() const {
    for (const auto& p : perms)
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] != static_cast<int>(i)) return false;
    return true;
}

PermutationSet identity_permutation(const NetworkSpec& spec) {
    spec.validate();
    PermutationSet s;
    for (int l = 1; l < spec.num_layers(); ++l) {
        std::vector<int> p(spec.layer_dims[l]);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<int>(i);
        s.perms.push_back(std::move(p));
    }
    return s;
}

PermutationSet inverse_permutation(const PermutationSet& s) {
    PermutationSet inv;
    for (const auto& p : s.perms) {
        std::vector<int> q(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) q[p[i]] = static_cast<int>(i);
        inv.perms.push_back(std::move(q));
    }
    return inv;
}

namespace {

// Per-neuron standardization over the whole dataset: subtract the column mean,
// divide by the epsilon-floored population standard deviation.
void standardize_columns(Matrix& z) {
    const double eps = 1e-8;
    const std::size_t n = z.rows(), d = z.cols();
    for (std::size_t j = 0; j < d; ++j) {
        KahanSum s;
        for (std::size_t i = 0; i < n; ++i) s.add(z(i, j));
        const double mu = s.value() / static_cast<double>(n);
        KahanSum s2;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = z(i, j) - mu;
            s2.add(c * c);
        }
        const double sigma =
            std::max(std::sqrt(std::max(0.0, s2.value() / static_cast<double>(n))), eps);
        for (std::size_t i = 0; i < n; ++i) z(i, j) = (z(i, j) - mu) / sigma;
    }
}

Matrix all_samples(const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return gather_rows(data, idx);
}

// Classic O(n^3) shortest-augmenting-path assignment (minimisation), 1-indexed
// with a virtual column 0.
std::vector<int> hungarian_min(const Matrix& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assign(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) assign[p[j] - 1] = j - 1;
    return assign;
}

double row_order_sum(const Matrix& cost, const std::vector<int>& assign) {
    KahanSum s;
    for (std::size_t i = 0; i < assign.size(); ++i) s.add(cost(i, assign[i]));
    return s.value();
}

// Optimal value of the assignment problem restricted to rows >= `from_row` and
// the columns not marked used.
double completion_value(const Matrix& cost, int from_row, const std::vector<char>& used_col) {
    const int n = static_cast<int>(cost.rows());
    const int m = n - from_row;
    if (m == 0) return 0.0;
    std::vector<int> cols;
    for (int j = 0; j < n; ++j)
        if (!used_col[j]) cols.push_back(j);
    Matrix sub(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) sub(i, j) = cost(from_row + i, cols[j]);
    std::vector<int> a = hungarian_min(sub);
    return row_order_sum(sub, a);
}

} // namespace

double assignment_value(const Matrix& scores, const std::vector<int>& assign) {
    if (assign.size() != scores.rows()) throw DimensionError("assignment_value: length mismatch");
    return row_order_sum(scores, assign);
}

std::vector<int> solve_assignment(const Matrix& scores, AssignmentSense sense) {
    if (scores.rows() != scores.cols())
        throw DimensionError("solve_assignment: matrix must be square");
    if (scores.rows() == 0) throw ArgumentError("solve_assignment: empty matrix");
    if (!scores.all_finite()) throw NumericError("solve_assignment: non-finite scores");

    Matrix cost = scores;
    if (sense == AssignmentSense::maximize)
        for (double& v : cost.data()) v = -v;

    const int n = static_cast<int>(cost.rows());
    const std::vector<int> base = hungarian_min(cost);
    const double best = row_order_sum(cost, base);
    const double tol = 1e-12 * (1.0 + std::abs(best));

    // Lexicographic refinement: fix rows in order, always taking the smallest
    // column that still allows an optimal completion. Ties therefore break to
    // the lowest row, then the lowest column.
    std::vector<int> result(n, -1);
    std::vector<char> used_col(n, 0);
    double fixed = 0.0;
    for (int i = 0; i < n; ++i) {
        int pick = -1;
        double pick_total = std::numeric_limits<double>::infinity();
        for (int cand = 0; cand < n; ++cand) {
            if (used_col[cand]) continue;
            used_col[cand] = 1;
            const double total = fixed + cost(i, cand) + completion_value(cost, i + 1, used_col);
            used_col[cand] = 0;
            if (total <= best + tol) {
                pick = cand;
                break;
            }
            if (total < pick_total) {
                pick_total = total;
                pick = cand;
            }
        }
        result[i] = pick;
        used_col[pick] = 1;
        fixed += cost(i, pick);
    }
    return result;
}

std::vector<Matrix> correlation_matrices(const NetworkSpec& spec, const Weights& w_a,
                                         const Weights& w_b, const Dataset& data) {
    check_shapes(spec, w_a);
    check_shapes(spec, w_b);
    if (data.size() == 0) throw ArgumentError("correlation_matrices: empty dataset");
    const Matrix x = all_samples(data);
    ActivationTrace ta = forward_collect(spec, w_a, x);
    ActivationTrace tb = forward_collect(spec, w_b, x);
    std::vector<Matrix> out;
    for (std::size_t l = 0; l < ta.hidden.size(); ++l) {
        Matrix za = ta.hidden[l];
        Matrix zb = tb.hidden[l];
        standardize_columns(za);
        standardize_columns(zb);
        out.push_back(matmul_tn(za, zb));
    }
    return out;
}

PermutationSet find_permutation(const NetworkSpec& spec, const Weights& w_a, const Weights& w_b,
                                const Dataset& data, AlignObjective objective) {
    check_shapes(spec, w_a);
    check_shapes(spec, w_b);
    if (data.size() == 0) throw ArgumentError("find_permutation: empty dataset");
    const Matrix x = all_samples(data);
    const ActivationTrace ta = forward_collect(spec, w_a, x);

    // Minimising the feature distance means pairing the most correlated
    // neurons (maximise the selected correlation sum); maximising it pairs the
    // least correlated ones.
    const AssignmentSense sense = objective == AlignObjective::min_distance
                                      ? AssignmentSense::maximize
                                      : AssignmentSense::minimize;

    Weights work = w_b;
    PermutationSet s;
    const int hidden = spec.num_layers() - 1;
    for (int l = 0; l < hidden; ++l) {
        // Activations of the working copy reflect the permutations already applied.
        ActivationTrace tb = forward_collect(spec, work, x);
        Matrix za = ta.hidden[l];
        Matrix zb = tb.hidden[l];
        standardize_columns(za);
        standardize_columns(zb);
        const Matrix r = matmul_tn(za, zb);
        std::vector<int> p = solve_assignment(r, sense);

        // Apply in place before moving to the next layer: rows of W_l and b_l,
        // columns of W_{l+1}.
        const Matrix old_w = work.layers[l].w;
        const std::vector<double> old_b = work.layers[l].b;
        for (std::size_t i = 0; i < p.size(); ++i) {
            for (std::size_t j = 0; j < old_w.cols(); ++j)
                work.layers[l].w(i, j) = old_w(p[i], j);
            work.layers[l].b[i] = old_b[p[i]];
        }
        const Matrix old_next = work.layers[l + 1].w;
        for (std::size_t i = 0; i < old_next.rows(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j)
                work.layers[l + 1].w(i, j) = old_next(i, p[j]);

        s.perms.push_back(std::move(p));
    }
    return s;
}

Weights permute_layers(const NetworkSpec& spec, const Weights& w, const PermutationSet& s) {
    check_shapes(spec, w);
    s.validate(spec);
    Weights out = w;
    for (std::size_t l = 0; l < s.perms.size(); ++l) {
        const auto& p = s.perms[l];
        const Matrix old_w = out.layers[l].w;
        const std::vector<double> old_b = out.layers[l].b;
        for (std::size_t i = 0; i < p.size(); ++i) {
            for (std::size_t j = 0; j < old_w.cols(); ++j)
                out.layers[l].w(i, j) = old_w(p[i], j);
            out.layers[l].b[i] = old_b[p[i]];
        }
        const Matrix old_next = out.layers[l + 1].w;
        for (std::size_t i = 0; i < old_next.rows(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j)
                out.layers[l + 1].w(i, j) = old_next(i, p[j]);
    }
    return out;
}

double feature_distance(const NetworkSpec& spec, const Weights& w_a, const Weights& w_b,
                        const Dataset& data, int layer, bool standardized) {
    check_shapes(spec, w_a);
    check_shapes(spec, w_b);
    if (layer < 1 || layer > spec.num_layers() - 1)
        throw ArgumentError("feature_distance: layer must name a hidden layer");
    if (data.size() == 0) throw ArgumentError("feature_distance: empty dataset");
    const Matrix x = all_samples(data);
    Matrix za = forward_collect(spec, w_a, x).hidden[layer - 1];
    Matrix zb = forward_collect(spec, w_b, x).hidden[layer - 1];
    if (standardized) {
        standardize_columns(za);
        standardize_columns(zb);
    }
    KahanSum s;
    for (std::size_t i = 0; i < za.size(); ++i) {
        const double d = za.data()[i] - zb.data()[i];
        s.add(d * d);
    }
    return s.value();
}

bool check_norm_consistency(const NetworkSpec& spec, const Weights& w_a, const Weights& w_b,
                            double tol) {
    check_shapes(spec, w_a);
    check_shapes(spec, w_b);
    for (std::size_t l = 0; l < w_a.layers.size(); ++l) {
        KahanSum sa, sb;
        for (double v : w_a.layers[l].w.data()) sa.add(v * v);
        for (double v : w_a.layers[l].b) sa.add(v * v);
        for (double v : w_b.layers[l].w.data()) sb.add(v * v);
        for (double v : w_b.layers[l].b) sb.add(v * v);
        const double na = std::sqrt(sa.value());
        const double nb = std::sqrt(sb.value());
        if (std::abs(na - nb) > tol * std::max({1.0, na, nb})) return false;
    }
    return true;
}

} // namespace tsclab
