#include "tsclab/net.hpp"

#include <algorithm>
#include <cmath>

namespace tsclab {

void NetworkSpec::validate() const {
    if (layer_dims.size() < 3)
        throw ArgumentError("network spec: need at least two layers (d_0, d_1, d_2)");
    for (std::size_t i = 0; i < layer_dims.size(); ++i)
        if (layer_dims[i] < 1)
            throw ArgumentError("network spec: layer_dims[" + std::to_string(i) +
                                "] must be positive");
}

void TrainingMethod::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ArgumentError("training method: learning rate must be positive and finite");
    if (batch_size < 1) throw ArgumentError("training method: batch size must be >= 1");
    if (epochs < 0) throw ArgumentError("training method: epochs must be >= 0");
    if (kind == TrainKind::contrastive_ntxent) {
        if (!(temperature > 0.0) || !std::isfinite(temperature))
            throw ArgumentError("training method: contrastive temperature must be > 0");
        if (batch_size < 2)
            throw ArgumentError("training method: contrastive batches need >= 2 samples");
    }
}

std::size_t Weights::num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

bool Weights::same_shape(const Weights& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (!layers[i].w.same_shape(o.layers[i].w) || layers[i].b.size() != o.layers[i].b.size())
            return false;
    return true;
}

bool Weights::all_finite() const {
    for (const auto& l : layers) {
        if (!l.w.all_finite()) return false;
        for (double v : l.b)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

bool operator==(const Weights& a, const Weights& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
        if (!(a.layers[i].w == b.layers[i].w) || a.layers[i].b != b.layers[i].b) return false;
    return true;
}

void check_shapes(const NetworkSpec& spec, const Weights& w) {
    spec.validate();
    const int L = spec.num_layers();
    if (static_cast<int>(w.layers.size()) != L)
        throw DimensionError("weights: expected " + std::to_string(L) + " layers, got " +
                             std::to_string(w.layers.size()));
    for (int l = 0; l < L; ++l) {
        const auto& layer = w.layers[l];
        const std::size_t d_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        const std::size_t d_in = static_cast<std::size_t>(spec.layer_dims[l]);
        if (layer.w.rows() != d_out || layer.w.cols() != d_in)
            throw DimensionError("weights: layer " + std::to_string(l + 1) + " matrix is " +
                                 std::to_string(layer.w.rows()) + "x" +
                                 std::to_string(layer.w.cols()) + ", expected " +
                                 std::to_string(d_out) + "x" + std::to_string(d_in));
        if (layer.b.size() != d_out)
            throw DimensionError("weights: layer " + std::to_string(l + 1) + " bias length " +
                                 std::to_string(layer.b.size()) + ", expected " +
                                 std::to_string(d_out));
    }
}

Weights init_weights(const NetworkSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Weights w;
    const int L = spec.num_layers();
    w.layers.resize(L);
    for (int l = 0; l < L; ++l) {
        const std::size_t d_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        const std::size_t d_in = static_cast<std::size_t>(spec.layer_dims[l]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
        w.layers[l].w = Matrix(d_out, d_in);
        for (std::size_t i = 0; i < d_out; ++i)
            for (std::size_t j = 0; j < d_in; ++j) w.layers[l].w(i, j) = rng.uniform(-bound, bound);
        w.layers[l].b.assign(d_out, 0.0);
    }
    return w;
}

Weights zeros_like(const Weights& w) {
    Weights z;
    z.layers.resize(w.layers.size());
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        z.layers[l].w = Matrix(w.layers[l].w.rows(), w.layers[l].w.cols());
        z.layers[l].b.assign(w.layers[l].b.size(), 0.0);
    }
    return z;
}

Weights weights_axpby(double ca, const Weights& a, double cb, const Weights& b) {
    if (!a.same_shape(b)) throw DimensionError("weights_axpby: shape mismatch");
    Weights out = zeros_like(a);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t i = 0; i < a.layers[l].w.size(); ++i)
            out.layers[l].w.data()[i] = ca * a.layers[l].w.data()[i] + cb * b.layers[l].w.data()[i];
        for (std::size_t i = 0; i < a.layers[l].b.size(); ++i)
            out.layers[l].b[i] = ca * a.layers[l].b[i] + cb * b.layers[l].b[i];
    }
    return out;
}

void weights_add_scaled(Weights& dst, double c, const Weights& g) {
    if (!dst.same_shape(g)) throw DimensionError("weights_add_scaled: shape mismatch");
    for (std::size_t l = 0; l < dst.layers.size(); ++l) {
        for (std::size_t i = 0; i < dst.layers[l].w.size(); ++i)
            dst.layers[l].w.data()[i] += c * g.layers[l].w.data()[i];
        for (std::size_t i = 0; i < dst.layers[l].b.size(); ++i)
            dst.layers[l].b[i] += c * g.layers[l].b[i];
    }
}

namespace {

// A_l = relu(A_{l-1} W_l^T + b_l) for hidden layers; final layer has no activation.
Matrix affine_forward(const Matrix& a, const Layer& layer) {
    Matrix s = matmul_nt(a, layer.w);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double* row = s.row(i);
        for (std::size_t j = 0; j < s.cols(); ++j) row[j] += layer.b[j];
    }
    return s;
}

void relu_inplace(Matrix& m) {
    for (double& v : m.data())
        if (v < 0.0) v = 0.0;
}

} // namespace

ActivationTrace forward_collect(const NetworkSpec& spec, const Weights& w, const Matrix& batch) {
    check_shapes(spec, w);
    if (batch.cols() != static_cast<std::size_t>(spec.layer_dims[0]))
        throw DimensionError("forward: input width " + std::to_string(batch.cols()) +
                             ", expected d_0 = " + std::to_string(spec.layer_dims[0]));
    ActivationTrace trace;
    const int L = spec.num_layers();
    Matrix a = batch;
    for (int l = 0; l < L - 1; ++l) {
        a = affine_forward(a, w.layers[l]);
        relu_inplace(a);
        trace.hidden.push_back(a);
    }
    trace.outputs = affine_forward(a, w.layers[L - 1]);
    return trace;
}

Matrix forward_batch(const NetworkSpec& spec, const Weights& w, const Matrix& batch) {
    return forward_collect(spec, w, batch).outputs;
}

std::vector<double> forward(const NetworkSpec& spec, const Weights& w,
                            const std::vector<double>& x) {
    Matrix batch(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) batch(0, j) = x[j];
    Matrix out = forward_batch(spec, w, batch);
    return out.row_vector(0);
}

namespace {

// Row-wise softmax cross-entropy; returns mean loss and writes dL/dlogits into
// `dlogits` when non-null (already divided by the batch size).
double softmax_ce(const Matrix& logits, const std::vector<int>& labels, Matrix* dlogits) {
    const std::size_t n = logits.rows(), k = logits.cols();
    if (labels.size() != n) throw DimensionError("cross-entropy: label count mismatch");
    if (dlogits) *dlogits = Matrix(n, k);
    KahanSum loss;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw ArgumentError("cross-entropy: label outside output range");
        const double* row = logits.row(i);
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        const double log_denom = std::log(denom) + mx;
        loss.add(log_denom - row[labels[i]]);
        if (dlogits) {
            double* grow = dlogits->row(i);
            for (std::size_t j = 0; j < k; ++j) {
                double p = std::exp(row[j] - log_denom);
                grow[j] = (p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0)) /
                          static_cast<double>(n);
            }
        }
    }
    return loss.value() / static_cast<double>(n);
}

// Shared backward pass: given dL/d(final outputs), walk the trace back to
// per-layer weight gradients.
Gradients backward_from_outputs(const NetworkSpec& spec, const Weights& w, const Matrix& batch,
                                const ActivationTrace& trace, Matrix dout) {
    const int L = spec.num_layers();
    Gradients g = zeros_like(w);
    Matrix ds = std::move(dout);
    for (int l = L - 1; l >= 0; --l) {
        const Matrix& a_prev = (l == 0) ? batch : trace.hidden[l - 1];
        g.layers[l].w = matmul_tn(ds, a_prev);
        for (std::size_t i = 0; i < ds.rows(); ++i) {
            const double* row = ds.row(i);
            for (std::size_t j = 0; j < ds.cols(); ++j) g.layers[l].b[j] += row[j];
        }
        if (l == 0) break;
        Matrix da = matmul(ds, w.layers[l].w);
        const Matrix& act = trace.hidden[l - 1];
        for (std::size_t i = 0; i < da.size(); ++i)
            if (act.data()[i] <= 0.0) da.data()[i] = 0.0;
        ds = std::move(da);
    }
    return g;
}

} // namespace

double ce_loss(const NetworkSpec& spec, const Weights& w, const Matrix& batch,
               const std::vector<int>& labels) {
    Matrix logits = forward_batch(spec, w, batch);
    return softmax_ce(logits, labels, nullptr);
}

std::pair<double, Gradients> ce_gradients(const NetworkSpec& spec, const Weights& w,
                                          const Matrix& batch, const std::vector<int>& labels) {
    if (batch.rows() == 0) throw ArgumentError("ce_gradients: empty batch");
    ActivationTrace trace = forward_collect(spec, w, batch);
    Matrix dlogits;
    const double loss = softmax_ce(trace.outputs, labels, &dlogits);
    Gradients g = backward_from_outputs(spec, w, batch, trace, std::move(dlogits));
    return {loss, std::move(g)};
}

std::pair<Matrix, Matrix> contrastive_views(const Matrix& batch, Rng& rng) {
    if (batch.rows() == 0) throw ArgumentError("contrastive_views: empty batch");
    // Noise scale: 5% of the standard deviation of the batch entries.
    KahanSum s1, s2;
    for (double v : batch.data()) {
        s1.add(v);
        s2.add(v * v);
    }
    const double n = static_cast<double>(batch.size());
    const double mean = s1.value() / n;
    const double var = std::max(0.0, s2.value() / n - mean * mean);
    const double sigma = 0.05 * std::sqrt(var);
    const std::size_t d = batch.cols();
    const std::size_t n_mask = static_cast<std::size_t>(
        std::floor(0.2 * static_cast<double>(d) + 0.5));

    auto make_view = [&](void) {
        Matrix v = batch;
        for (std::size_t i = 0; i < v.rows(); ++i) {
            double* row = v.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] += sigma * rng.normal();
            // Mask a fixed 20% of coordinates, chosen without replacement.
            std::vector<std::size_t> coords = rng.permutation(d);
            for (std::size_t j = 0; j < n_mask; ++j) row[coords[j]] = 0.0;
        }
        return v;
    };
    Matrix a = make_view();
    Matrix b = make_view();
    return {std::move(a), std::move(b)};
}

namespace {

struct NtxentParts {
    double loss = 0.0;
    Matrix dfeatures; // dL/d(final outputs), filled when wanted
};

// NT-Xent on L2-normalised features; rows of `features` are the 2B views in
// order [a_0..a_{B-1}, b_0..b_{B-1}], view i pairs with (i + B) mod 2B.
NtxentParts ntxent_from_features(const Matrix& features, double temperature, bool want_grad) {
    const std::size_t m = features.rows();
    if (m < 4 || m % 2 != 0)
        throw ArgumentError("nt-xent: need an even number of views, at least 4");
    if (!(temperature > 0.0)) throw ArgumentError("nt-xent: temperature must be > 0");
    const std::size_t half = m / 2;
    const std::size_t d = features.cols();
    const double norm_floor = 1e-12;

    Matrix u(m, d);
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = features.row(i);
        for (std::size_t j = 0; j < d; ++j) s += row[j] * row[j];
        norms[i] = std::max(std::sqrt(s), norm_floor);
        for (std::size_t j = 0; j < d; ++j) u(i, j) = row[j] / norms[i];
    }

    Matrix sim = matmul_nt(u, u); // cosine similarities
    for (double& v : sim.data()) v /= temperature;

    auto pair_of = [&](std::size_t i) { return i < half ? i + half : i - half; };

    NtxentParts out;
    Matrix g(m, m); // dL/dsim
    KahanSum loss;
    for (std::size_t i = 0; i < m; ++i) {
        const double* srow = sim.row(i);
        double mx = -1e300;
        for (std::size_t k = 0; k < m; ++k)
            if (k != i) mx = std::max(mx, srow[k]);
        double denom = 0.0;
        for (std::size_t k = 0; k < m; ++k)
            if (k != i) denom += std::exp(srow[k] - mx);
        const double log_denom = std::log(denom) + mx;
        loss.add(log_denom - srow[pair_of(i)]);
        if (want_grad) {
            double* grow = g.row(i);
            for (std::size_t k = 0; k < m; ++k) {
                if (k == i) continue;
                double p = std::exp(srow[k] - log_denom);
                grow[k] = (p - (k == pair_of(i) ? 1.0 : 0.0)) / static_cast<double>(m);
            }
        }
    }
    out.loss = loss.value() / static_cast<double>(m);
    if (!want_grad) return out;

    // dL/du_i = (1/tau) * sum_j (G_ij + G_ji) u_j, then back through the
    // normalisation u = f / max(|f|, floor).
    out.dfeatures = Matrix(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> du(d, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double c = (g(i, j) + g(j, i)) / temperature;
            if (c == 0.0) continue;
            const double* urow = u.row(j);
            for (std::size_t k = 0; k < d; ++k) du[k] += c * urow[k];
        }
        double* frow = out.dfeatures.row(i);
        const double* urow = u.row(i);
        double fnorm = 0.0;
        const double* raw = features.row(i);
        for (std::size_t k = 0; k < d; ++k) fnorm += raw[k] * raw[k];
        fnorm = std::sqrt(fnorm);
        if (fnorm > norm_floor) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += urow[k] * du[k];
            for (std::size_t k = 0; k < d; ++k) frow[k] = (du[k] - dot * urow[k]) / norms[i];
        } else {
            for (std::size_t k = 0; k < d; ++k) frow[k] = du[k] / norms[i];
        }
    }
    return out;
}

Matrix stack_views(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw DimensionError("nt-xent: view shapes disagree");
    Matrix s(a.rows() + b.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s(i, j) = a(i, j);
    for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) s(a.rows() + i, j) = b(i, j);
    return s;
}

} // namespace

double ntxent_loss(const NetworkSpec& spec, const Weights& w, const Matrix& views_a,
                   const Matrix& views_b, double temperature) {
    Matrix stacked = stack_views(views_a, views_b);
    Matrix features = forward_batch(spec, w, stacked);
    return ntxent_from_features(features, temperature, false).loss;
}

std::pair<double, Gradients> ntxent_gradients(const NetworkSpec& spec, const Weights& w,
                                              const Matrix& views_a, const Matrix& views_b,
                                              double temperature) {
    Matrix stacked = stack_views(views_a, views_b);
    ActivationTrace trace = forward_collect(spec, w, stacked);
    NtxentParts parts = ntxent_from_features(trace.outputs, temperature, true);
    Gradients g = backward_from_outputs(spec, w, stacked, trace, std::move(parts.dfeatures));
    return {parts.loss, std::move(g)};
}

double schedule_lr(const TrainingMethod& method, int epoch, int total_epochs) {
    if (method.lr_schedule == LrSchedule::constant || total_epochs <= 0)
        return method.learning_rate;
    const double pi = 3.14159265358979323846;
    return method.learning_rate * 0.5 *
           (1.0 + std::cos(pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

Weights train(const NetworkSpec& spec, const Weights& w, const Dataset& data,
              const TrainingMethod& method, std::uint64_t seed) {
    check_shapes(spec, w);
    method.validate();
    if (data.size() == 0) throw ArgumentError("train: empty dataset");
    if (data.dim() != static_cast<std::size_t>(spec.layer_dims[0]))
        throw DimensionError("train: sample width does not match d_0");
    const bool supervised = method.kind == TrainKind::supervised_ce;
    if (supervised && !data.labels) throw ArgumentError("train: supervised training needs labels");

    Weights cur = w;
    Rng rng(seed);
    const std::size_t n = data.size();
    for (int epoch = 0; epoch < method.epochs; ++epoch) {
        const double lr = schedule_lr(method, epoch, method.epochs);
        std::vector<std::size_t> order = rng.permutation(n);
        for (std::size_t start = 0; start < n; start += method.batch_size) {
            const std::size_t stop = std::min(n, start + method.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            if (!supervised && idx.size() < 2) continue; // contrastive needs negatives
            Matrix batch = gather_rows(data, idx);
            double loss = 0.0;
            Gradients g;
            if (supervised) {
                std::vector<int> labels = gather_labels(data, idx);
                std::tie(loss, g) = ce_gradients(spec, cur, batch, labels);
            } else {
                auto [va, vb] = contrastive_views(batch, rng);
                std::tie(loss, g) = ntxent_gradients(spec, cur, va, vb, method.temperature);
            }
            if (!std::isfinite(loss)) throw NumericError("train: loss became non-finite");
            weights_add_scaled(cur, -lr, g);
        }
    }
    return cur;
}

} // namespace tsclab
