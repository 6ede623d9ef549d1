#include "tsclab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tsclab {

Dataset gen_synthetic_images(int num_classes, int per_class, int height, int width,
                             double noise_sigma, std::uint64_t seed) {
    if (num_classes < 1) throw ArgumentError("gen_synthetic_images: need at least one class");
    if (per_class < 1) throw ArgumentError("gen_synthetic_images: per_class must be >= 1");
    if (height < 1 || width < 1) throw ArgumentError("gen_synthetic_images: empty geometry");
    if (noise_sigma < 0.0) throw ArgumentError("gen_synthetic_images: negative noise sigma");

    const std::size_t dim = static_cast<std::size_t>(height) * width;
    const double two_pi = 6.283185307179586476925286766559;
    const double pi = 3.14159265358979323846;
    const int side = std::max(height, width);

    // Per-class template: an oriented sinusoidal field with class-specific
    // frequency, orientation and phase. Distinct classes are far apart in L2.
    auto template_value = [&](int c, int r, int col) {
        const double phi = pi * static_cast<double>(c) / num_classes;
        const double freq = 1.5 + 0.9 * static_cast<double>(c);
        const double phase = two_pi * static_cast<double>(c) / num_classes;
        const double coord = std::cos(phi) * r + std::sin(phi) * col;
        return 0.5 + 0.4 * std::sin(two_pi * freq * coord / side + phase);
    };

    Dataset d;
    d.samples = Matrix(static_cast<std::size_t>(num_classes) * per_class, dim);
    d.labels = std::vector<int>(d.samples.rows());
    d.poison_mask.assign(d.samples.rows(), 0);
    d.num_classes = num_classes;
    d.image_height = height;
    d.image_width = width;

    Rng rng(seed);
    std::size_t row = 0;
    for (int c = 0; c < num_classes; ++c)
        for (int s = 0; s < per_class; ++s, ++row) {
            (*d.labels)[row] = c;
            double* px = d.samples.row(row);
            for (int r = 0; r < height; ++r)
                for (int col = 0; col < width; ++col) {
                    double v = template_value(c, r, col);
                    if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
                    px[static_cast<std::size_t>(r) * width + col] =
                        v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                }
        }
    return d;
}

namespace {

Dataset take_rows(const Dataset& src, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.samples = Matrix(idx.size(), src.samples.cols());
    if (src.labels) out.labels = std::vector<int>(idx.size());
    out.poison_mask.assign(idx.size(), 0);
    out.num_classes = src.num_classes;
    out.image_height = src.image_height;
    out.image_width = src.image_width;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* s = src.samples.row(idx[i]);
        double* dst = out.samples.row(i);
        for (std::size_t j = 0; j < src.samples.cols(); ++j) dst[j] = s[j];
        if (src.labels) (*out.labels)[i] = (*src.labels)[idx[i]];
        out.poison_mask[i] = src.poison_mask[idx[i]];
    }
    return out;
}

} // namespace

std::pair<Dataset, Dataset> split_defender(const Dataset& data, double fraction,
                                           std::uint64_t seed) {
    data.validate();
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ArgumentError("split_defender: fraction must lie in (0, 1]");

    std::vector<std::size_t> clean;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.poison_mask[i] == 0) clean.push_back(i);
    const std::size_t total =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(clean.size()) + 0.5));
    if (total == 0)
        throw ArgumentError("split_defender: defender split would be empty");

    // Group the clean rows by class (one group when unlabeled), then apportion
    // `total` by the largest-remainder rule so per-class counts stay within one
    // of fraction * class_count.
    const int groups = data.labels ? data.num_classes : 1;
    std::vector<std::vector<std::size_t>> by_class(groups);
    for (std::size_t i : clean) by_class[data.labels ? (*data.labels)[i] : 0].push_back(i);

    std::vector<std::size_t> take(groups, 0);
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (int c = 0; c < groups; ++c) {
        const double quota = fraction * static_cast<double>(by_class[c].size());
        take[c] = static_cast<std::size_t>(std::floor(quota));
        assigned += take[c];
        remainders.push_back({quota - std::floor(quota), c});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
        const int c = remainders[k].second;
        if (take[c] < by_class[c].size()) {
            ++take[c];
            ++assigned;
        }
    }
    if (assigned != total)
        throw ArgumentError("split_defender: could not apportion the requested fraction");

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (int c = 0; c < groups; ++c) {
        std::vector<std::size_t> rows = by_class[c];
        rng.shuffle(rows);
        rows.resize(take[c]);
        chosen.insert(chosen.end(), rows.begin(), rows.end());
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<std::uint8_t> in_defender(data.size(), 0);
    for (std::size_t i : chosen) in_defender[i] = 1;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!in_defender[i]) rest.push_back(i);

    return {take_rows(data, chosen), take_rows(data, rest)};
}

std::vector<int> predict(const NetworkSpec& spec, const Weights& w, const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Matrix out = forward_batch(spec, w, gather_rows(data, idx));
    std::vector<int> pred(out.rows());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const double* row = out.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < out.cols(); ++j)
            if (row[j] > row[best]) best = j; // ties keep the lowest index
        pred[i] = static_cast<int>(best);
    }
    return pred;
}

namespace {

double fraction_equal(const std::vector<int>& pred, const std::vector<int>& want) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == want[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

} // namespace

Dataset attack_pool(const Dataset& clean_test, const TriggerSpec& trigger) {
    if (!clean_test.labels) throw ArgumentError("attack pool: test set must be labeled");
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < clean_test.size(); ++i)
        if ((*clean_test.labels)[i] != trigger.target_class) pool.push_back(i);
    if (pool.empty())
        throw ArgumentError("attack pool: empty, every row is already target class");
    Dataset triggered = take_rows(clean_test, pool);
    for (std::size_t i = 0; i < triggered.size(); ++i) {
        std::vector<double> row = triggered.samples.row_vector(i);
        triggered.samples.set_row(i, apply_trigger(row, trigger, triggered.image_height,
                                                   triggered.image_width));
    }
    return triggered;
}

Metrics evaluate(const NetworkSpec& spec, const Weights& w, const Dataset& clean_test,
                 const TriggerSpec& trigger) {
    clean_test.validate();
    if (clean_test.size() == 0) throw ArgumentError("evaluate: empty test set");
    if (!clean_test.labels) throw ArgumentError("evaluate: test set must be labeled");

    Metrics m;
    std::vector<int> pred = predict(spec, w, clean_test);
    m.acc = fraction_equal(pred, *clean_test.labels);
    m.n_eval_clean = static_cast<int>(clean_test.size());

    Dataset triggered = attack_pool(clean_test, trigger);
    std::vector<int> tpred = predict(spec, w, triggered);
    std::vector<int> want(tpred.size(), trigger.target_class);
    m.asr = fraction_equal(tpred, want);
    m.n_eval_attack = static_cast<int>(triggered.size());
    return m;
}

namespace {

Matrix encode_features(const NetworkSpec& spec, const Weights& encoder, const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return forward_batch(spec, encoder, gather_rows(data, idx));
}

std::vector<int> probe_predict(const LinearProbe& probe, const Matrix& features) {
    Matrix logits = matmul_nt(features, probe.w);
    std::vector<int> pred(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double* row = logits.row(i);
        for (std::size_t j = 0; j < logits.cols(); ++j) row[j] += probe.b[j];
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (row[j] > row[best]) best = j;
        pred[i] = static_cast<int>(best);
    }
    return pred;
}

double probe_ce(const LinearProbe& probe, const Matrix& features, const std::vector<int>& labels) {
    Matrix logits = matmul_nt(features, probe.w);
    KahanSum loss;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double* row = logits.row(i);
        for (std::size_t j = 0; j < logits.cols(); ++j) row[j] += probe.b[j];
        double mx = row[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) denom += std::exp(row[j] - mx);
        loss.add(std::log(denom) + mx - row[labels[i]]);
    }
    return loss.value() / static_cast<double>(logits.rows());
}

} // namespace

LinearProbe train_linear_probe(const NetworkSpec& spec, const Weights& encoder,
                               const Dataset& labeled, int epochs, double lr,
                               std::uint64_t seed) {
    labeled.validate();
    if (!labeled.labels) throw ArgumentError("linear probe: training data must be labeled");
    if (labeled.size() == 0) throw ArgumentError("linear probe: empty training data");
    if (epochs < 0 || !(lr > 0.0)) throw ArgumentError("linear probe: bad epochs or lr");

    const Matrix features = encode_features(spec, encoder, labeled);
    const std::vector<int>& labels = *labeled.labels;
    const std::size_t k = static_cast<std::size_t>(labeled.num_classes);
    const std::size_t n = features.rows();

    LinearProbe probe;
    probe.w = Matrix(k, features.cols());
    probe.b.assign(k, 0.0);

    Rng rng(seed);
    const std::size_t batch_size = 32;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<std::size_t> order = rng.permutation(n);
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(n, start + batch_size);
            const std::size_t bs = stop - start;
            // Softmax-regression step on the frozen features.
            Matrix dw(k, features.cols());
            std::vector<double> db(k, 0.0);
            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t i = order[bi];
                const double* f = features.row(i);
                std::vector<double> logits(k, 0.0);
                for (std::size_t c = 0; c < k; ++c) {
                    const double* wrow = probe.w.row(c);
                    double s = probe.b[c];
                    for (std::size_t j = 0; j < features.cols(); ++j) s += wrow[j] * f[j];
                    logits[c] = s;
                }
                double mx = logits[0];
                for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits[c]);
                double denom = 0.0;
                for (std::size_t c = 0; c < k; ++c) denom += std::exp(logits[c] - mx);
                for (std::size_t c = 0; c < k; ++c) {
                    const double p = std::exp(logits[c] - mx) / denom;
                    const double g = (p - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0)) /
                                     static_cast<double>(bs);
                    db[c] += g;
                    double* dwr = dw.row(c);
                    for (std::size_t j = 0; j < features.cols(); ++j) dwr[j] += g * f[j];
                }
            }
            for (std::size_t c = 0; c < k; ++c) {
                double* wrow = probe.w.row(c);
                const double* dwr = dw.row(c);
                for (std::size_t j = 0; j < features.cols(); ++j) wrow[j] -= lr * dwr[j];
                probe.b[c] -= lr * db[c];
            }
        }
    }
    return probe;
}

Metrics evaluate_probe(const NetworkSpec& spec, const Weights& encoder, const LinearProbe& probe,
                       const Dataset& clean_test, const TriggerSpec& trigger) {
    clean_test.validate();
    if (!clean_test.labels) throw ArgumentError("evaluate: test set must be labeled");

    Metrics m;
    Matrix features = encode_features(spec, encoder, clean_test);
    std::vector<int> pred = probe_predict(probe, features);
    m.acc = fraction_equal(pred, *clean_test.labels);
    m.n_eval_clean = static_cast<int>(clean_test.size());

    Dataset triggered = attack_pool(clean_test, trigger);
    Matrix tfeat = encode_features(spec, encoder, triggered);
    std::vector<int> tpred = probe_predict(probe, tfeat);
    std::vector<int> want(tpred.size(), trigger.target_class);
    m.asr = fraction_equal(tpred, want);
    m.n_eval_attack = static_cast<int>(triggered.size());
    return m;
}

Evaluator Evaluator::direct() { return Evaluator{}; }

Evaluator Evaluator::linear_probe(Dataset probe_data, int epochs, double lr, std::uint64_t seed) {
    Evaluator e;
    e.mode = Mode::linear_probe;
    e.probe_data = std::move(probe_data);
    e.probe_epochs = epochs;
    e.probe_lr = lr;
    e.probe_seed = seed;
    return e;
}

Evaluator::Result Evaluator::operator()(const NetworkSpec& spec, const Weights& w,
                                        const Dataset& clean_test,
                                        const TriggerSpec& trigger) const {
    Result r;
    Dataset triggered = attack_pool(clean_test, trigger);
    std::vector<int> target_labels(triggered.size(), trigger.target_class);
    std::vector<std::size_t> all_clean(clean_test.size());
    for (std::size_t i = 0; i < all_clean.size(); ++i) all_clean[i] = i;
    std::vector<std::size_t> all_trig(triggered.size());
    for (std::size_t i = 0; i < all_trig.size(); ++i) all_trig[i] = i;

    if (mode == Mode::direct) {
        r.metrics = evaluate(spec, w, clean_test, trigger);
        r.loss_clean = ce_loss(spec, w, gather_rows(clean_test, all_clean), *clean_test.labels);
        r.loss_poison = ce_loss(spec, w, gather_rows(triggered, all_trig), target_labels);
    } else {
        LinearProbe probe = train_linear_probe(spec, w, probe_data, probe_epochs, probe_lr,
                                               probe_seed);
        r.metrics = evaluate_probe(spec, w, probe, clean_test, trigger);
        r.loss_clean = probe_ce(probe, encode_features(spec, w, clean_test), *clean_test.labels);
        r.loss_poison = probe_ce(probe, encode_features(spec, w, triggered), target_labels);
    }
    return r;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void export_dataset_csv(const std::string& path, const Dataset& data) {
    data.validate();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("dataset csv: cannot open '" + path + "' for writing");
    f << "label,poison";
    for (std::size_t j = 0; j < data.dim(); ++j) f << ",p" << j;
    f << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        f << (data.labels ? (*data.labels)[i] : -1) << ','
          << static_cast<int>(data.poison_mask[i]);
        const double* row = data.samples.row(i);
        for (std::size_t j = 0; j < data.dim(); ++j) f << ',' << fmt_double(row[j]);
        f << "\n";
    }
    if (!f) throw IoError("dataset csv: write to '" + path + "' failed");
}

Dataset import_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("dataset csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw IoError("dataset csv: missing header");
    std::size_t dim = 0;
    {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3 || cells[0] != "label" || cells[1] != "poison")
            throw IoError("dataset csv: unexpected header");
        dim = cells.size() - 2;
    }

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<std::uint8_t> mask;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> px;
        px.reserve(dim);
        int col = 0, label = 0, poison = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col == 0)
                    label = std::stoi(cell);
                else if (col == 1)
                    poison = std::stoi(cell);
                else
                    px.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("dataset csv: unparseable cell '" + cell + "'");
            }
            ++col;
        }
        if (px.size() != dim) throw IoError("dataset csv: row width mismatch");
        rows.push_back(std::move(px));
        labels.push_back(label);
        mask.push_back(poison ? 1 : 0);
    }

    Dataset d;
    d.samples = Matrix::from_rows(rows);
    if (d.samples.empty()) d.samples = Matrix(0, dim);
    d.poison_mask = std::move(mask);
    const bool unlabeled = std::all_of(labels.begin(), labels.end(),
                                       [](int v) { return v == -1; });
    if (!unlabeled) {
        int mx = 0;
        for (int v : labels) {
            if (v < 0) throw IoError("dataset csv: mixed labeled and unlabeled rows");
            mx = std::max(mx, v);
        }
        d.labels = std::move(labels);
        d.num_classes = mx + 1;
    }
    return d;
}

} // namespace tsclab
