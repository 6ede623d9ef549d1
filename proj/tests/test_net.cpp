#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_helpers.hpp"
#include "tsclab/checkpoint.hpp"

using namespace tsclab;
using namespace testutil;

TEST_CASE("forward with all-zero weights returns the zero vector") {
    NetworkSpec spec = make_spec({4, 6, 3});
    Weights w = zeros_like(init_weights(spec));
    std::vector<double> out = forward(spec, w, {0.3, -0.2, 0.9, 1.4});
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward applies relu only to hidden layers") {
    // 3-3-3 identity weights pass non-negative inputs through unchanged and
    // clamp negatives at the hidden layer only.
    NetworkSpec spec = make_spec({3, 3, 3});
    Weights w = zeros_like(init_weights(spec));
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 3; ++i) w.layers[l].w(i, i) = 1.0;
    std::vector<double> out = forward(spec, w, {0.5, -2.0, 1.0});
    CHECK(out[0] == 0.5);
    CHECK(out[1] == 0.0); // clipped by the hidden relu
    CHECK(out[2] == 1.0);
}

TEST_CASE("forward matches the independent per-sample oracle") {
    Rng rng(7);
    NetworkSpec spec = make_spec({4, 8, 8, 3}, 11);
    Weights w = init_weights(spec);
    for (int k = 0; k < 20; ++k) {
        std::vector<double> x(4);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        std::vector<double> got = forward(spec, w, x);
        std::vector<double> want = forward_oracle(spec, w, x);
        for (int j = 0; j < 3; ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-12);
    }
}

TEST_CASE("forward_collect matches single-sample traces and forward_batch") {
    Rng rng(3);
    NetworkSpec spec = make_spec({5, 7, 6, 4}, 5);
    Weights w = init_weights(spec);
    Matrix batch = random_matrix(rng, 6, 5, -1.0, 1.0);
    // Duplicate a row; identical inputs must give bitwise identical rows.
    for (std::size_t j = 0; j < 5; ++j) batch(5, j) = batch(2, j);

    ActivationTrace trace = forward_collect(spec, w, batch);
    REQUIRE(trace.hidden.size() == 2);
    CHECK(trace.hidden[0].rows() == 6);
    CHECK(trace.hidden[0].cols() == 7);
    CHECK(trace.outputs == forward_batch(spec, w, batch));

    for (std::size_t i = 0; i < batch.rows(); ++i) {
        Matrix one(1, 5);
        for (std::size_t j = 0; j < 5; ++j) one(0, j) = batch(i, j);
        ActivationTrace single = forward_collect(spec, w, one);
        for (std::size_t l = 0; l < trace.hidden.size(); ++l)
            for (std::size_t j = 0; j < trace.hidden[l].cols(); ++j)
                CHECK(trace.hidden[l](i, j) == single.hidden[l](0, j));
        for (std::size_t j = 0; j < trace.outputs.cols(); ++j)
            CHECK(trace.outputs(i, j) == single.outputs(0, j));
    }
    for (std::size_t j = 0; j < trace.outputs.cols(); ++j)
        CHECK(trace.outputs(5, j) == trace.outputs(2, j));
}

TEST_CASE("cross-entropy logit gradients sum to zero over classes") {
    Rng rng(17);
    NetworkSpec spec = make_spec({4, 6, 3}, 23);
    Weights w = init_weights(spec);
    Matrix batch = random_matrix(rng, 5, 4);
    std::vector<int> labels = {0, 2, 1, 1, 0};
    auto [loss, g] = ce_gradients(spec, w, batch, labels);
    CHECK(std::isfinite(loss));
    // d(loss)/d(bias of the last layer) equals the summed logit gradients, and
    // softmax minus one-hot sums to zero per sample.
    double s = 0.0;
    for (double v : g.layers.back().b) s += v;
    CHECK(std::abs(s) <= 1e-14);
}

TEST_CASE("analytic supervised gradients match central finite differences") {
    Rng rng(29);
    for (int inst = 0; inst < 5; ++inst) {
        NetworkSpec spec = make_spec({5, 7, 8, 4}, 100 + inst);
        Weights w = init_weights(spec);
        Matrix batch = random_matrix(rng, 6, 5);
        std::vector<int> labels(6);
        for (auto& y : labels) y = static_cast<int>(rng.below(4));
        auto [loss, g] = ce_gradients(spec, w, batch, labels);
        (void)loss;
        Gradients fd = fd_gradients(
            w, [&](const Weights& probe) { return ce_loss(spec, probe, batch, labels); });
        CHECK(grad_rel_err(g, fd) <= 1e-5);
    }
}

TEST_CASE("analytic contrastive gradients match central finite differences") {
    Rng rng(31);
    for (int inst = 0; inst < 3; ++inst) {
        NetworkSpec spec = make_spec({4, 6, 5}, 200 + inst);
        Weights w = init_weights(spec);
        Matrix va = random_matrix(rng, 4, 4);
        Matrix vb = random_matrix(rng, 4, 4);
        auto [loss, g] = ntxent_gradients(spec, w, va, vb, 0.5);
        CHECK(std::isfinite(loss));
        Gradients fd = fd_gradients(
            w, [&](const Weights& probe) { return ntxent_loss(spec, probe, va, vb, 0.5); });
        CHECK(grad_rel_err(g, fd) <= 1e-5);
    }
}

TEST_CASE("duplicating every batch row leaves the mean gradient unchanged") {
    Rng rng(37);
    NetworkSpec spec = make_spec({4, 5, 3}, 41);
    Weights w = init_weights(spec);
    Matrix batch = random_matrix(rng, 4, 4);
    std::vector<int> labels = {1, 0, 2, 1};
    Matrix doubled(8, 4);
    std::vector<int> labels2;
    for (int rep = 0; rep < 2; ++rep)
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 4; ++j) doubled(rep * 4 + i, j) = batch(i, j);
            labels2.push_back(labels[i]);
        }
    auto [l1, g1] = ce_gradients(spec, w, batch, labels);
    auto [l2, g2] = ce_gradients(spec, w, doubled, labels2);
    CHECK(std::abs(l1 - l2) <= 1e-12);
    CHECK(grad_rel_err(g1, g2) <= 1e-12);
}

TEST_CASE("nt-xent prefers the true view pairing over a deranged one") {
    // Orthogonal non-negative inputs pass through identity weights, so the
    // features of distinct samples are orthogonal and each view pair is equal.
    NetworkSpec spec = make_spec({4, 4, 4});
    Weights w = zeros_like(init_weights(spec));
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 4; ++i) w.layers[l].w(i, i) = 1.0;
    Matrix views(4, 4);
    for (int i = 0; i < 4; ++i) views(i, i) = 1.0;
    const double aligned = ntxent_loss(spec, w, views, views, 0.5);
    Matrix rotated(4, 4);
    for (int i = 0; i < 4; ++i) rotated((i + 1) % 4, i) = 1.0;
    const double mismatched = ntxent_loss(spec, w, views, rotated, 0.5);
    CHECK(aligned < mismatched);
}

TEST_CASE("nt-xent rejects non-positive temperature") {
    NetworkSpec spec = make_spec({4, 4, 4});
    Weights w = init_weights(spec);
    Matrix v(2, 4, 0.5);
    CHECK_THROWS_AS((void)ntxent_loss(spec, w, v, v, 0.0), ArgumentError);
    TrainingMethod m;
    m.kind = TrainKind::contrastive_ntxent;
    m.temperature = -1.0;
    CHECK_THROWS_AS(m.validate(), ArgumentError);
}

TEST_CASE("train with zero epochs returns the weights unchanged bitwise") {
    Rng rng(43);
    NetworkSpec spec = make_spec({4, 5, 3}, 47);
    Weights w = init_weights(spec);
    Dataset data = random_dataset(rng, 12, 4, 3);
    TrainingMethod m;
    m.epochs = 0;
    m.batch_size = 4;
    CHECK(train(spec, w, data, m, 9) == w);
}

TEST_CASE("train is bitwise deterministic and never mutates its input") {
    Rng rng(53);
    NetworkSpec spec = make_spec({4, 6, 3}, 59);
    Weights w = init_weights(spec);
    const Weights before = w;
    Dataset data = random_dataset(rng, 20, 4, 3);
    TrainingMethod m;
    m.epochs = 3;
    m.batch_size = 8;
    m.learning_rate = 0.05;
    Weights a = train(spec, w, data, m, 77);
    Weights b = train(spec, w, data, m, 77);
    CHECK(a == b);
    CHECK(w == before);
    Weights c = train(spec, w, data, m, 78);
    CHECK_FALSE(c == a); // a different seed shuffles differently
}

TEST_CASE("training separates two linearly separable blobs") {
    // Oracle first: a hand-fit linear classifier (midpoint rule along the mean
    // difference) must already separate the data, establishing separability.
    Rng rng(61);
    const std::size_t n_per = 40;
    Dataset data;
    data.samples = Matrix(2 * n_per, 4);
    data.labels = std::vector<int>(2 * n_per);
    data.poison_mask.assign(2 * n_per, 0);
    data.num_classes = 2;
    std::vector<double> mu0 = {0.2, 0.3, 0.7, 0.4};
    std::vector<double> mu1 = {0.8, 0.7, 0.2, 0.6};
    for (std::size_t i = 0; i < 2 * n_per; ++i) {
        const int y = i < n_per ? 0 : 1;
        (*data.labels)[i] = y;
        for (std::size_t j = 0; j < 4; ++j)
            data.samples(i, j) = (y == 0 ? mu0[j] : mu1[j]) + 0.05 * rng.normal();
    }
    std::size_t oracle_hits = 0;
    for (std::size_t i = 0; i < 2 * n_per; ++i) {
        double score = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
            score += (mu1[j] - mu0[j]) * (data.samples(i, j) - 0.5 * (mu0[j] + mu1[j]));
        if ((score > 0.0 ? 1 : 0) == (*data.labels)[i]) ++oracle_hits;
    }
    REQUIRE(static_cast<double>(oracle_hits) / (2 * n_per) >= 0.99);

    NetworkSpec spec = make_spec({4, 8, 2}, 67);
    TrainingMethod m;
    m.epochs = 20;
    m.batch_size = 16;
    m.learning_rate = 0.1;
    Weights w = train(spec, init_weights(spec), data, m, 71);
    std::vector<int> pred = predict(spec, w, data);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == (*data.labels)[i]) ++hits;
    CHECK(static_cast<double>(hits) / (2 * n_per) >= 0.95);
}

TEST_CASE("contrastive training runs on unlabeled data and is reproducible") {
    Rng rng(73);
    Dataset data = random_dataset(rng, 16, 6, 2);
    data.labels.reset(); // labels must never be read
    NetworkSpec spec = make_spec({6, 8, 4}, 79);
    TrainingMethod m;
    m.kind = TrainKind::contrastive_ntxent;
    m.epochs = 2;
    m.batch_size = 8;
    m.learning_rate = 0.05;
    m.temperature = 0.5;
    Weights w = init_weights(spec);
    Weights a = train(spec, w, data, m, 83);
    Weights b = train(spec, w, data, m, 83);
    CHECK(a == b);
    CHECK_FALSE(a == w);
}

TEST_CASE("train with zero epochs is a bitwise no-op for contrastive too") {
    Rng rng(89);
    Dataset data = random_dataset(rng, 8, 5, 2);
    data.labels.reset();
    NetworkSpec spec = make_spec({5, 6, 3}, 97);
    TrainingMethod m;
    m.kind = TrainKind::contrastive_ntxent;
    m.epochs = 0;
    m.temperature = 0.4;
    m.batch_size = 4;
    Weights w = init_weights(spec);
    CHECK(train(spec, w, data, m, 1) == w);
}

TEST_CASE("init_weights is seed-deterministic and respects the fan-in bound") {
    NetworkSpec spec = make_spec({9, 16, 4}, 101);
    Weights a = init_weights(spec);
    Weights b = init_weights(spec);
    CHECK(a == b);
    spec.seed = 102;
    Weights c = init_weights(spec);
    CHECK_FALSE(a == c);
    const double bound0 = 1.0 / std::sqrt(9.0);
    for (double v : a.layers[0].w.data()) CHECK(std::abs(v) <= bound0);
    const double bound1 = 1.0 / std::sqrt(16.0);
    for (double v : a.layers[1].w.data()) CHECK(std::abs(v) <= bound1);
    for (double v : a.layers[0].b) CHECK(v == 0.0);
}

TEST_CASE("check_shapes names the offending layer") {
    NetworkSpec spec = make_spec({4, 6, 3});
    Weights w = init_weights(spec);
    w.layers[1].w = Matrix(3, 5);
    try {
        check_shapes(spec, w);
        FAIL("expected a DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
}

TEST_CASE("network spec validation") {
    NetworkSpec spec;
    spec.layer_dims = {4, 3};
    CHECK_THROWS_AS(spec.validate(), ArgumentError);
    spec.layer_dims = {4, 0, 3};
    CHECK_THROWS_AS(spec.validate(), ArgumentError);
    spec.layer_dims = {4, 2, 3};
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("weight checkpoints round-trip bitwise and reject garbage") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "tsclab_ckpt_test";
    fs::create_directories(dir);
    NetworkSpec spec = make_spec({5, 7, 3}, 103);
    Weights w = init_weights(spec);
    TrainingMethod m;
    m.epochs = 2;
    m.batch_size = 8;
    Rng rng(107);
    Dataset data = random_dataset(rng, 16, 5, 3);
    w = train(spec, w, data, m, 5);

    const std::string path = (dir / "w.ckpt").string();
    save_weights(path, spec, w);
    auto [spec2, w2] = load_weights(path);
    CHECK(spec2.layer_dims == spec.layer_dims);
    CHECK(w2 == w);

    const std::string bad = (dir / "bad.ckpt").string();
    {
        std::ofstream f(bad, std::ios::binary);
        f << "definitely not a checkpoint";
    }
    CHECK_THROWS_AS((void)load_weights(bad), IoError);
    CHECK_THROWS_AS((void)load_weights((dir / "missing.ckpt").string()), IoError);

    // Truncated payload.
    const std::string trunc = (dir / "trunc.ckpt").string();
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream f(trunc, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS((void)load_weights(trunc), IoError);
    fs::remove_all(dir);
}

TEST_CASE("cosine schedule starts at the base rate and decays") {
    TrainingMethod m;
    m.learning_rate = 0.02;
    m.lr_schedule = LrSchedule::cosine;
    CHECK(schedule_lr(m, 0, 100) == 0.02);
    CHECK(schedule_lr(m, 50, 100) == doctest::Approx(0.01));
    CHECK(schedule_lr(m, 99, 100) < 1e-5);
    m.lr_schedule = LrSchedule::constant;
    CHECK(schedule_lr(m, 99, 100) == 0.02);
}
