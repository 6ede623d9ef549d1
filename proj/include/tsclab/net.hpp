#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsclab/dataset.hpp"
#include "tsclab/matrix.hpp"
#include "tsclab/rng.hpp"

namespace tsclab {

enum class Activation { relu };

// Architecture of a fully connected net: layer_dims = d_0..d_L with L >= 2
// affine layers, hidden activations only (the last layer emits raw outputs).
struct NetworkSpec {
    std::vector<int> layer_dims;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;

    int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
    void validate() const;
};

enum class TrainKind { supervised_ce, contrastive_ntxent };
enum class LrSchedule { constant, cosine };

struct TrainingMethod {
    TrainKind kind = TrainKind::supervised_ce;
    double learning_rate = 0.01;
    int batch_size = 256;
    int epochs = 100;
    double temperature = 0.5; // contrastive only, must be > 0 there
    LrSchedule lr_schedule = LrSchedule::cosine;

    void validate() const;
};

struct Layer {
    Matrix w;              // d_l x d_{l-1}
    std::vector<double> b; // d_l
};

struct Weights {
    std::vector<Layer> layers;

    std::size_t num_params() const;
    bool same_shape(const Weights& o) const;
    bool all_finite() const;

    friend bool operator==(const Weights& a, const Weights& b);
};

// Gradients mirror the weight layout exactly.
using Gradients = Weights;

// Post-activation features of every hidden layer plus the raw final outputs.
struct ActivationTrace {
    std::vector<Matrix> hidden; // L-1 matrices, each n x d_l
    Matrix outputs;             // n x d_L
};

// Throws DimensionError naming the first offending layer.
void check_shapes(const NetworkSpec& spec, const Weights& w);

// Per-layer uniform init in +-1/sqrt(d_{l-1}), zero biases, seeded by spec.seed.
Weights init_weights(const NetworkSpec& spec);

Weights zeros_like(const Weights& w);

// Elementwise out = ca*a + cb*b; shapes must match.
Weights weights_axpby(double ca, const Weights& a, double cb, const Weights& b);
void weights_add_scaled(Weights& dst, double c, const Weights& g);

std::vector<double> forward(const NetworkSpec& spec, const Weights& w,
                            const std::vector<double>& x);
Matrix forward_batch(const NetworkSpec& spec, const Weights& w, const Matrix& batch);
ActivationTrace forward_collect(const NetworkSpec& spec, const Weights& w, const Matrix& batch);

// Mean cross-entropy over the batch (softmax on final outputs).
double ce_loss(const NetworkSpec& spec, const Weights& w, const Matrix& batch,
               const std::vector<int>& labels);
std::pair<double, Gradients> ce_gradients(const NetworkSpec& spec, const Weights& w,
                                          const Matrix& batch, const std::vector<int>& labels);

// Two stochastic views per row: additive Gaussian noise at 0.05 of the feature
// scale plus random masking of 20% of the coordinates.
std::pair<Matrix, Matrix> contrastive_views(const Matrix& batch, Rng& rng);

// NT-Xent over L2-normalised final-layer features; views_a/views_b pair row i
// with row i. Requires at least two rows and temperature > 0.
double ntxent_loss(const NetworkSpec& spec, const Weights& w, const Matrix& views_a,
                   const Matrix& views_b, double temperature);
std::pair<double, Gradients> ntxent_gradients(const NetworkSpec& spec, const Weights& w,
                                              const Matrix& views_a, const Matrix& views_b,
                                              double temperature);

// Minibatch SGD; never mutates its input, epochs = 0 returns it unchanged.
// Supervised training reads dataset labels; contrastive training never does.
Weights train(const NetworkSpec& spec, const Weights& w, const Dataset& data,
              const TrainingMethod& method, std::uint64_t seed);

double schedule_lr(const TrainingMethod& method, int epoch, int total_epochs);

} // namespace tsclab
