#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsclab/attack.hpp"
#include "tsclab/dataset.hpp"
#include "tsclab/net.hpp"

namespace tsclab {

struct Metrics {
    double acc = 0.0;       // accuracy on the clean evaluation set
    double asr = 0.0;       // attack success rate on triggered non-target rows
    int n_eval_clean = 0;
    int n_eval_attack = 0;
};

// Synthetic image classes: one distinct smooth spatial template per class plus
// Gaussian pixel noise, clamped to [0, 1]. noise_sigma = 0 yields the bare
// templates. Rows are grouped by class, per_class samples each.
Dataset gen_synthetic_images(int num_classes, int per_class, int height, int width,
                             double noise_sigma, std::uint64_t seed);

// Stratified defender split over the clean (unpoisoned) rows only; the first
// output holds round(fraction * n_clean) rows, the second everything else.
// Both outputs keep the original row order.
std::pair<Dataset, Dataset> split_defender(const Dataset& data, double fraction,
                                           std::uint64_t seed);

// Deterministic argmax prediction (ties resolved to the lowest class index).
std::vector<int> predict(const NetworkSpec& spec, const Weights& w, const Dataset& data);

// Triggered copies of the rows whose true label differs from the target class;
// the labels keep the true classes. Throws if no such row exists.
Dataset attack_pool(const Dataset& clean_test, const TriggerSpec& trigger);

// ACC over the clean test set; ASR over triggered copies of the rows whose true
// label differs from the trigger target. Throws if that pool is empty.
Metrics evaluate(const NetworkSpec& spec, const Weights& w, const Dataset& clean_test,
                 const TriggerSpec& trigger);

// Affine read-out head trained with cross-entropy on frozen encoder features.
struct LinearProbe {
    Matrix w;              // num_classes x d_feature
    std::vector<double> b; // num_classes
};

LinearProbe train_linear_probe(const NetworkSpec& spec, const Weights& encoder,
                               const Dataset& labeled, int epochs, double lr,
                               std::uint64_t seed);

Metrics evaluate_probe(const NetworkSpec& spec, const Weights& encoder, const LinearProbe& probe,
                       const Dataset& clean_test, const TriggerSpec& trigger);

// How a model is turned into ACC / ASR / loss numbers: either directly from its
// outputs, or through a linear probe retrained on labeled data at every call.
struct Evaluator {
    enum class Mode { direct, linear_probe };
    Mode mode = Mode::direct;
    Dataset probe_data;      // labeled rows for probe training
    int probe_epochs = 200;
    double probe_lr = 0.5;
    std::uint64_t probe_seed = 0;

    static Evaluator direct();
    static Evaluator linear_probe(Dataset probe_data, int epochs, double lr, std::uint64_t seed);

    struct Result {
        Metrics metrics;
        double loss_clean = 0.0;  // mean CE on (clean samples, true labels)
        double loss_poison = 0.0; // mean CE on (triggered pool, target label)
    };
    Result operator()(const NetworkSpec& spec, const Weights& w, const Dataset& clean_test,
                      const TriggerSpec& trigger) const;
};

// CSV round-trip: header `label,poison,p0..p{d-1}`, doubles printed with 17
// significant digits so re-import is bitwise exact. Unlabeled rows store -1.
void export_dataset_csv(const std::string& path, const Dataset& data);
Dataset import_dataset_csv(const std::string& path);

} // namespace tsclab
