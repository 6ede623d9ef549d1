#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tsclab/errors.hpp"
#include "tsclab/matrix.hpp"

namespace tsclab {

// In-memory dataset: one sample per row, optional integer labels, and a poison
// mask marking rows a poisoning step has modified. `row_reads` counts sample-row
// accesses made through gather_rows; tests use it to prove that defenses touch
// only the data they were given.
struct Dataset {
    Matrix samples;                                // n x d0
    std::optional<std::vector<int>> labels;        // length n when present
    std::vector<std::uint8_t> poison_mask;         // length n, 1 = poisoned
    int num_classes = 0;
    int image_height = 0;                          // 0 when rows are not images
    int image_width = 0;

    std::size_t size() const { return samples.rows(); }
    std::size_t dim() const { return samples.cols(); }

    mutable std::uint64_t row_reads = 0;

    void validate() const {
        const std::size_t n = samples.rows();
        if (labels && labels->size() != n)
            throw DimensionError("dataset: label count does not match sample count");
        if (poison_mask.size() != n)
            throw DimensionError("dataset: poison mask length does not match sample count");
        if (!samples.all_finite())
            throw NumericError("dataset: samples contain non-finite values");
        if (labels)
            for (int y : *labels)
                if (y < 0 || y >= num_classes)
                    throw ArgumentError("dataset: label outside [0, num_classes)");
    }
};

// Canonical batch accessor; every training and evaluation loop goes through it.
inline Matrix gather_rows(const Dataset& d, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), d.samples.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= d.samples.rows()) throw ArgumentError("gather_rows: index out of range");
        const double* src = d.samples.row(idx[i]);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < d.samples.cols(); ++j) dst[j] = src[j];
    }
    d.row_reads += idx.size();
    return out;
}

inline std::vector<int> gather_labels(const Dataset& d, const std::vector<std::size_t>& idx) {
    if (!d.labels) throw ArgumentError("gather_labels: dataset has no labels");
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = (*d.labels)[idx[i]];
    return out;
}

} // namespace tsclab
