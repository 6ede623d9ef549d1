#include "tsclab/attack.hpp"

#include <algorithm>
#include <cmath>

#include "tsclab/rng.hpp"

namespace tsclab {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void require_geometry(const char* kind, std::size_t dim, int height, int width) {
    if (height < 1 || width < 1 ||
        static_cast<std::size_t>(height) * static_cast<std::size_t>(width) != dim)
        throw ArgumentError(std::string(kind) + " trigger: sample length " + std::to_string(dim) +
                            " does not match " + std::to_string(height) + "x" +
                            std::to_string(width) + " image geometry");
}

} // namespace

TriggerSpec default_patch_trigger(int target_class, int height, int width) {
    const int size = std::min({2, height, width});
    PatchTrigger p;
    p.size = size;
    p.row = height - size;
    p.col = width - size;
    p.value = 1.0;
    TriggerSpec t;
    t.target_class = target_class;
    t.kind = p;
    return t;
}

std::vector<double> default_blended_pattern(int height, int width) {
    if (height < 1 || width < 1) throw ArgumentError("blended pattern: empty geometry");
    // Fixed seed: the pattern is part of the trigger identity, not an experiment knob.
    Rng rng(derive_seed(0xb1e7ded5u, "blended-pattern", static_cast<std::uint64_t>(height),
                        static_cast<std::uint64_t>(width)));
    std::vector<double> field(static_cast<std::size_t>(height) * width);
    for (double& v : field) v = rng.uniform();
    // Two passes of a 3x3 box blur give a smooth random field, still in [0, 1].
    std::vector<double> tmp(field.size());
    for (int pass = 0; pass < 2; ++pass) {
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c) {
                double sum = 0.0;
                int cnt = 0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
                        sum += field[static_cast<std::size_t>(rr) * width + cc];
                        ++cnt;
                    }
                tmp[static_cast<std::size_t>(r) * width + c] = sum / cnt;
            }
        field.swap(tmp);
    }
    return field;
}

std::vector<double> apply_trigger(const std::vector<double>& x, const TriggerSpec& trigger,
                                  int height, int width) {
    std::vector<double> out = x;
    if (const auto* patch = std::get_if<PatchTrigger>(&trigger.kind)) {
        require_geometry("patch", x.size(), height, width);
        if (patch->size < 1) throw ArgumentError("patch trigger: size must be >= 1");
        if (patch->row < 0 || patch->col < 0 || patch->row + patch->size > height ||
            patch->col + patch->size > width)
            throw ArgumentError("patch trigger: square leaves the image bounds");
        for (int r = patch->row; r < patch->row + patch->size; ++r)
            for (int c = patch->col; c < patch->col + patch->size; ++c)
                out[static_cast<std::size_t>(r) * width + c] = clamp01(patch->value);
    } else if (const auto* blended = std::get_if<BlendedTrigger>(&trigger.kind)) {
        if (blended->pattern.size() != x.size())
            throw DimensionError("blended trigger: pattern length does not match sample length");
        if (!(blended->alpha >= 0.0 && blended->alpha <= 1.0))
            throw ArgumentError("blended trigger: alpha must lie in [0, 1]");
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = clamp01(blended->alpha * blended->pattern[i] +
                             (1.0 - blended->alpha) * x[i]);
    } else {
        const auto& sig = std::get<SignalTrigger>(trigger.kind);
        require_geometry("signal", x.size(), height, width);
        if (sig.amplitude == 0.0) return out; // bitwise no-op by definition
        const double two_pi = 6.283185307179586476925286766559;
        for (int c = 0; c < width; ++c) {
            const double v = sig.amplitude *
                             std::sin(two_pi * sig.frequency * static_cast<double>(c) /
                                      static_cast<double>(width));
            for (int r = 0; r < height; ++r) {
                const std::size_t i = static_cast<std::size_t>(r) * width + c;
                out[i] = clamp01(out[i] + v);
            }
        }
    }
    return out;
}

Dataset poison_dataset(const Dataset& data, const PoisonPlan& plan, std::uint64_t seed) {
    data.validate();
    if (!(plan.rate >= 0.0 && plan.rate <= 1.0))
        throw ArgumentError("poison plan: rate must lie in [0, 1]");
    if (!data.labels) throw ArgumentError("poison plan: dataset must be labeled");
    if (plan.trigger.target_class < 0 || plan.trigger.target_class >= data.num_classes)
        throw ArgumentError("poison plan: target class outside [0, num_classes)");

    const std::size_t n = data.size();
    const std::size_t count =
        static_cast<std::size_t>(std::floor(plan.rate * static_cast<double>(n) + 0.5));

    Dataset out = data;
    out.row_reads = 0;
    if (count == 0) return out;

    std::vector<std::size_t> pool;
    if (plan.mode == LabelMode::flip) {
        pool.resize(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    } else {
        for (std::size_t i = 0; i < n; ++i)
            if ((*data.labels)[i] == plan.trigger.target_class) pool.push_back(i);
        if (pool.size() < count)
            throw ArgumentError("poison plan: clean-label mode needs " + std::to_string(count) +
                                " target-class rows, dataset has " + std::to_string(pool.size()));
    }
    if (pool.size() < count)
        throw ArgumentError("poison plan: not enough rows to poison");

    Rng rng(seed);
    rng.shuffle(pool);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());

    for (std::size_t i : pool) {
        std::vector<double> row = out.samples.row_vector(i);
        out.samples.set_row(i, apply_trigger(row, plan.trigger, data.image_height,
                                             data.image_width));
        out.poison_mask[i] = 1;
        if (plan.mode == LabelMode::flip) (*out.labels)[i] = plan.trigger.target_class;
    }
    return out;
}

} // namespace tsclab
