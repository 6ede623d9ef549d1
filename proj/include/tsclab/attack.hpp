#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "tsclab/dataset.hpp"

namespace tsclab {

// Solid square of a fixed value stamped at (row, col); the desk-scale default
// is a 2x2 white square in the bottom-right corner.
struct PatchTrigger {
    int row = 0;
    int col = 0;
    int size = 2;
    double value = 1.0;
};

// x' = alpha * pattern + (1 - alpha) * x with a fixed blending pattern.
struct BlendedTrigger {
    std::vector<double> pattern; // length d_0, values in [0, 1]
    double alpha = 0.2;
};

// Adds amplitude * sin(2*pi*frequency*col/width) to every row of the image.
struct SignalTrigger {
    double amplitude = 0.15;
    double frequency = 6.0;
};

struct TriggerSpec {
    int target_class = 0;
    std::variant<PatchTrigger, BlendedTrigger, SignalTrigger> kind;
};

enum class LabelMode { flip, clean_label };

struct PoisonPlan {
    TriggerSpec trigger;
    double rate = 0.05;   // fraction of the whole dataset
    LabelMode mode = LabelMode::flip;
};

// Bottom-right patch trigger for h x w images.
TriggerSpec default_patch_trigger(int target_class, int height, int width);
// Seeded smooth random field in [0, 1]; the same (h, w) always yields the same pattern.
std::vector<double> default_blended_pattern(int height, int width);

// Applies the trigger to one sample row; the result never leaves [0, 1].
std::vector<double> apply_trigger(const std::vector<double>& x, const TriggerSpec& trigger,
                                  int height, int width);

// Stamps the trigger onto round(rate * n) rows chosen without replacement and
// marks them in the poison mask. Flip mode relabels them to the target class
// and draws from all classes; clean-label mode draws only from rows whose true
// label already is the target class and keeps labels untouched.
Dataset poison_dataset(const Dataset& data, const PoisonPlan& plan, std::uint64_t seed);

} // namespace tsclab
