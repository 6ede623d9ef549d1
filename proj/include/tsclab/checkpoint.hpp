#pragma once

#include <string>
#include <utility>

#include "tsclab/net.hpp"

namespace tsclab {

// Versioned binary weight container: magic, format version, activation id,
// layer dims, then per layer the row-major float64 matrix and the bias vector.
// Round-trips are bitwise lossless.
void save_weights(const std::string& path, const NetworkSpec& spec, const Weights& w);

// Returns the architecture recorded in the header (seed is not stored) and the
// weights. Throws IoError on missing files, wrong magic or version, or header
// fields that do not match the payload size.
std::pair<NetworkSpec, Weights> load_weights(const std::string& path);

} // namespace tsclab
