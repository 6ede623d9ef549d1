#pragma once

#include <stdexcept>
#include <string>

namespace tsclab {

// All library errors derive from Error; the CLI maps concrete types to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad argument values passed to an operation (rates, fractions, indices, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// Shape mismatch between weights, data and the network spec; message names the layer.
struct DimensionError : Error {
    using Error::Error;
};

// Unparseable or invalid experiment configuration; message names the key.
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite losses, degenerate geometry and similar numeric failures.
struct NumericError : Error {
    using Error::Error;
};

// Missing or malformed files.
struct IoError : Error {
    using Error::Error;
};

} // namespace tsclab
