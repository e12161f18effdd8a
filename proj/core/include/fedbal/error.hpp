#pragma once

#include <stdexcept>
#include <string>

namespace fedbal {

// Engine-level failure: shape mismatch, non-finite values, bad layer wiring.
struct EngineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent user configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Problems in input data files or dataset preconditions.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training blew up: non-finite or runaway loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fedbal
