#pragma once

#include <stdexcept>
#include <string>

namespace annbias {

// Invalid configuration values (bad lambda, mismatched architecture, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed runtime inputs (shape mismatches, empty batches, single-class labels).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures during optimization (non-finite gradients/losses, ranker divergence).
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// CSV/JSON parse failures; message carries the offending line where known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace annbias
