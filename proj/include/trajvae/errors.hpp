#pragma once

#include <stdexcept>
#include <string>

namespace trajvae {

// Bad arguments or malformed data (dimension mismatches, invalid manifests, ...).
struct InvalidInput : std::invalid_argument {
    explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

// A required piece of configuration is missing or inconsistent (e.g. no aux
// posterior parameters when the variational bound is requested).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File contents do not match the expected schema.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Free-running generation produced a non-finite state.
struct RolloutDivergence : std::runtime_error {
    RolloutDivergence(int step_index, const std::string& msg)
        : std::runtime_error(msg), step(step_index) {}
    int step;
};

// Non-finite loss or other numerical failure during training.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trajvae
