#pragma once

#include <stdexcept>
#include <string>

namespace paintdet {

// Bad user input: malformed config, unknown keys, out-of-range arguments.
// Maps to CLI exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken data on disk: missing files, malformed indexes, dimension mismatches.
// Maps to CLI exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure at runtime: non-finite gradients or losses, invalid
// schedule coefficients. Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace paintdet
