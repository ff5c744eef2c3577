#pragma once

#include <stdexcept>
#include <string>

namespace modforge {

// Error taxonomy used across the library. The CLI maps ConfigError/UsageError
// to exit code 2 and FormatError/IoError to exit code 3.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk data (bad magic, truncation, inconsistent dims).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace modforge
