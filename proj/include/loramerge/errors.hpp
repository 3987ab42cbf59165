// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loramerge {

// Error taxonomy; the CLI maps these onto exit codes
// (validation -> 2, format -> 3, numeric -> 4, I/O -> 1).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data or incompatible checkpoints.
struct ValidationError : Error {
    using Error::Error;
};

// Dimension mismatch between operands.
struct ShapeError : ValidationError {
    using ValidationError::ValidationError;
};

// Out-of-range or inconsistent configuration value.
struct ParameterError : ValidationError {
    using ValidationError::ValidationError;
};

// Malformed container file; carries the byte offset of the defect.
struct FormatError : Error {
    std::size_t byte_offset;
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

// Numeric failure: non-convergence, dead row, non-finite data.
struct NumericError : Error {
    double residual;
    explicit NumericError(const std::string& msg, double res = 0.0)
        : Error(msg), residual(res) {}
};

// Filesystem failure; message names the path.
struct IoError : Error {
    using Error::Error;
};

}  // namespace loramerge
