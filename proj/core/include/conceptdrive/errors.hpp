#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace conceptdrive {

/// Tensor/matrix dimension contract violation.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// An operation parameter is outside its documented range.
struct ParamError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A binary or JSON file does not parse; carries the byte offset at which
/// reading stopped.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, std::uint64_t byte_offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::uint64_t offset;
};

/// A loaded or computed value violates a documented invariant. The message
/// names the offending field.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// NaN or divergence during numeric work.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace conceptdrive
