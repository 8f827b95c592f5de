#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trifusion {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An API precondition was violated (non-scalar loss, missing tape, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value (head count, PSNR peak, missing checkpoint).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Invalid user-supplied data (empty dataset, out-of-range argument).
class InputError : public Error {
public:
    using Error::Error;
};

/// Regression or estimator with no unique solution.
class DegenerateError : public InputError {
public:
    using InputError::InputError;
};

/// Non-finite values produced during training or evaluation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed tensor container; carries the byte offset of the problem.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }
    /// Message without the offset suffix.
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
    std::uint64_t offset_;
};

}  // namespace trifusion
