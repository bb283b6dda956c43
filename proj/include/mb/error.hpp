#pragma once

#include <stdexcept>
#include <string>

namespace mb {

// Base for all library errors. Subtypes map to CLI exit codes in tools/.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller passed a value outside an operation's stated domain.
struct InvalidInputError : Error {
    using Error::Error;
};

// Tensor shape / channel-count mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Bad or inconsistent configuration (unknown keys, empty mask library, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Dataset load/store problems.
struct DataError : Error {
    using Error::Error;
};
struct VersionMismatchError : DataError {
    using DataError::DataError;
};
struct ChecksumError : DataError {
    using DataError::DataError;
};
struct MissingFileError : DataError {
    using DataError::DataError;
};

// Non-finite loss or gradient during training.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace mb
