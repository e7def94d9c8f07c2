#pragma once

#include <stdexcept>
#include <string>

namespace cwtnet {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with what an operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid hyperparameter or flag combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

// API misuse (wrong mode/argument combination, non-scalar loss, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

// Missing or malformed files on disk.
class DataError : public Error {
public:
    using Error::Error;
};

// NaN loss, failed gradient check, corrupted checkpoint payload.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace cwtnet
