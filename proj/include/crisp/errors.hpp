#pragma once

#include <stdexcept>
#include <string>

namespace crisp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Input is mathematically degenerate for the requested operation
/// (zero vector to normalize, coincident points, zero variance, ...).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity surfaced where a finite value was required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values (sizes, counts, rates).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Input values outside their documented domain.
class InputError : public Error {
public:
    using Error::Error;
};

} // namespace crisp
