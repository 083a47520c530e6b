#pragma once

#include <stdexcept>
#include <string>

namespace smforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise unusable numeric data.
class InvalidDataError : public Error {
public:
    using Error::Error;
};

/// Dimensions or grids that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// A configuration value outside its admissible range.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A metric or ratio whose reference quantity is zero.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated, or version-incompatible file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace smforge
