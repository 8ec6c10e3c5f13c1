#pragma once

#include <stdexcept>
#include <string>

namespace blurforge {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Mismatched image/map dimensions or shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A value outside the documented domain of an operation.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Reading or writing a file failed.
class IoError : public Error {
public:
    using Error::Error;
};

// A configuration document could not be parsed or validated.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace blurforge
