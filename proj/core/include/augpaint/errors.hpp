#pragma once

#include <stdexcept>
#include <string>

namespace augpaint {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration values or violated call preconditions.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Filesystem / serialization failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Tensor/grid dimension mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values or domain violations in numeric code.
class NumericError : public Error {
public:
    using Error::Error;
};

// A label map contains no foreground pixels; the sample cannot seed a mask.
class NoForegroundError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

}  // namespace augpaint
