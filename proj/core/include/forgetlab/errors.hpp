#pragma once

#include <stdexcept>
#include <string>

namespace forgetlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument shape, index or range.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// arcsin argument outside [-1, 1] beyond the clamping tolerance.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A Lambda determinant that must be positive is not.
class DegenerateCovarianceError : public Error {
public:
    using Error::Error;
};

/// Covariance could not be factorised (not PSD within tolerance).
class FactorizationError : public Error {
public:
    using Error::Error;
};

/// Missing head, inconsistent network setup and similar.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (IDX, FLAB1).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite state during integration or training.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double at)
        : Error(what), at_(at) {}

    /// tau (ODE) or step index (simulator) at which the run diverged.
    double at() const noexcept { return at_; }

private:
    double at_;
};

/// Experiment configuration error; `key()` names the offending key path.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& msg)
        : Error(key + ": " + msg), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace forgetlab
