#pragma once

#include <stdexcept>
#include <string>

namespace gda {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input outside the mathematical domain of an operation (e.g. log of a non-positive entry).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent data.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A statistic that has no defined value for the given input (no countable edges, single-class truth, ...).
class UndefinedStatistic : public Error {
public:
    using Error::Error;
};

/// All points of a pooled sample coincide, so no kernel bandwidth can be derived.
class DegenerateBandwidth : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergedRun : public Error {
public:
    DivergedRun(int epoch, const std::string& what)
        : Error("diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace gda
