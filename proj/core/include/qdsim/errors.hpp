#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qdsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown identifier in a database lookup (material, species, ...).
class LookupError : public Error {
public:
    explicit LookupError(const std::string& what, std::string key)
        : Error(what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed configuration or data document. `location` names the offending
/// element (layer index, file line, JSON path) when known.
class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::string location = {})
        : Error(location.empty() ? what : location + ": " + what),
          location_(std::move(location)) {}
    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

/// Inputs that are individually valid but inconsistent with each other.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Iterative method failed to converge. Carries the residual history so
/// callers can report how far the iteration got.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history,
                     double last_converged_parameter = 0.0)
        : Error(what), history_(std::move(history)),
          last_converged_(last_converged_parameter) {}
    const std::vector<double>& history() const noexcept { return history_; }
    /// For continuation methods: the last parameter value (e.g. bias) that
    /// did converge.
    double last_converged() const noexcept { return last_converged_; }

private:
    std::vector<double> history_;
    double last_converged_;
};

/// Not enough usable data for a fit.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// A series fit where some members lack the target peak.
class MissingPeakError : public InsufficientDataError {
public:
    MissingPeakError(const std::string& what, std::vector<double> angles)
        : InsufficientDataError(what), angles_(std::move(angles)) {}
    const std::vector<double>& angles() const noexcept { return angles_; }

private:
    std::vector<double> angles_;
};

/// No long-delay plateau to normalise a correlation trace against.
class NormalizationError : public InsufficientDataError {
public:
    using InsufficientDataError::InsufficientDataError;
};

}  // namespace qdsim
