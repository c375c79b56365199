#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gbdt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class SymmetryError : public Error {
public:
    using Error::Error;
};

/// Raised when a matrix that must be positive definite is not.
class NotPositiveDefiniteError : public Error {
public:
    NotPositiveDefiniteError(const std::string& what, double smallest_eigenvalue)
        : Error(what), smallest_eigenvalue_(smallest_eigenvalue) {}

    double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }

private:
    double smallest_eigenvalue_;
};

/// S(x) lost positivity at a grid sample.
class SingularityError : public Error {
public:
    SingularityError(const std::string& what, std::size_t sample)
        : Error(what), sample_(sample) {}

    std::size_t sample() const noexcept { return sample_; }

private:
    std::size_t sample_;
};

/// Integration drift exceeded the identity tolerance.
class AccuracyError : public Error {
public:
    AccuracyError(const std::string& what, double suggested_step)
        : Error(what), suggested_step_(suggested_step) {}

    double suggested_step() const noexcept { return suggested_step_; }

private:
    double suggested_step_;
};

/// A mathematical precondition of a construction does not hold.
class PreconditionError : public Error {
public:
    PreconditionError(const std::string& what, double offending_value)
        : Error(what), offending_value_(offending_value) {}

    double offending_value() const noexcept { return offending_value_; }

private:
    double offending_value_;
};

/// Spectral parameter too close to the spectrum of A.
class NearSingularError : public Error {
public:
    using Error::Error;
};

}  // namespace gbdt
