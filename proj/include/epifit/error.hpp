#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace epifit {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration (caller error).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A non-finite state was produced while integrating.
class IntegrationDiverged : public Error {
public:
    IntegrationDiverged(double t, const std::string& what)
        : Error("integration diverged at t=" + std::to_string(t) + ": " + what), time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// An objective cannot be evaluated (log of a nonpositive value, division by zero).
class ObjectiveUndefined : public Error {
public:
    ObjectiveUndefined(std::size_t index, const std::string& what)
        : Error("objective undefined at index " + std::to_string(index) + ": " + what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// A symmetry map hit a zero denominator or a fixed point of the swap.
class DegenerateSymmetry : public Error {
public:
    using Error::Error;
};

/// The EAIHRD -> 4thA reduction needs h, s, d > 0.
class ReductionUndefined : public Error {
public:
    using Error::Error;
};

class OptimizationFailed : public Error {
public:
    using Error::Error;
};

class PsrfUndefined : public Error {
public:
    using Error::Error;
};

}  // namespace epifit
