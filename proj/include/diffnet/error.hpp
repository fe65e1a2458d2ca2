#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch, too-short signals, non-coarsenable grids.
class SizeError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Requested feature outside what the library implements (e.g. derivative order > 2).
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Out-of-range scalar parameter (non-positive h, L < 1, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Iterative estimate did not settle within its iteration cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Zero pivot or zero diagonal where an inverse is required.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// A non-finite sample appeared during time stepping. `step()` is the index of
/// the step (or inner iteration) that produced it.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace diffnet
