#pragma once

#include <stdexcept>
#include <string>

namespace saapde {

/// Invalid input, configuration, or violated precondition. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A coefficient bound required for well-posedness does not hold.
class CoefficientBoundError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Numerical failure (non-convergence, stagnation). Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative method hit its iteration cap. Carries the last residual.
class NonConvergenceError : public NumericalError {
public:
    NonConvergenceError(const std::string& what, double residual)
        : NumericalError(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Control left the neighbourhood of the admissible set on which the
/// bilinear state equation is known to be well posed.
class OutOfNeighborhoodError : public NumericalError {
public:
    OutOfNeighborhoodError(const std::string& what, double distance, double radius)
        : NumericalError(what), distance_(distance), radius_(radius) {}
    double distance() const noexcept { return distance_; }
    double radius() const noexcept { return radius_; }

private:
    double distance_;
    double radius_;
};

}  // namespace saapde
