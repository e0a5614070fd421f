#pragma once

#include <stdexcept>
#include <string>

namespace dmarket {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input files, schemas, or argument values.
class InputError : public Error {
public:
    using Error::Error;
};

// An iterative solver ran out of iterations.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, int iterations, double residual)
        : Error(what), iterations_(iterations), residual_(residual) {}

    int iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    int iterations_;
    double residual_;
};

// Linear-algebra failure (singular Hessian, rank deficiency).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace dmarket
