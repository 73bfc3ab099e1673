#pragma once

#include <stdexcept>
#include <string>

namespace teachirl {

/// Raised when inputs have inconsistent shapes or violate a model invariant.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative solver hit its sweep cap before reaching the requested residual.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::size_t sweeps, double residual)
        : std::runtime_error(what + " (sweeps=" + std::to_string(sweeps) +
                             ", residual=" + std::to_string(residual) + ")"),
          sweeps_(sweeps), residual_(residual) {}

    std::size_t sweeps() const noexcept { return sweeps_; }
    double residual() const noexcept { return residual_; }

private:
    std::size_t sweeps_;
    double residual_;
};

/// Non-finite numbers appeared (typically a diverging step size).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad experiment configuration (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace teachirl
