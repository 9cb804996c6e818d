#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crowdtrade {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, malformed scenario files, unsupported configurations.
class ScenarioError : public Error {
public:
    using Error::Error;
};

/// A solver could not meet its postconditions (divergence, CFL, singular systems).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Fixed-point iteration ran out of iterations; carries the residual history.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : NumericalError(what), history_(std::move(history)) {}

    const std::vector<double>& residual_history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

}  // namespace crowdtrade
