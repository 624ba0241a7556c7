#pragma once

#include <stdexcept>
#include <string>

namespace pdakit {

// Exit-code mapping used by the CLI: ArgumentError -> 2, NumericalError -> 3, IoError -> 4.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : NumericalError {
    double time;
    explicit DivergenceError(double t)
        : NumericalError("trajectory became non-finite at t = " + std::to_string(t)), time(t) {}
    DivergenceError(double t, const std::string& what)
        : NumericalError(what + " at t = " + std::to_string(t)), time(t) {}
};

struct SingularityError : NumericalError {
    using NumericalError::NumericalError;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pdakit
