#pragma once

#include <stdexcept>
#include <string>

namespace netpatch {

/// Bad caller-supplied data: dimension mismatches, invalid files, malformed
/// arguments. Maps to CLI exit code 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// An operation that requires piecewise-linear activations was given a
/// network containing a non-PWL layer.
class UnsupportedActivationError : public InputError {
public:
    explicit UnsupportedActivationError(const std::string& what) : InputError(what) {}
};

/// File could not be parsed or failed validation on load.
class ParseError : public InputError {
public:
    explicit ParseError(const std::string& what) : InputError(what) {}
};

/// The LP solver hit its pivot cap. Maps to CLI exit code 3.
class IterationLimitError : public std::runtime_error {
public:
    explicit IterationLimitError(const std::string& what) : std::runtime_error(what) {}
};

/// Wall-clock deadline exceeded. Maps to CLI exit code 3.
class TimeoutError : public std::runtime_error {
public:
    explicit TimeoutError(const std::string& what) : std::runtime_error(what) {}
};

/// No external LP solver is registered under the requested name.
class SolverUnavailableError : public InputError {
public:
    explicit SolverUnavailableError(const std::string& what) : InputError(what) {}
};

/// An external LP solver returned a result that violates the solver contract
/// (e.g. an "optimal" point that is infeasible).
class SolverProtocolError : public std::runtime_error {
public:
    explicit SolverProtocolError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace netpatch
