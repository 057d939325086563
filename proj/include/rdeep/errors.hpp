#pragma once

#include <stdexcept>
#include <string>

namespace rdeep {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong" catch this; the subclasses name the failure class.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

// Data matrix lacks full row rank.
class IdentificationError : public Error {
public:
    using Error::Error;
};

// Stabilizing gain could not be certified.
class SynthesisError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

// A tightened nominal constraint became empty.
class InfeasibleTightening : public Error {
public:
    InfeasibleTightening(int step, int dim, const std::string& what)
        : Error(what), step_(step), dim_(dim) {}

    int step() const noexcept { return step_; }
    // -1 marks the input constraint.
    int dim() const noexcept { return dim_; }

private:
    int step_;
    int dim_;
};

}  // namespace rdeep
