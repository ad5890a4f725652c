#pragma once

#include <stdexcept>
#include <string>

namespace scpuq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension or shape mismatch between arguments.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Position outside the valid index range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Input that is well-formed but violates a documented invariant
/// (non-PSD covariance, inconsistent model data, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Sparse array holds several entries at one position and the caller asked
/// for a single value.
class DuplicatePositionError : public Error {
public:
    using Error::Error;
};

/// Point is not in the cone, or is otherwise not a complementarity solution.
class InfeasiblePointError : public Error {
public:
    using Error::Error;
};

/// NaN or infinity produced while evaluating a user-supplied function.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Linear system that the theory requires to be nonsingular is not.
class RankError : public Error {
public:
    using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace scpuq
