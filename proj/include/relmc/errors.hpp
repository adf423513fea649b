#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relmc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised by the model and formula parsers; carries a 1-based source position.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t col)
        : Error(what + " (line " + std::to_string(line) + ", column " +
                std::to_string(col) + ")"),
          line(line), col(col) {}

    std::size_t line;
    std::size_t col;
};

/// Raised when a parsed model or formula violates a structural rule
/// (undeclared relation, probabilities that do not sum to one, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Raised when a substitution would identify terms that an abstract state
/// keeps distinct (all distinct terms of a conjunction denote distinct
/// objects), or would contradict one of its explicit disequalities.
class OIViolation : public Error {
public:
    using Error::Error;
};

/// Raised by operations that require their two operands to have disjoint
/// variable sets when they do not.
class SharedVariables : public Error {
public:
    using Error::Error;
};

/// Raised when an operation defined only on ground states receives a state
/// containing variables.
class NonGroundState : public Error {
public:
    using Error::Error;
};

/// Raised when a concrete action instance does not apply in a ground state.
class InapplicableAction : public Error {
public:
    using Error::Error;
};

/// Raised when a negated literal reaches an operation that has no sound
/// treatment for it (state intersection, regression, target seeding).
class UnsupportedNegation : public Error {
public:
    using Error::Error;
};

/// Raised when an unbounded until does not converge within the iteration cap.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double last_distance,
                   std::size_t iterations)
        : Error(what), last_distance(last_distance), iterations(iterations) {}

    double last_distance;
    std::size_t iterations;
};

/// Raised when ground-state enumeration exceeds its configured cap.
class ExplosionGuard : public Error {
public:
    using Error::Error;
};

/// Raised when a path disagrees with the transition system or the policy it
/// is evaluated under (unknown state, wrong action, zero-probability step).
class InconsistentPath : public Error {
public:
    using Error::Error;
};

} // namespace relmc
