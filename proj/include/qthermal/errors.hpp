#pragma once

#include <stdexcept>
#include <string>

namespace qthermal {

/// Malformed input: out-of-range coordinates, bad config, non-Hermitian data.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Problem exceeds a configured size cap (dense storage, enumeration, sort).
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A theorem hypothesis does not hold for the input (degenerate gaps, non-commuting charges).
class HypothesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Internal consistency check failed (a proven property was violated numerically).
class ConsistencyError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Numerical routine did not converge.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ValidationError(message);
}

}  // namespace qthermal
