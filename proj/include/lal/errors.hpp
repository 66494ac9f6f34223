#pragma once

#include <stdexcept>
#include <string>

namespace lal {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// ConfigError -> 2, StabilityError/NumericError -> 3.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when the incremental Lookahead API is driven out of order
// (outer step while inner steps remain, or vice versa).
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Learning rate outside the contraction region of the moment recursions.
struct StabilityError : std::runtime_error {
    explicit StabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// theta_0 == theta_k: no direction to optimize the slow-weights step along.
struct DegenerateDirectionError : NumericError {
    explicit DegenerateDirectionError(const std::string& msg) : NumericError(msg) {}
};

}  // namespace lal
