#ifndef BDL_ERRORS_HPP
#define BDL_ERRORS_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace bdl {

// Input file could not be read or written.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed text in an input file; message carries the line number.
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally well-formed input violating a domain invariant.
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad key, missing key, or unparseable value in an experiment config.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Matrix/vector shape mismatch.
struct dimension_error : std::logic_error {
    using std::logic_error::logic_error;
};

// NaN/Inf encountered where a finite value is required.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Singular or non-positive-definite linear system.
struct solve_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid argument to an operation (e.g. M <= 0 for recall@M).
struct argument_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void check_finite(double v, const char* term) {
    if (!std::isfinite(v)) throw numeric_error(std::string("objective term not finite: ") + term);
}

}  // namespace detail

}  // namespace bdl

#endif
