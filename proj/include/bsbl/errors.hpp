#pragma once

#include <stdexcept>
#include <string>

namespace bsbl {

// Base class for every error the library raises on purpose.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller-supplied data or configuration violates a precondition
// (dimension mismatches, invalid coefficients, empty observations, ...).
// The command-line driver maps this class to exit code 2.
class invalid_input : public error {
public:
    using error::error;
};

// A numerically degenerate quantity was encountered while the inputs were
// formally valid (singular deflation, ill-conditioned C, rank-deficient
// least squares, ...). Mapped to exit code 3.
class numerical_error : public error {
public:
    using error::error;
};

// An internal consistency check failed; this always indicates a bug in the
// incremental update rules, never bad user input.
class internal_error : public error {
public:
    using error::error;
};

}  // namespace bsbl
