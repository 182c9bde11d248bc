#pragma once

#include <stdexcept>
#include <string>

namespace uap {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (shape mismatch, out-of-bounds
// prompt, unnormalized embedding, ...).
struct ContractError : Error {
    using Error::Error;
};

// The run setup is unusable: corpus too small, corpora overlap, encoder
// fingerprint mismatch, unsupported model variant.
struct ConfigError : Error {
    using Error::Error;
};

// A persisted file is malformed or violates its own declared invariants.
struct FormatError : Error {
    using Error::Error;
};

// Filesystem-level failure (missing path, unreadable/unwritable file).
struct IoError : Error {
    using Error::Error;
};

// Numeric input contains NaN/Inf where finite values are required.
struct InvalidValueError : Error {
    using Error::Error;
};

// Mathematically degenerate input (zero vector to a normalizer, etc).
struct DegenerateInputError : Error {
    using Error::Error;
};

// An optimization loop produced a non-finite loss.
struct DivergenceError : Error {
    DivergenceError(const std::string& msg, long iteration)
        : Error(msg), iteration(iteration) {}
    long iteration;
};

}  // namespace uap
