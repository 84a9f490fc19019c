#pragma once

#include <stdexcept>
#include <string>

namespace cardioxnet {

// Error taxonomy shared across the library. The CLI maps these onto its
// documented exit codes (see tools/).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or corrupt on-disk content (WAV headers, model files, CSV).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Semantically invalid data (wrong clip length, unstratifiable class, ...).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (loss, gradients).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Model and data disagree (class count, input length).
struct MismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cardioxnet
