#pragma once

#include <stdexcept>
#include <string>

namespace cgen {

// Error taxonomy shared by all modules. The CLI maps these onto its exit
// codes: config/usage problems -> 2, I/O and file-format problems -> 3,
// missing pipeline prerequisites -> 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension disagreement between tensors/layers.
struct DimensionError : Error {
    using Error::Error;
};

// Bad configuration value (out-of-range hyperparameter, non-integral conv
// output extent, unknown config key, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Invalid runtime value (non-finite tensor data, label outside {0,1}, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Object used in a state that forbids the operation (double backward,
// optimizer step without gradients, unfrozen predictor, ...).
struct StateError : Error {
    using Error::Error;
};

// Operation not supported by this object (e.g. latent decode on a
// non-variational generator).
struct UnsupportedError : Error {
    using Error::Error;
};

// Filesystem-level failure.
struct IoError : Error {
    using Error::Error;
};

// Structurally broken file (bad magic, truncation, length mismatch).
struct FormatError : Error {
    using Error::Error;
};

// Well-formed file with an unsupported format version.
struct VersionError : Error {
    using Error::Error;
};

// A pipeline stage was invoked before the artifact it needs exists.
struct MissingPrerequisite : Error {
    using Error::Error;
};

// Scripted demonstration could not make progress; the scene is excluded.
struct DemonstrationFailure : Error {
    using Error::Error;
};

}  // namespace cgen
