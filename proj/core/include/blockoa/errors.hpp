#pragma once

#include <stdexcept>
#include <string>

namespace blockoa {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A spec struct (chip, grid, boundary, floorplan) violates its invariants.
struct InvalidSpecError : Error {
    using Error::Error;
};

// A run configuration (JSON or programmatic) is malformed or inconsistent.
struct InvalidConfigError : Error {
    using Error::Error;
};

// Shapes disagree: field vs grid, vector vs matrix, block vs basis.
struct DimensionMismatchError : Error {
    using Error::Error;
};

// Conductivity must be strictly positive everywhere.
struct NonPositiveConductivityError : Error {
    using Error::Error;
};

// Robin heat transfer coefficient must be strictly positive.
struct NonPositiveHtcError : Error {
    using Error::Error;
};

// A solve that must succeed did not reach its tolerance.
struct NotConvergedError : Error {
    using Error::Error;
};

// cg_error_bound needs kappa >= 1.
struct InvalidKappaError : Error {
    using Error::Error;
};

// Asked to combine or act on an empty basis.
struct EmptyBasisError : Error {
    using Error::Error;
};

// Filesystem trouble: unreadable file, failed write, failed rename.
struct IoError : Error {
    using Error::Error;
};

// Refusing to overwrite a dataset directory that already has a manifest.
struct ExistsError : IoError {
    using IoError::IoError;
};

// Manifest missing, unparsable, or missing required keys.
struct CorruptManifestError : IoError {
    using IoError::IoError;
};

// Payload file length disagrees with manifest n_data and grid.
struct SizeMismatchError : IoError {
    using IoError::IoError;
};

}  // namespace blockoa
