#pragma once

#include <stdexcept>
#include <string>

namespace dtml {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mask is all-foreground or all-background, so no boundary exists.
struct DegenerateMask : Error {
    using Error::Error;
};

// Map is identically zero and cannot be normalized.
struct DegenerateMap : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

// Signed distance maps passed to an operation that requires both
// normalized (or both raw) disagree on the flag.
struct NormalizationMismatch : Error {
    using Error::Error;
};

struct InvalidDescriptor : Error {
    using Error::Error;
};

struct InvalidShape : Error {
    using Error::Error;
};

struct CropTooLarge : Error {
    using Error::Error;
};

struct EmptyPartition : Error {
    using Error::Error;
};

struct InvalidConfig : Error {
    using Error::Error;
};

struct IOFailure : Error {
    using Error::Error;
};

struct MissingCheckpoint : Error {
    using Error::Error;
};

// Non-finite loss or parameter encountered during training.
struct FatalDivergence : Error {
    using Error::Error;
};

}  // namespace dtml
