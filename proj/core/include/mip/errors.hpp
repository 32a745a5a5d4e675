#pragma once

#include <stdexcept>

namespace mip {

// Malformed file contents: bad magic, truncated record, unparsable text.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Well-formed data that violates a config/model invariant (shape mismatch,
// non-finite entry, non-positive dimension).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A patch, probe or scrub request not covered by the supplied cache/fit.
struct CoverageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Layer/head/position/window arguments out of range.
struct BoundsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Degenerate input data (empty dataset, single-class labels).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mip
