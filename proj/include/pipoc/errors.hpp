#pragma once

#include <stdexcept>
#include <string>

namespace pipoc {

/// Base class for every failure this library reports.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File unreadable, unparsable, or not writable.
struct IoError : Error {
    using Error::Error;
};

/// Input file exists but has the wrong shape (multi-channel, bad magic, bad depth).
struct FormatError : Error {
    using Error::Error;
};

/// No pixel spacing available: no sidecar and no override.
struct MissingSpacingError : Error {
    using Error::Error;
};

/// Geometry falls outside the source image or violates a size constraint.
struct BoundsError : Error {
    using Error::Error;
};

/// Constant image where contrast is required (binarization, correlation).
struct ConstantImageError : Error {
    using Error::Error;
};

/// Correlation peak sits on the 2-pixel border frame; no 5x5 support.
struct PeakOnBorderError : Error {
    using Error::Error;
};

/// Region mask empty or below the minimum area fraction.
struct MaskError : Error {
    using Error::Error;
};

/// Integer pre-alignment never produced a trustworthy peak.
struct CalibrationError : Error {
    using Error::Error;
};

/// Silhouette analysis failed (component count, degenerate contour, overlap).
struct DetectionError : Error {
    using Error::Error;
};

/// Invalid parameter value (non-positive spacing, odd window size, bad range).
struct ParamError : Error {
    using Error::Error;
};

} // namespace pipoc
