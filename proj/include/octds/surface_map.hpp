#pragma once

#include "octds/image.hpp"

namespace octds {

/// Unrolled drill-hole surface over (slice s, angle column u).
///
/// `depth` holds the distance below the fitted capillary border in depth
/// samples (sub-sample where interpolated), `intensity` the MIP value and
/// `valid` is false wherever depth was interpolated or is undefined.
struct SurfaceMap {
    ImageD depth;
    Image16 intensity;
    Mask valid;
    double depth_resolution = 0.0;  // µm per sample
    double pullback_step = 0.0;     // µm per slice

    Eigen::Index slices() const { return depth.rows(); }
    Eigen::Index columns() const { return depth.cols(); }
};

}  // namespace octds
