#pragma once

#include "octds/image.hpp"
#include "octds/raw_io.hpp"
#include "octds/surface_map.hpp"
#include "octds/undistort.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace octds {

/// Rows [border_row + margin, depth) of the slice. Throws ErrorKind::range
/// when nothing would remain.
BScanPolar crop_below_border(const BScanPolar& slice, int border_row, int margin);

/// One MIP row: per angle column the argmax depth row, its value, and
/// whether the peak cleared min_peak.
struct DepthSignal {
    Eigen::ArrayXd depth;
    Eigen::Array<std::uint16_t, Eigen::Dynamic, 1> intensity;
    Eigen::Array<bool, Eigen::Dynamic, 1> valid;
};

/// Maximum intensity projection along depth. Ties resolve to the smaller
/// row; columns whose peak is below min_peak are marked invalid.
DepthSignal extract_depth(const BScanPolar& cropped, double min_peak);

/// mean + 2 sigma of the slice intensities.
double default_min_peak(const BScanPolar& cropped);

/// Unwarped slice -> depth below the fitted border. Crops at
/// round(D) + margin and shifts the MIP rows back by (crop start - D).
DepthSignal surface_signal(const BScanPolar& unwarped, const SineModel& fit, int margin,
                           std::optional<double> min_peak = std::nullopt);

/// Row s of the map is signal s. Invalid columns are filled by linear
/// interpolation along the (cyclic) angle axis and keep valid = false.
SurfaceMap stack_surface(std::span<const DepthSignal> signals);

/// Dense hollow cylinder: every slice unwarped, cropped at its own border
/// and truncated to the common row count.
struct HollowCylinderVolume {
    VolumeStack voxels;                   // [slice][angle x depth]
    std::vector<double> first_row_depth;  // samples below the border at voxel row 0
    double border_radius = 0.0;           // µm, radius of the fitted border (0 if unknown)

    /// Cylindrical coordinates (z, theta, r) of voxel (s, u, v).
    Eigen::Vector3d cylindrical(std::size_t s, Eigen::Index u, Eigen::Index v) const;
};

/// Throws ErrorKind::fit_rejected listing the offending slices when a fit is
/// rejected and allow_rejected is false.
HollowCylinderVolume build_volume(const VolumeStack& stack, std::span<const FitReport> fits, int margin,
                                  double border_radius = 0.0, bool allow_rejected = false);

void write_volume(const HollowCylinderVolume& volume, const std::filesystem::path& dir);

}  // namespace octds
