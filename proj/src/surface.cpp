#include "octds/surface.hpp"

#include <algorithm>
#include <cmath>

namespace octds {

BScanPolar crop_below_border(const BScanPolar& slice, int border_row, int margin)
{
    const Eigen::Index depth = slice.depth_samples();
    const Eigen::Index start = static_cast<Eigen::Index>(border_row) + margin;
    if (start < 0 || start >= depth)
        throw Error(ErrorKind::range, "crop start row " + std::to_string(start) + " outside [0, " +
                                          std::to_string(depth) + ")");
    return {slice.intensity.rightCols(depth - start), slice.axial_position};
}

DepthSignal extract_depth(const BScanPolar& cropped, double min_peak)
{
    const Eigen::Index columns = cropped.columns();
    DepthSignal sig;
    sig.depth.resize(columns);
    sig.intensity.resize(columns);
    sig.valid.resize(columns);
    for (Eigen::Index u = 0; u < columns; ++u) {
        Eigen::Index row = 0;
        // maxCoeff returns the first maximum, i.e. the row nearest the surface.
        const std::uint16_t peak = cropped.intensity.row(u).maxCoeff(&row);
        sig.depth[u] = static_cast<double>(row);
        sig.intensity[u] = peak;
        sig.valid[u] = peak > 0 && static_cast<double>(peak) >= min_peak;
    }
    return sig;
}

double default_min_peak(const BScanPolar& cropped)
{
    const Eigen::ArrayXXd values = cropped.intensity.cast<double>();
    const double mean = values.mean();
    const double var = (values - mean).square().mean();
    return mean + 2.0 * std::sqrt(var);
}

DepthSignal surface_signal(const BScanPolar& unwarped, const SineModel& fit, int margin,
                           std::optional<double> min_peak)
{
    const int border = static_cast<int>(std::lround(fit.offset));
    const BScanPolar cropped = crop_below_border(unwarped, border, margin);
    DepthSignal sig = extract_depth(cropped, min_peak.value_or(default_min_peak(cropped)));
    sig.depth += static_cast<double>(border + margin) - fit.offset;
    return sig;
}

SurfaceMap stack_surface(std::span<const DepthSignal> signals)
{
    if (signals.empty())
        throw Error(ErrorKind::validation, "stack_surface: no slices");
    const Eigen::Index columns = signals.front().depth.size();
    if (columns == 0)
        throw Error(ErrorKind::validation, "stack_surface: empty signal");

    SurfaceMap map;
    const auto rows = static_cast<Eigen::Index>(signals.size());
    map.depth.resize(rows, columns);
    map.intensity.resize(rows, columns);
    map.valid.resize(rows, columns);
    for (Eigen::Index s = 0; s < rows; ++s) {
        const DepthSignal& sig = signals[static_cast<std::size_t>(s)];
        if (sig.depth.size() != columns || sig.intensity.size() != columns || sig.valid.size() != columns)
            throw Error(ErrorKind::validation, "stack_surface: slice " + std::to_string(s) + " has width " +
                                                   std::to_string(sig.depth.size()) + ", expected " +
                                                   std::to_string(columns));
        map.depth.row(s) = sig.depth.transpose();
        map.intensity.row(s) = sig.intensity.transpose();
        map.valid.row(s) = sig.valid.transpose();

        std::vector<Eigen::Index> good;
        for (Eigen::Index u = 0; u < columns; ++u)
            if (sig.valid[u])
                good.push_back(u);
        if (good.empty() || static_cast<Eigen::Index>(good.size()) == columns)
            continue;

        // Cyclic linear interpolation between consecutive valid columns.
        for (std::size_t k = 0; k < good.size(); ++k) {
            const Eigen::Index a = good[k];
            const Eigen::Index b = good[(k + 1) % good.size()];
            const Eigen::Index gap = (b - a + columns) % columns == 0 ? columns : (b - a + columns) % columns;
            for (Eigen::Index step = 1; step < gap; ++step) {
                const Eigen::Index u = (a + step) % columns;
                const double t = static_cast<double>(step) / static_cast<double>(gap);
                map.depth(s, u) = (1.0 - t) * sig.depth[a] + t * sig.depth[b];
                map.intensity(s, u) = saturate_cast<std::uint16_t>((1.0 - t) * sig.intensity[a] +
                                                                   t * sig.intensity[b]);
            }
        }
    }
    return map;
}

Eigen::Vector3d HollowCylinderVolume::cylindrical(std::size_t s, Eigen::Index u, Eigen::Index v) const
{
    const double columns = static_cast<double>(voxels.columns());
    return {voxels.slices[s].axial_position, 2.0 * M_PI * static_cast<double>(u) / columns,
            border_radius + (first_row_depth[s] + static_cast<double>(v)) * voxels.depth_resolution};
}

HollowCylinderVolume build_volume(const VolumeStack& stack, std::span<const FitReport> fits, int margin,
                                  double border_radius, bool allow_rejected)
{
    stack.validate();
    if (fits.size() != stack.slices.size())
        throw Error(ErrorKind::validation, "build_volume: " + std::to_string(fits.size()) + " fits for " +
                                               std::to_string(stack.slices.size()) + " slices");
    if (!allow_rejected) {
        std::string bad;
        for (std::size_t s = 0; s < fits.size(); ++s)
            if (fits[s].rejected)
                bad += (bad.empty() ? "" : ", ") + std::to_string(s);
        if (!bad.empty())
            throw Error(ErrorKind::fit_rejected, "build_volume: rejected fits in slices " + bad);
    }

    const Eigen::Index depth = stack.depth_samples();
    std::vector<Eigen::Index> starts(fits.size());
    Eigen::Index rows = depth;
    for (std::size_t s = 0; s < fits.size(); ++s) {
        starts[s] = std::lround(fits[s].model.offset) + margin;
        if (starts[s] < 0 || starts[s] >= depth)
            throw Error(ErrorKind::range, "build_volume: crop start outside slice " + std::to_string(s));
        rows = std::min(rows, depth - starts[s]);
    }

    HollowCylinderVolume vol;
    vol.border_radius = border_radius;
    vol.voxels.pullback_step = stack.pullback_step;
    vol.voxels.depth_resolution = stack.depth_resolution;
    for (std::size_t s = 0; s < fits.size(); ++s) {
        const BScanPolar flat = unwarp(stack.slices[s], fits[s].model);
        vol.voxels.slices.push_back({flat.intensity.middleCols(starts[s], rows), flat.axial_position});
        vol.first_row_depth.push_back(static_cast<double>(starts[s]) - fits[s].model.offset);
    }
    return vol;
}

void write_volume(const HollowCylinderVolume& volume, const std::filesystem::path& dir)
{
    nlohmann::json mapping = {
        {"theta_rad_per_column", 2.0 * M_PI / static_cast<double>(volume.voxels.columns())},
        {"border_radius_um", volume.border_radius},
        {"r_um", "border_radius_um + (first_row_depth[s] + v) * depth_resolution_um"},
        {"first_row_depth", volume.first_row_depth},
    };
    write_stack(volume.voxels, dir, {{"kind", "hollow_cylinder"}, {"cylindrical_mapping", mapping}});
}

}  // namespace octds
