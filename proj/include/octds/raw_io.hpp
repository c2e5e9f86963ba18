#pragma once

#include "octds/image.hpp"
#include "octds/surface_map.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace octds {

/// One catheter rotation. intensity(u, v): u = angle column, v = depth sample.
struct BScanPolar {
    Image16 intensity;
    double axial_position = 0.0;  // µm along the pullback

    Eigen::Index columns() const { return intensity.rows(); }
    Eigen::Index depth_samples() const { return intensity.cols(); }
};

/// Ordered pullback stack, slices in acquisition order.
struct VolumeStack {
    std::vector<BScanPolar> slices;
    double pullback_step = 0.0;     // µm
    double depth_resolution = 0.0;  // µm per sample

    Eigen::Index columns() const { return slices.empty() ? 0 : slices.front().columns(); }
    Eigen::Index depth_samples() const { return slices.empty() ? 0 : slices.front().depth_samples(); }

    /// Throws ErrorKind::validation on an empty stack or mismatched slice shapes.
    void validate() const;
};

// --- OCTV container -------------------------------------------------------
//
// A directory holding meta.json plus one raw little-endian uint16 file per
// slice (row-major, rows = angle columns, columns = depth samples). meta.json
// alone determines every array shape.

/// Writes `stack` into `dir` (created if needed). Keys of `extra` are merged
/// into meta.json at top level; reserved keys are overwritten.
void write_stack(const VolumeStack& stack, const std::filesystem::path& dir,
                 const nlohmann::json& extra = nlohmann::json::object());

VolumeStack read_stack(const std::filesystem::path& dir);

nlohmann::json read_stack_meta(const std::filesystem::path& dir);

// --- PGM ------------------------------------------------------------------

/// Binary PGM (P5). 16-bit samples use the Netpbm byte order (most
/// significant byte first), maxval 65535.
void write_pgm16(const std::filesystem::path& path, const Image16& image);
void write_pgm8(const std::filesystem::path& path, const Image8& image);

struct PgmImage {
    Image16 pixels;
    int maxval = 0;
};

PgmImage read_pgm(const std::filesystem::path& path);

/// Mask as 8-bit PGM, 0 / 255.
void write_mask(const std::filesystem::path& path, const Mask& mask);
Mask read_mask(const std::filesystem::path& path);

/// Writes depth.pgm (16-bit, rounded samples), intensity.pgm (8-bit, high
/// byte of the MIP value), valid.pgm (0/255) and surface.json into `dir`.
/// Depth values outside [0, 65535] raise ErrorKind::range.
void write_surface_map(const SurfaceMap& map, const std::filesystem::path& dir);
SurfaceMap read_surface_map(const std::filesystem::path& dir);

/// Rounds depth to integer samples, rejecting values that do not fit 16 bits.
Image16 quantize_depth(const ImageD& depth);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace octds
