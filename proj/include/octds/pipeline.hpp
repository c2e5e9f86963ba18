#pragma once

#include "octds/config.hpp"
#include "octds/segmetrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace octds {

// Stage layout under the output directory:
//   raw/            OCTV pullback from the simulator
//   ground_truth/   surface_depth.pgm, pattern_mask.pgm, sine_params.json
//   undistorted/    OCTV of unwarped slices + fits.json
//   surface/        SurfaceMap files
//   volume/         OCTV hollow cylinder
//   endo/           panorama.pgm, reflectivity.pgm, pattern_mask.pgm, endo.json
//   segment/        mask.pgm, segment.json
//   compare/        metrics.json, difference.pgm, difference_legend.json
// Every stage writes only its own directory and reads only files, so any
// stage can be rerun on its own.

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

/// Level from OCTDS_LOG (debug|info|warn|error|off); info if unset.
LogLevel log_level();

/// One JSON object per line on stderr when `level` passes the filter.
void log_event(LogLevel level, const nlohmann::json& event);

/// Error that remembers which stage raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.kind(), cause.what()), stage_(std::move(stage))
    {
    }
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// RANSAC seed of slice `slice` under cfg.seed.
std::uint64_t ransac_seed(const PipelineConfig& cfg, std::size_t slice);

/// Border fit of one raw slice as the undistort stage does it: enhance,
/// binarize in the resolved band, RANSAC sine. A rejected fit is returned
/// with rejected = true; no candidates falls back to a flat border mid-band.
FitReport fit_slice(const PipelineConfig& cfg, const BScanPolar& raw, std::size_t slice);

void run_simulate(const PipelineConfig& cfg, const std::filesystem::path& out);

void run_undistort(const PipelineConfig& cfg, const std::filesystem::path& raw_dir,
                   const std::filesystem::path& out_dir);

void run_surface(const PipelineConfig& cfg, const std::filesystem::path& undistorted_dir,
                 const std::filesystem::path& out_dir);

void run_volume(const PipelineConfig& cfg, const std::filesystem::path& raw_dir,
                const std::filesystem::path& fits_path, const std::filesystem::path& out_dir);

/// Simulated endoscope pullback, unrolled and stitched, with the matching
/// ground-truth reflectivity. Returns the normalized cross-correlation.
double run_endostitch(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// `input` is a surface directory or an 8-bit panorama PGM.
void run_segment(const PipelineConfig& cfg, const std::filesystem::path& input, const std::filesystem::path& out_dir);

MetricsReport run_compare(const std::filesystem::path& mask_a, const std::filesystem::path& mask_b,
                          const std::filesystem::path& out_dir);

/// simulate -> undistort -> surface -> segment -> compare under `out`.
MetricsReport run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out);

}  // namespace octds
