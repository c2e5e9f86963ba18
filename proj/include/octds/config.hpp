#pragma once

#include "octds/enhance.hpp"
#include "octds/phantom.hpp"
#include "octds/segmetrics.hpp"
#include "octds/undistort.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace octds {

struct RandomPocketSpec {
    int spheres = 0;
    int cylinders = 0;
    double max_breach = 800.0;  // µm
};

struct SurfaceParams {
    int crop_margin = 8;
    std::optional<double> min_peak;  // unset: mean + 2 sigma per slice
};

struct SegmentParams {
    Channel channel = Channel::depth;
    Polarity intensity_polarity = Polarity::bright;
    Polarity endo_polarity = Polarity::dark;
};

/// Every stage's settings. Lengths in µm, angles in radians.
struct PipelineConfig {
    PhantomModel phantom;
    RandomPocketSpec random_pockets;
    AcquisitionConfig acquisition;
    EndoConfig endoscope;
    int endoscope_columns = 512;
    EnhanceParams enhance;
    BinarizeParams binarize;
    bool auto_band = true;
    double max_expected_eccentricity = 0.0;  // 0 selects 20 % of the hole radius
    RansacParams ransac;
    SurfaceParams surface;
    SegmentParams segment;
    bool allow_rejected_fits = false;
    std::string output = "out";
    std::uint64_t seed = 7;
    unsigned parallel = 1;
};

/// Desk-scale defaults: 1024 A-scans x 512 samples x 40 slices.
PipelineConfig desk_config();

/// 91 kHz / 390 rpm, 200 µm steps over 30 mm: 14 000 x 512 x 150, with
/// speckle 0.15, NURD 0.01 rad and 15 % eccentricity.
PipelineConfig full_scale_config();

/// Parses a config document over the desk defaults. Unknown keys and type
/// mismatches raise ErrorKind::configuration naming the dotted field path.
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);

/// The document config_from_json would read back. `output` and `parallel`
/// are omitted when `for_output_tree` is set so that the echoed config
/// never depends on where or how the run happened.
nlohmann::json to_json(const PipelineConfig& cfg, bool for_output_tree = false);

/// Phantom with configured random pockets appended (seeded by rng_seed).
PhantomModel resolved_phantom(const PipelineConfig& cfg);

/// Binarization parameters with the border band filled in when auto_band
/// is set: the concentric border row +- (max expected eccentricity + 3 rows).
BinarizeParams resolved_binarize(const PipelineConfig& cfg);

}  // namespace octds
