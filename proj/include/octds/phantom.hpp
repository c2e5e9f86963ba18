#pragma once

#include "octds/image.hpp"
#include "octds/raw_io.hpp"
#include "octds/sine_model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace octds {

// Coordinates: the drill hole axis is the z axis, the hole spans
// z in [0, hole_length]. Angles are measured in the x-y plane from +x.
// All lengths are µm, all angles radians.

struct Pocket {
    enum class Kind { sphere, cylinder };

    Kind kind = Kind::sphere;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();  // cylinder axis, unit norm
    double radius = 0.0;
    double length = 0.0;  // cylinder extent along its axis; 0 means unbounded
};

struct PhantomModel {
    double hole_radius = 1500.0;
    double hole_length = 8000.0;
    std::vector<Pocket> pockets;
    double scatter_base = 0.6;         // bone reflectivity seen by the endoscope
    double pocket_reflectivity = 0.15; // reflectivity inside a breached pocket
    double outer_radius = 4000.0;      // material never extends past this radius
    std::uint64_t rng_seed = 1;

    /// Throws ErrorKind::validation naming the offending field.
    void validate() const;
};

/// Seeded random air pockets that breach the hole wall. Spheres are centred
/// within [-0.3 r, +0.6 r] of the wall, cylinders run roughly tangentially
/// and graze it. Depth of every breach stays below `max_breach`.
std::vector<Pocket> random_pockets(const PhantomModel& model, int spheres, int cylinders,
                                   double max_breach, std::uint64_t seed);

/// Queryable phantom: ray casting from the hole axis.
class PhantomGeometry {
public:
    explicit PhantomGeometry(PhantomModel model);

    const PhantomModel& model() const { return model_; }

    /// Distance from the hole axis to the first material along the ray at
    /// axial position z and angle theta. Pocket breaches push it outward.
    double wall_radius(double z, double theta) const;

    /// Surface reflectivity as seen by the endoscope.
    double reflectivity(double z, double theta) const;

private:
    PhantomModel model_;
};

PhantomGeometry build_phantom(const PhantomModel& model);

struct NoiseConfig {
    double speckle_sigma = 0.0;
    double nurd_amplitude = 0.0;     // rad
    double nurd_correlation = 32.0;  // columns
    double background_level = 0.05;

    void validate() const;
};

/// Catheter pullback acquisition. Also carries the capillary and catheter
/// geometry: the catheter sits in a glass capillary concentric with the hole.
struct AcquisitionConfig {
    double a_scan_rate = 6656.0;  // Hz
    double rotation_rate = 6.5;   // rotations per second
    double pullback_step = 200.0;
    double pullback_length = 8000.0;
    int depth_samples = 512;
    double depth_resolution = 7.0;  // µm per sample

    double eccentricity_amplitude = 150.0;
    double eccentricity_phase = 0.0;
    double eccentricity_drift = 0.0;        // µm per slice
    double eccentricity_phase_drift = 0.02; // rad per slice

    double catheter_radius = 450.0;
    double capillary_outer_radius = 840.0;
    double glass_thickness = 80.0;
    double glass_group_index = 1.5;

    // A-scan reflectivities (relative units before gain).
    double sheath_amplitude = 0.5;
    double inner_glass_amplitude = 0.05;
    double outer_glass_amplitude = 1.0;
    double wall_amplitude = 0.6;
    double subsurface_amplitude = 0.3;
    double subsurface_decay = 15.0;  // samples
    double psf_sigma = 1.2;          // samples
    double gain = 40000.0;           // relative units to uint16 counts

    NoiseConfig noise;

    int a_scans_per_rotation() const;
    int slice_count() const;
    double axial_position(int slice) const { return (slice + 0.5) * pullback_step; }

    void validate() const;
};

struct GroundTruth {
    ImageD surface_depth;  // [slice x column], wall radius in µm
    Mask pattern_mask;     // true where an air pocket breaches the wall
    std::vector<SineModel> sine_params;
    std::vector<double> eccentricity;        // µm, per slice
    std::vector<double> eccentricity_phase;  // rad, per slice
};

/// Optical depth (µm from the rotation axis) of the outer capillary border
/// for a concentric catheter; the fitted sine offset D equals this divided
/// by depth_resolution.
double border_optical_radius(const AcquisitionConfig& cfg);

/// Depth row of the wall echo when the wall lies at `wall_radius`, measured
/// below the outer capillary border. This is the quantity SurfaceMap::depth
/// estimates.
double wall_depth_below_border(const AcquisitionConfig& cfg, double wall_radius);

struct SimulationResult {
    VolumeStack stack;
    GroundTruth truth;
};

/// Renders every slice of the pullback. Per-slice RNG streams derive from
/// (seed, slice index), so `threads` never changes the output.
SimulationResult simulate_oct(const PhantomGeometry& geom, const AcquisitionConfig& cfg, std::uint64_t seed,
                              unsigned threads = 1);

/// Renders a single slice at index `slice`; identical to the corresponding
/// slice of simulate_oct.
BScanPolar simulate_slice(const PhantomGeometry& geom, const AcquisitionConfig& cfg, std::uint64_t seed, int slice,
                          SineModel* truth_sine = nullptr);

/// Ground-truth depth and mask only, without rendering intensities.
GroundTruth simulate_ground_truth(const PhantomGeometry& geom, const AcquisitionConfig& cfg);

// --- endoscope ------------------------------------------------------------

/// Cone-mirror endoscope frame: the wall appears as an annulus, radius in the
/// image maps linearly onto axial position across the frame's view window.
struct AnnulusFrame {
    Image8 image;
    Eigen::Vector2d center = Eigen::Vector2d::Zero();  // pixels (x, y)
    double r_inner = 0.0;
    double r_outer = 0.0;
    double axial_position = 0.0;  // µm, centre of the view window
    double view_length = 0.0;     // µm covered from r_inner to r_outer
};

struct EndoConfig {
    double feed_step = 500.0;  // µm between frames
    int frame_size = 256;      // pixels
    double view_length = 0.0;  // µm; 0 selects 2 * feed_step
    double speckle_sigma = 0.05;
    std::uint64_t seed = 1;
};

/// ceil(hole_length / feed_step) frames in feed order; the last frame is
/// clamped to the hole end.
std::vector<AnnulusFrame> simulate_endo_frames(const PhantomGeometry& geom, const EndoConfig& cfg,
                                               unsigned threads = 1);

}  // namespace octds
