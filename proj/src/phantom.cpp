#include "octds/phantom.hpp"
#include "octds/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace octds {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void invalid(const std::string& field, const std::string& why)
{
    throw Error(ErrorKind::validation, field + ": " + why);
}

struct Interval {
    double lo = kInf;
    double hi = -kInf;
    bool empty() const { return !(lo < hi); }
};

/// Ray o + t d (t real) against a solid sphere.
Interval intersect_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Pocket& p)
{
    const Eigen::Vector3d w = o - p.center;
    const double b = w.dot(d);
    const double c = w.squaredNorm() - p.radius * p.radius;
    const double disc = b * b - c;
    if (disc <= 0.0)
        return {};
    const double s = std::sqrt(disc);
    return {-b - s, -b + s};
}

/// Ray against a solid cylinder, optionally capped at +-length/2 along its axis.
Interval intersect_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Pocket& p)
{
    const Eigen::Vector3d& a = p.direction;
    const Eigen::Vector3d w = o - p.center;
    const Eigen::Vector3d d_perp = d - d.dot(a) * a;
    const Eigen::Vector3d w_perp = w - w.dot(a) * a;
    const double qa = d_perp.squaredNorm();
    const double qb = 2.0 * d_perp.dot(w_perp);
    const double qc = w_perp.squaredNorm() - p.radius * p.radius;

    Interval iv;
    if (qa < 1e-15) {
        if (qc >= 0.0)
            return {};
        iv = {-kInf, kInf};
    } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc <= 0.0)
            return {};
        const double s = std::sqrt(disc);
        iv = {(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)};
    }

    if (p.length > 0.0) {
        const double half = 0.5 * p.length;
        const double along = w.dot(a);
        const double rate = d.dot(a);
        if (std::abs(rate) < 1e-15) {
            if (std::abs(along) > half)
                return {};
        } else {
            double t0 = (-half - along) / rate;
            double t1 = (half - along) / rate;
            if (t0 > t1)
                std::swap(t0, t1);
            iv.lo = std::max(iv.lo, t0);
            iv.hi = std::min(iv.hi, t1);
        }
    }
    return iv;
}

}  // namespace

void PhantomModel::validate() const
{
    if (!(hole_radius > 0.0))
        invalid("hole_radius", "must be positive");
    if (!(hole_length > 0.0))
        invalid("hole_length", "must be positive");
    if (!(outer_radius > hole_radius))
        invalid("outer_radius", "must exceed hole_radius");
    if (!(scatter_base >= 0.0 && scatter_base <= 1.0))
        invalid("scatter_base", "must lie in [0, 1]");
    if (!(pocket_reflectivity >= 0.0 && pocket_reflectivity <= 1.0))
        invalid("pocket_reflectivity", "must lie in [0, 1]");
    for (std::size_t i = 0; i < pockets.size(); ++i) {
        const std::string field = "pockets[" + std::to_string(i) + "]";
        if (!(pockets[i].radius > 0.0))
            invalid(field + ".radius", "must be positive");
        if (pockets[i].kind == Pocket::Kind::cylinder) {
            if (std::abs(pockets[i].direction.norm() - 1.0) > 1e-9)
                invalid(field + ".direction", "must have unit norm");
            if (pockets[i].length < 0.0)
                invalid(field + ".length", "must be non-negative");
        }
    }
}

std::vector<Pocket> random_pockets(const PhantomModel& model, int spheres, int cylinders, double max_breach,
                                   std::uint64_t seed)
{
    std::mt19937_64 rng(mix_seed(seed, 0xb0c4e7));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double R = model.hole_radius;
    const double L = model.hole_length;
    std::vector<Pocket> out;

    for (int i = 0; i < spheres; ++i) {
        Pocket p;
        p.kind = Pocket::Kind::sphere;
        p.radius = std::min((0.2 + 0.2 * unit(rng)) * R, max_breach / 1.6);
        const double rho = R + (-0.3 + 0.9 * unit(rng)) * p.radius;
        const double theta = 2.0 * M_PI * unit(rng);
        const double z = L * (0.05 + 0.9 * unit(rng));
        p.center = {rho * std::cos(theta), rho * std::sin(theta), z};
        out.push_back(p);
    }
    for (int i = 0; i < cylinders; ++i) {
        Pocket p;
        p.kind = Pocket::Kind::cylinder;
        p.radius = std::min((0.08 + 0.07 * unit(rng)) * R, max_breach / 1.5);
        const double rho = R + 0.5 * unit(rng) * p.radius;
        const double theta = 2.0 * M_PI * unit(rng);
        const double z = L * (0.1 + 0.8 * unit(rng));
        const double tilt = M_PI * unit(rng);
        const Eigen::Vector3d tangent(-std::sin(theta), std::cos(theta), 0.0);
        p.center = {rho * std::cos(theta), rho * std::sin(theta), z};
        p.direction = (std::cos(tilt) * Eigen::Vector3d::UnitZ() + std::sin(tilt) * tangent).normalized();
        p.length = L * (0.15 + 0.25 * unit(rng));
        out.push_back(p);
    }
    return out;
}

PhantomGeometry::PhantomGeometry(PhantomModel model) : model_(std::move(model))
{
    model_.validate();
}

double PhantomGeometry::wall_radius(double z, double theta) const
{
    const Eigen::Vector3d o(0.0, 0.0, z);
    const Eigen::Vector3d d(std::cos(theta), std::sin(theta), 0.0);

    std::vector<Interval> hits;
    hits.reserve(model_.pockets.size());
    for (const Pocket& p : model_.pockets) {
        const Interval iv =
            p.kind == Pocket::Kind::sphere ? intersect_sphere(o, d, p) : intersect_cylinder(o, d, p);
        if (!iv.empty() && iv.hi > model_.hole_radius)
            hits.push_back(iv);
    }

    // Walk outward through the union of pocket intervals containing r.
    double r = model_.hole_radius;
    for (bool moved = true; moved;) {
        moved = false;
        for (const Interval& iv : hits) {
            if (iv.lo <= r && r < iv.hi) {
                r = iv.hi;
                moved = true;
            }
        }
    }
    return std::min(r, model_.outer_radius);
}

double PhantomGeometry::reflectivity(double z, double theta) const
{
    return wall_radius(z, theta) > model_.hole_radius ? model_.pocket_reflectivity : model_.scatter_base;
}

PhantomGeometry build_phantom(const PhantomModel& model)
{
    return PhantomGeometry(model);
}

// --- acquisition ----------------------------------------------------------

void NoiseConfig::validate() const
{
    if (!(speckle_sigma >= 0.0))
        invalid("noise.speckle_sigma", "must be non-negative");
    if (!(nurd_amplitude >= 0.0))
        invalid("noise.nurd_amplitude", "must be non-negative");
    if (!(nurd_correlation > 0.0))
        invalid("noise.nurd_correlation", "must be positive");
    if (!(background_level >= 0.0 && background_level < 1.0))
        invalid("noise.background_level", "must lie in [0, 1)");
}

int AcquisitionConfig::a_scans_per_rotation() const
{
    return static_cast<int>(std::lround(a_scan_rate / rotation_rate));
}

int AcquisitionConfig::slice_count() const
{
    return static_cast<int>(std::floor(pullback_length / pullback_step + 1e-9));
}

void AcquisitionConfig::validate() const
{
    if (!(a_scan_rate > 0.0))
        invalid("a_scan_rate", "must be positive");
    if (!(rotation_rate > 0.0))
        invalid("rotation_rate", "must be positive");
    if (!(pullback_step > 0.0))
        invalid("pullback_step", "must be positive");
    if (!(pullback_length > 0.0))
        invalid("pullback_length", "must be positive");
    if (a_scans_per_rotation() < 8)
        invalid("a_scan_rate", "yields fewer than 8 A-scans per rotation");
    if (slice_count() < 1)
        invalid("pullback_length", "shorter than one pullback step");
    if (depth_samples < 16)
        invalid("depth_samples", "must be at least 16");
    if (!(depth_resolution > 0.0))
        invalid("depth_resolution", "must be positive");
    if (!(eccentricity_amplitude >= 0.0))
        invalid("eccentricity_amplitude", "must be non-negative");
    if (!(catheter_radius > 0.0))
        invalid("catheter_radius", "must be positive");
    if (!(glass_thickness > 0.0))
        invalid("glass_thickness", "must be positive");
    if (!(capillary_outer_radius > glass_thickness))
        invalid("capillary_outer_radius", "must exceed glass_thickness");
    if (!(glass_group_index >= 1.0))
        invalid("glass_group_index", "must be at least 1");
    if (!(psf_sigma > 0.0))
        invalid("psf_sigma", "must be positive");
    if (!(subsurface_decay > 0.0))
        invalid("subsurface_decay", "must be positive");
    if (!(gain > 0.0))
        invalid("gain", "must be positive");
    noise.validate();
}

double border_optical_radius(const AcquisitionConfig& cfg)
{
    return cfg.capillary_outer_radius + (cfg.glass_group_index - 1.0) * cfg.glass_thickness;
}

double wall_depth_below_border(const AcquisitionConfig& cfg, double wall_radius)
{
    return (wall_radius - cfg.capillary_outer_radius) / cfg.depth_resolution;
}

namespace {

struct SliceGeometry {
    double eccentricity = 0.0;
    double phase = 0.0;
};

SliceGeometry slice_geometry(const AcquisitionConfig& cfg, int s)
{
    return {cfg.eccentricity_amplitude + cfg.eccentricity_drift * s,
            cfg.eccentricity_phase + cfg.eccentricity_phase_drift * s};
}

SineModel truth_sine(const AcquisitionConfig& cfg, const SliceGeometry& g)
{
    // Border row = D - (e / res) cos(theta - alpha) = D + (e / res) sin(theta - alpha - pi/2).
    SineModel m;
    m.amplitude = std::abs(g.eccentricity) / cfg.depth_resolution;
    m.omega = 2.0 * M_PI / cfg.a_scans_per_rotation();
    m.phase = wrap_angle(-g.phase - M_PI / 2.0 + (g.eccentricity < 0.0 ? M_PI : 0.0));
    m.offset = border_optical_radius(cfg) / cfg.depth_resolution;
    return m;
}

void check_fit(const PhantomGeometry& geom, const AcquisitionConfig& cfg)
{
    cfg.validate();
    const PhantomModel& model = geom.model();
    const double inner = cfg.capillary_outer_radius - cfg.glass_thickness;
    if (!(cfg.capillary_outer_radius < model.hole_radius))
        throw Error(ErrorKind::configuration, "capillary_outer_radius must be smaller than hole_radius");
    if (cfg.pullback_length > model.hole_length + 1e-9)
        throw Error(ErrorKind::configuration, "pullback_length exceeds hole_length");
    for (int s = 0; s < cfg.slice_count(); ++s) {
        const double e = std::abs(slice_geometry(cfg, s).eccentricity);
        if (!(e < model.hole_radius))
            throw Error(ErrorKind::configuration, "eccentricity must be smaller than hole_radius");
        if (!(e + cfg.catheter_radius < inner))
            throw Error(ErrorKind::configuration,
                        "catheter does not fit: eccentricity + catheter_radius must stay inside the capillary "
                        "(slice " + std::to_string(s) + ")");
    }
}

/// Smooth angular jitter: circularly Gaussian-filtered white noise with unit
/// variance, scaled by the NURD amplitude.
std::vector<double> nurd_jitter(const NoiseConfig& noise, int columns, std::mt19937_64& rng)
{
    std::vector<double> jitter(static_cast<std::size_t>(columns), 0.0);
    if (noise.nurd_amplitude <= 0.0)
        return jitter;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> white(jitter.size());
    for (double& w : white)
        w = gauss(rng);
    const int half = static_cast<int>(std::ceil(4.0 * noise.nurd_correlation));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    double norm = 0.0;
    for (int k = -half; k <= half; ++k) {
        const double x = k / noise.nurd_correlation;
        kernel[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * x * x);
        norm += kernel[static_cast<std::size_t>(k + half)] * kernel[static_cast<std::size_t>(k + half)];
    }
    norm = std::sqrt(norm);
    for (int u = 0; u < columns; ++u) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) {
            int idx = (u + k) % columns;
            if (idx < 0)
                idx += columns;
            acc += kernel[static_cast<std::size_t>(k + half)] * white[static_cast<std::size_t>(idx)];
        }
        jitter[static_cast<std::size_t>(u)] = noise.nurd_amplitude * acc / norm;
    }
    return jitter;
}

void add_peak(std::vector<double>& profile, double center, double amplitude, double sigma)
{
    if (amplitude == 0.0)
        return;
    const int n = static_cast<int>(profile.size());
    const int lo = std::max(0, static_cast<int>(std::floor(center - 6.0 * sigma)));
    const int hi = std::min(n - 1, static_cast<int>(std::ceil(center + 6.0 * sigma)));
    for (int v = lo; v <= hi; ++v) {
        const double x = (v - center) / sigma;
        profile[static_cast<std::size_t>(v)] += amplitude * std::exp(-0.5 * x * x);
    }
}

}  // namespace

BScanPolar simulate_slice(const PhantomGeometry& geom, const AcquisitionConfig& cfg, std::uint64_t seed, int slice,
                          SineModel* truth)
{
    const int columns = cfg.a_scans_per_rotation();
    const int depth = cfg.depth_samples;
    const double res = cfg.depth_resolution;
    const double z = cfg.axial_position(slice);
    const SliceGeometry g = slice_geometry(cfg, slice);
    const double glass_shift = (cfg.glass_group_index - 1.0) * cfg.glass_thickness;
    const double inner_radius = cfg.capillary_outer_radius - cfg.glass_thickness;

    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(slice)));
    const std::vector<double> jitter = nurd_jitter(cfg.noise, columns, rng);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double speckle = cfg.noise.speckle_sigma;

    BScanPolar out;
    out.axial_position = z;
    out.intensity.resize(columns, depth);
    std::vector<double> profile(static_cast<std::size_t>(depth));

    for (int u = 0; u < columns; ++u) {
        const double theta = 2.0 * M_PI * u / columns + jitter[static_cast<std::size_t>(u)];
        // First-order rigid offset: the catheter displacement projected onto the ray.
        const double offset = g.eccentricity * std::cos(theta - g.phase);
        const double wall = geom.wall_radius(z, theta);

        std::fill(profile.begin(), profile.end(), cfg.noise.background_level);
        add_peak(profile, cfg.catheter_radius / res, cfg.sheath_amplitude, cfg.psf_sigma);
        add_peak(profile, (inner_radius - offset) / res, cfg.inner_glass_amplitude, cfg.psf_sigma);
        add_peak(profile, (cfg.capillary_outer_radius + glass_shift - offset) / res, cfg.outer_glass_amplitude,
                 cfg.psf_sigma);
        const double wall_row = (wall + glass_shift - offset) / res;
        add_peak(profile, wall_row, cfg.wall_amplitude, cfg.psf_sigma);
        for (int v = std::max(0, static_cast<int>(std::ceil(wall_row))); v < depth; ++v) {
            const double x = v - wall_row;
            profile[static_cast<std::size_t>(v)] +=
                cfg.wall_amplitude * cfg.subsurface_amplitude * std::exp(-x / cfg.subsurface_decay) *
                (1.0 - std::exp(-x / 3.0));
        }

        std::uint16_t* row = out.intensity.row(u).data();
        for (int v = 0; v < depth; ++v) {
            double value = profile[static_cast<std::size_t>(v)];
            if (speckle > 0.0)
                value *= std::max(0.0, 1.0 + speckle * gauss(rng));
            row[v] = saturate_cast<std::uint16_t>(value * cfg.gain);
        }
    }
    if (truth)
        *truth = truth_sine(cfg, g);
    return out;
}

GroundTruth simulate_ground_truth(const PhantomGeometry& geom, const AcquisitionConfig& cfg)
{
    check_fit(geom, cfg);
    const int slices = cfg.slice_count();
    const int columns = cfg.a_scans_per_rotation();
    const double limit = geom.model().hole_radius + cfg.depth_resolution;

    GroundTruth gt;
    gt.surface_depth.resize(slices, columns);
    for (int s = 0; s < slices; ++s) {
        const double z = cfg.axial_position(s);
        for (int u = 0; u < columns; ++u)
            gt.surface_depth(s, u) = geom.wall_radius(z, 2.0 * M_PI * u / columns);
        const SliceGeometry g = slice_geometry(cfg, s);
        gt.sine_params.push_back(truth_sine(cfg, g));
        gt.eccentricity.push_back(g.eccentricity);
        gt.eccentricity_phase.push_back(g.phase);
    }
    gt.pattern_mask = gt.surface_depth > limit;
    return gt;
}

SimulationResult simulate_oct(const PhantomGeometry& geom, const AcquisitionConfig& cfg, std::uint64_t seed,
                              unsigned threads)
{
    SimulationResult result;
    result.truth = simulate_ground_truth(geom, cfg);
    const int slices = cfg.slice_count();
    result.stack.pullback_step = cfg.pullback_step;
    result.stack.depth_resolution = cfg.depth_resolution;
    result.stack.slices.resize(static_cast<std::size_t>(slices));
    parallel_for(static_cast<std::size_t>(slices), threads, [&](std::size_t s) {
        result.stack.slices[s] = simulate_slice(geom, cfg, seed, static_cast<int>(s));
    });
    return result;
}

// --- endoscope ------------------------------------------------------------

std::vector<AnnulusFrame> simulate_endo_frames(const PhantomGeometry& geom, const EndoConfig& cfg, unsigned threads)
{
    if (!(cfg.feed_step > 0.0))
        throw Error(ErrorKind::configuration, "feed_step must be positive");
    if (cfg.frame_size < 64)
        throw Error(ErrorKind::configuration,
                    "frame_size " + std::to_string(cfg.frame_size) + " px is too small to resolve the annulus (< 64)");
    if (!(cfg.speckle_sigma >= 0.0))
        throw Error(ErrorKind::configuration, "speckle_sigma must be non-negative");

    const double length = geom.model().hole_length;
    const double view = cfg.view_length > 0.0 ? cfg.view_length : 2.0 * cfg.feed_step;
    const auto count = static_cast<std::size_t>(std::ceil(length / cfg.feed_step - 1e-9));
    const int size = cfg.frame_size;
    const double r_inner = std::floor(0.15 * size);
    const double r_outer = r_inner + 2.0 * std::floor((0.45 * size - r_inner) / 2.0);
    const double c = 0.5 * (size - 1);
    constexpr double pad = 2.0;  // rendered beyond the nominal ring so bilinear edges stay clean

    std::vector<AnnulusFrame> frames(count);
    parallel_for(count, threads, [&](std::size_t k) {
        AnnulusFrame& f = frames[k];
        f.center = {c, c};
        f.r_inner = r_inner;
        f.r_outer = r_outer;
        f.view_length = view;
        f.axial_position = std::min((static_cast<double>(k) + 0.5) * cfg.feed_step, length - 0.5 * cfg.feed_step);
        f.image = Image8::Zero(size, size);

        std::mt19937_64 rng(mix_seed(cfg.seed, 0x3d0000 + k));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double z0 = f.axial_position - 0.5 * view;
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double dx = x - c;
                const double dy = y - c;
                const double r = std::hypot(dx, dy);
                if (r < r_inner - pad || r > r_outer + pad)
                    continue;
                const double z = z0 + (r - r_inner) / (r_outer - r_inner) * view;
                double value = 255.0 * geom.reflectivity(z, std::atan2(dy, dx));
                if (cfg.speckle_sigma > 0.0)
                    value *= std::max(0.0, 1.0 + cfg.speckle_sigma * gauss(rng));
                f.image(y, x) = saturate_cast<std::uint8_t>(value);
            }
        }
    });
    return frames;
}

}  // namespace octds
