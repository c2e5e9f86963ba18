// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "octds/config.hpp"
#include "octds/endo.hpp"
#include "octds/parallel.hpp"
#include "octds/pipeline.hpp"
#include "octds/raw_io.hpp"
#include "octds/surface.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace octds;
namespace fs = std::filesystem;

namespace {

const fs::path source_dir = OCTDS_SOURCE_DIR;
const fs::path cli = OCTDS_CLI;

// Pinned tolerances.
constexpr double amplitude_tol = 2.0;  // samples
constexpr double offset_tol = 1.0;     // samples
constexpr double phase_tol = 0.05;     // rad
constexpr int recovery_needed = 95;    // of 100
constexpr double recovery_seconds = 30.0;
constexpr double outlier_share = 0.30;
constexpr double flatness_tol = 1.5;  // samples, std of the re-detected border
constexpr int flatness_window = 15;   // rows either side of the fitted offset
constexpr double clean_median_tol = 1.0;
constexpr double clean_max_tol = 2.0;
constexpr double speckle_median_tol = 4.0;
constexpr double clean_jaccard = 0.90;
constexpr double degraded_jaccard = 0.70;
constexpr double stack_seconds = 60.0;
constexpr int li_images = 50;
constexpr int jaccard_pairs = 100;
constexpr double ncc_min = 0.9;
constexpr int lsb_tol = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int id, const std::string& name, const std::function<Outcome()>& check)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass)
        ++failures;
    std::printf("%s %d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2)
        return *mid;
    return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

double stddev(const Eigen::ArrayXd& x)
{
    return std::sqrt((x - x.mean()).square().mean());
}

// --- 1 -------------------------------------------------------------------

Outcome geometry()
{
    const PipelineConfig built = full_scale_config();
    const PipelineConfig shipped = load_config(source_dir / "configs" / "full_scale.json");
    bool ok = true;
    for (const PipelineConfig* c : {&built, &shipped})
        ok = ok && c->acquisition.slice_count() == 150 && c->acquisition.a_scans_per_rotation() == 14000;
    return {ok, fmt("slices=%d a_scans=%d (file: %d x %d)", built.acquisition.slice_count(),
                    built.acquisition.a_scans_per_rotation(), shipped.acquisition.slice_count(),
                    shipped.acquisition.a_scans_per_rotation())};
}

// --- 2 and 3 -------------------------------------------------------------

struct RecoveredSlice {
    BScanPolar raw;
    SineModel truth;
    FitReport fit;
    bool within = false;
};

// 100 desk slices, eccentricity 5 % to 20 % of the hole radius, speckle 0.15.
// Border candidates come from the enhanced slice; uniform outliers are added
// until they make up 30 % of the point set.
std::vector<RecoveredSlice> recovery_run(double& elapsed)
{
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineConfig desk = desk_config();
    const PhantomGeometry geom = build_phantom(resolved_phantom(desk));
    const BinarizeParams bin = resolved_binarize(desk);
    std::vector<RecoveredSlice> out(100);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::mt19937_64 rng(mix_seed(2024, i));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        AcquisitionConfig a = desk.acquisition;
        a.noise.speckle_sigma = 0.15;
        a.eccentricity_amplitude = desk.phantom.hole_radius * (0.05 + 0.15 * unit(rng));
        a.eccentricity_phase = -M_PI + 2.0 * M_PI * unit(rng);
        a.eccentricity_drift = 0.0;
        const int slice = static_cast<int>(i) % a.slice_count();
        RecoveredSlice& r = out[i];
        r.raw = simulate_slice(geom, a, i, slice, &r.truth);

        std::vector<BorderPoint> pts = binarize_border(enhance(r.raw, desk.enhance), bin);
        const auto extra = static_cast<std::size_t>(
            std::ceil(outlier_share / (1.0 - outlier_share) * static_cast<double>(pts.size())));
        const double width = static_cast<double>(r.raw.columns());
        const double depth = static_cast<double>(r.raw.depth_samples());
        for (std::size_t k = 0; k < extra; ++k)
            pts.push_back({width * unit(rng), depth * unit(rng)});
        try {
            r.fit = fit_sine(pts, static_cast<int>(r.raw.columns()), desk.ransac, ransac_seed(desk, i));
        } catch (const FitRejected& e) {
            r.fit = e.report();
        }
        r.within = !r.fit.rejected && std::abs(r.fit.model.amplitude - r.truth.amplitude) <= amplitude_tol &&
                   std::abs(r.fit.model.offset - r.truth.offset) <= offset_tol &&
                   std::abs(wrap_angle(r.fit.model.phase - r.truth.phase)) <= phase_tol;
    }
    elapsed = seconds_since(t0);
    return out;
}

Outcome recovery(const std::vector<RecoveredSlice>& run, double elapsed)
{
    int good = 0;
    double worst_a = 0.0, worst_d = 0.0, worst_p = 0.0;
    for (const RecoveredSlice& r : run) {
        good += r.within;
        if (r.within)
            continue;
        worst_a = std::max(worst_a, std::abs(r.fit.model.amplitude - r.truth.amplitude));
        worst_d = std::max(worst_d, std::abs(r.fit.model.offset - r.truth.offset));
        worst_p = std::max(worst_p, std::abs(wrap_angle(r.fit.model.phase - r.truth.phase)));
    }
    return {good >= recovery_needed && elapsed < recovery_seconds,
            fmt("%d/100 within |dA|<=%.0f |dD|<=%.0f |dphi|<=%.2f, misses worst dA=%.2f dD=%.2f dphi=%.3f, %.1f s "
                "(limit %.0f s)",
                good, amplitude_tol, offset_tol, phase_tol, worst_a, worst_d, worst_p, elapsed, recovery_seconds)};
}

// Re-detected border: per column the argmax of the unwarped raw slice within
// the fitted offset +- window.
Outcome flatness(const std::vector<RecoveredSlice>& run)
{
    double worst = 0.0;
    int measured = 0;
    for (const RecoveredSlice& r : run) {
        if (r.fit.rejected)
            continue;
        const BScanPolar flat = unwarp(r.raw, r.fit.model);
        const auto centre = static_cast<Eigen::Index>(std::lround(r.fit.model.offset));
        const Eigen::Index lo = std::max<Eigen::Index>(0, centre - flatness_window);
        const Eigen::Index hi = std::min<Eigen::Index>(flat.depth_samples() - 1, centre + flatness_window);
        Eigen::ArrayXd rows(flat.columns());
        for (Eigen::Index u = 0; u < flat.columns(); ++u) {
            Eigen::Index v;
            flat.intensity.row(u).segment(lo, hi - lo + 1).maxCoeff(&v);
            rows(u) = static_cast<double>(lo + v);
        }
        worst = std::max(worst, stddev(rows));
        ++measured;
    }
    return {measured >= recovery_needed && worst <= flatness_tol,
            fmt("%d accepted fits, worst border std %.3f samples (limit %.1f)", measured, worst, flatness_tol)};
}

// --- 4 -------------------------------------------------------------------

struct DepthErrors {
    double median = 0.0;
    double max = 0.0;
    long columns = 0;
};

// Runs the undistort and surface stages in memory and compares every valid
// column with the simulator's wall depth below the border.
DepthErrors depth_errors(const PipelineConfig& cfg)
{
    const PhantomGeometry geom = build_phantom(resolved_phantom(cfg));
    const SimulationResult sim = simulate_oct(geom, cfg.acquisition, cfg.seed);
    std::vector<DepthSignal> signals(sim.stack.slices.size());
    for (std::size_t s = 0; s < signals.size(); ++s) {
        const FitReport fit = fit_slice(cfg, sim.stack.slices[s], s);
        signals[s] = surface_signal(unwarp(sim.stack.slices[s], fit.model), fit.model, cfg.surface.crop_margin,
                                    cfg.surface.min_peak);
    }
    const SurfaceMap map = stack_surface(signals);
    std::vector<double> err;
    for (Eigen::Index s = 0; s < map.slices(); ++s)
        for (Eigen::Index u = 0; u < map.columns(); ++u)
            if (map.valid(s, u))
                err.push_back(
                    std::abs(map.depth(s, u) - wall_depth_below_border(cfg.acquisition, sim.truth.surface_depth(s, u))));
    DepthErrors e;
    e.columns = static_cast<long>(err.size());
    if (!err.empty())
        e.max = *std::max_element(err.begin(), err.end());
    e.median = median(std::move(err));
    return e;
}

Outcome depth_fidelity()
{
    PipelineConfig clean = desk_config();
    clean.acquisition.noise.speckle_sigma = 0.0;
    clean.acquisition.noise.nurd_amplitude = 0.0;
    const DepthErrors a = depth_errors(clean);
    PipelineConfig noisy = clean;
    noisy.acquisition.noise.speckle_sigma = 0.15;
    const DepthErrors b = depth_errors(noisy);
    const long total = static_cast<long>(clean.acquisition.slice_count()) * clean.acquisition.a_scans_per_rotation();
    const bool ok = a.columns > 0 && b.columns > 0 && a.median <= clean_median_tol && a.max <= clean_max_tol &&
                    b.median <= speckle_median_tol;
    return {ok, fmt("noise-free median %.3f max %.3f over %ld/%ld valid columns (limits %.0f, %.0f); "
                    "speckle 0.15 median %.3f over %ld (limit %.0f)",
                    a.median, a.max, a.columns, total, clean_median_tol, clean_max_tol, b.median, b.columns,
                    speckle_median_tol)};
}

// --- 5 -------------------------------------------------------------------

Outcome segmentation()
{
    TempDir dir("acceptance_seg");
    PipelineConfig clean = desk_config();
    clean.acquisition.noise.speckle_sigma = 0.0;
    clean.acquisition.noise.nurd_amplitude = 0.0;
    auto t0 = std::chrono::steady_clock::now();
    const double j_clean = run_pipeline(clean, dir / "clean").jaccard;
    const double t_clean = seconds_since(t0);

    PipelineConfig degraded = desk_config();
    degraded.acquisition.noise.speckle_sigma = 0.15;
    degraded.acquisition.noise.nurd_amplitude = 0.01;
    degraded.acquisition.eccentricity_amplitude = 0.15 * degraded.phantom.hole_radius;
    t0 = std::chrono::steady_clock::now();
    const double j_degraded = run_pipeline(degraded, dir / "degraded").jaccard;
    const double t_degraded = seconds_since(t0);

    const bool ok = j_clean >= clean_jaccard && j_degraded >= degraded_jaccard && t_clean < stack_seconds &&
                    t_degraded < stack_seconds;
    return {ok, fmt("clean J=%.4f (>= %.2f, %.1f s); degraded J=%.4f (>= %.2f, %.1f s); limit %.0f s per stack",
                    j_clean, clean_jaccard, t_clean, j_degraded, degraded_jaccard, t_degraded, stack_seconds)};
}

// --- 6 -------------------------------------------------------------------

Outcome oracles()
{
    int li_equal = 0, li_run = 0;
    for (std::uint64_t seed = 0; li_run < li_images; ++seed) {
        const Image8 img = oracle::mixture_image(5000 + seed);
        if (img.minCoeff() == img.maxCoeff())
            continue;
        ++li_run;
        li_equal += li_threshold(img).bin == oracle::exhaustive_li(img);
    }
    std::mt19937_64 rng(31337);
    std::uniform_int_distribution<int> dim(1, 32);
    std::uniform_real_distribution<double> density(0.0, 1.0);
    int j_equal = 0;
    for (int trial = 0; trial < jaccard_pairs; ++trial) {
        const int rows = dim(rng), cols = dim(rng);
        const Mask a = oracle::random_mask(rng, rows, cols, density(rng));
        const Mask b = oracle::random_mask(rng, rows, cols, density(rng));
        const oracle::SetCounts expect = oracle::brute_jaccard(a, b);
        const MetricsReport r = jaccard(a, b);
        j_equal += r.jaccard == expect.jaccard && r.intersection_px == expect.intersection &&
                   r.union_px == expect.union_;
    }
    return {li_equal == li_images && j_equal == jaccard_pairs,
            fmt("li exact on %d/%d images; jaccard exact on %d/%d pairs", li_equal, li_images, j_equal,
                jaccard_pairs)};
}

// --- 7 -------------------------------------------------------------------

Outcome endo_path()
{
    const PipelineConfig cfg = desk_config();
    const PhantomGeometry geom = build_phantom(resolved_phantom(cfg));
    const auto frames = simulate_endo_frames(geom, cfg.endoscope);
    const Panorama pano = stitch_frames(frames, cfg.endoscope.feed_step, cfg.endoscope_columns);
    const std::vector<double> z = panorama_row_positions(frames, cfg.endoscope.feed_step);
    const Image8 truth = unrolled_reflectivity(geom, z, cfg.endoscope_columns);
    const double ncc = normalized_cross_correlation(pano.image.cast<double>(), truth.cast<double>());

    // Bright radial line at theta0 lands in column round(theta0 / 2 pi * columns).
    const double theta0 = 1.3;
    const int columns = 360;
    const AnnulusFrame line = oracle::synthetic_frame(256, [&](double theta, double) {
        return std::abs(wrap_angle(theta - theta0)) < 0.05 ? 250.0 : 20.0;
    });
    const Image8 stripe = unroll_frame(line, columns);
    Eigen::Index best;
    stripe.cast<double>().colwise().sum().maxCoeff(&best);
    const bool line_ok = best == std::lround(theta0 / (2.0 * M_PI) * columns);

    // Rotationally uniform annulus: identical columns.
    const AnnulusFrame ramp = oracle::synthetic_frame(200, [](double, double r) { return 40.0 + 1.5 * r; });
    const int spread = oracle::column_spread(unroll_frame(ramp, 512));

    // Quarter turn of the frame: quarter cyclic shift of the stripe.
    AnnulusFrame pattern = oracle::synthetic_frame(256, [](double theta, double r) {
        return 128.0 + 60.0 * std::sin(3.0 * theta) + 30.0 * std::cos(theta + r / 10.0);
    });
    const Image8 before = unroll_frame(pattern, 400);
    pattern.image = oracle::rotate90(pattern.image);
    const int wrap = oracle::cyclic_shift_error(before, unroll_frame(pattern, 400), 100);

    const bool ok = ncc >= ncc_min && line_ok && spread <= lsb_tol && wrap <= lsb_tol;
    return {ok, fmt("ncc %.4f (>= %.1f) over %ld x %ld; radial line column %ld (%s); uniform spread %d LSB; "
                    "quarter-turn shift error %d LSB (limit %d)",
                    ncc, ncc_min, static_cast<long>(pano.image.rows()), static_cast<long>(pano.image.cols()),
                    static_cast<long>(best), line_ok ? "expected" : "wrong", spread, wrap, lsb_tol)};
}

// --- 8 -------------------------------------------------------------------

std::map<std::string, std::string> tree_bytes(const fs::path& root)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file())
            continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), root).string()] = ss.str();
    }
    return files;
}

Outcome determinism()
{
    TempDir dir("acceptance_det");
    const fs::path config = source_dir / "configs" / "desk.json";
    std::map<std::string, std::string> trees[2];
    const char* parallel[2] = {"1", "8"};
    for (int k = 0; k < 2; ++k) {
        const fs::path out = dir / (std::string("p") + parallel[k]);
        const std::string cmd = cli.string() + " pipeline --config " + config.string() + " --seed 7 --parallel " +
                                parallel[k] + " --out " + out.string() + " > /dev/null 2> /dev/null";
        if (std::system(cmd.c_str()) != 0)
            return {false, std::string("pipeline failed at --parallel ") + parallel[k]};
        trees[k] = tree_bytes(out);
    }
    std::size_t bytes = 0;
    std::string first_diff;
    for (const auto& [name, data] : trees[0]) {
        bytes += data.size();
        const auto it = trees[1].find(name);
        if (first_diff.empty() && (it == trees[1].end() || it->second != data))
            first_diff = name;
    }
    if (first_diff.empty() && trees[0].size() != trees[1].size())
        first_diff = "(file lists differ)";
    return {first_diff.empty() && !trees[0].empty(),
            first_diff.empty() ? fmt("%zu files, %zu bytes identical at --parallel 1 and 8", trees[0].size(), bytes)
                               : "differs at " + first_diff};
}

}  // namespace

int main()
{
    setenv("OCTDS_LOG", "warn", 0);
    report(1, "full-scale geometry", geometry);

    double elapsed = 0.0;
    std::vector<RecoveredSlice> run;
    report(2, "sinusoid recovery with 30% outliers", [&] {
        run = recovery_run(elapsed);
        return recovery(run, elapsed);
    });
    report(3, "undistortion flatness", [&] { return flatness(run); });
    report(4, "depth fidelity", depth_fidelity);
    report(5, "segmentation regime", segmentation);
    report(6, "oracle equivalence", oracles);
    report(7, "endoscope path", endo_path);
    report(8, "determinism across thread counts", determinism);
    std::printf("%s: %d of 8 criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
