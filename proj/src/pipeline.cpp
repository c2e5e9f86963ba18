#include "octds/pipeline.hpp"
#include "octds/endo.hpp"
#include "octds/enhance.hpp"
#include "octds/parallel.hpp"
#include "octds/raw_io.hpp"
#include "octds/surface.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace fs = std::filesystem;
using nlohmann::json;

namespace octds {

namespace {

constexpr std::uint64_t ransac_stream = 0x52a4000000ull;

json fit_to_json(std::size_t slice, const FitReport& r)
{
    return {{"slice", slice},
            {"amplitude", r.model.amplitude},
            {"omega", r.model.omega},
            {"phase", r.model.phase},
            {"offset", r.model.offset},
            {"inlier_fraction", r.inlier_fraction},
            {"residual_rms", r.residual_rms},
            {"iterations_used", r.iterations_used},
            {"rejected", r.rejected}};
}

std::vector<FitReport> read_fits(const fs::path& path)
{
    const json doc = read_json(path);
    if (!doc.contains("slices") || !doc["slices"].is_array())
        throw Error(ErrorKind::format, path.string() + ": missing \"slices\" array");
    std::vector<FitReport> fits;
    for (const json& j : doc["slices"]) {
        FitReport r;
        try {
            r.model = {j.at("amplitude").get<double>(), j.at("omega").get<double>(), j.at("phase").get<double>(),
                       j.at("offset").get<double>()};
            r.inlier_fraction = j.at("inlier_fraction").get<double>();
            r.residual_rms = j.at("residual_rms").get<double>();
            r.iterations_used = j.at("iterations_used").get<int>();
            r.rejected = j.at("rejected").get<bool>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::format, path.string() + ": slice " + std::to_string(fits.size()) + ": " + e.what());
        }
        fits.push_back(r);
    }
    return fits;
}

/// Runs `body` and rethrows library errors tagged with the stage name.
template <typename F>
auto staged(const char* stage, F&& body)
{
    const auto start = std::chrono::steady_clock::now();
    log_event(LogLevel::debug, {{"stage", stage}, {"event", "start"}});
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            log_event(LogLevel::info,
                      {{"stage", stage},
                       {"event", "done"},
                       {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
        } else {
            auto result = body();
            log_event(LogLevel::info,
                      {{"stage", stage},
                       {"event", "done"},
                       {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
            return result;
        }
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    } catch (const json::exception& e) {
        throw StageError(stage, Error(ErrorKind::format, e.what()));
    }
}

void reset_dir(const fs::path& dir)
{
    fs::remove_all(dir);
    fs::create_directories(dir);
}

}  // namespace

LogLevel log_level()
{
    const char* env = std::getenv("OCTDS_LOG");
    if (!env)
        return LogLevel::info;
    const std::string v = env;
    if (v == "debug")
        return LogLevel::debug;
    if (v == "warn")
        return LogLevel::warn;
    if (v == "error")
        return LogLevel::error;
    if (v == "off")
        return LogLevel::off;
    return LogLevel::info;
}

void log_event(LogLevel level, const json& event)
{
    static std::mutex mu;
    if (level < log_level())
        return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    json line = {{"level", names[static_cast<int>(level)]}};
    line.update(event);
    std::lock_guard lock(mu);
    std::cerr << line.dump() << '\n';
}

void run_simulate(const PipelineConfig& cfg, const fs::path& out)
{
    staged("simulate", [&] {
        const PhantomGeometry geom = build_phantom(resolved_phantom(cfg));
        const SimulationResult sim = simulate_oct(geom, cfg.acquisition, cfg.seed, cfg.parallel);

        json ecc = json::array();
        for (std::size_t s = 0; s < sim.truth.eccentricity.size(); ++s)
            ecc.push_back({{"amplitude_um", sim.truth.eccentricity[s]},
                           {"phase_rad", sim.truth.eccentricity_phase[s]}});
        reset_dir(out / "raw");
        write_stack(sim.stack, out / "raw", {{"kind", "raw_pullback"}, {"seed", cfg.seed}, {"eccentricity", ecc}});
        write_json(out / "raw" / "config.json", to_json(cfg, true));

        const fs::path gt = out / "ground_truth";
        reset_dir(gt);
        write_pgm16(gt / "surface_depth.pgm", quantize_depth(sim.truth.surface_depth / cfg.acquisition.depth_resolution));
        write_mask(gt / "pattern_mask.pgm", sim.truth.pattern_mask);
        json sines = json::array();
        for (std::size_t s = 0; s < sim.truth.sine_params.size(); ++s) {
            const SineModel& m = sim.truth.sine_params[s];
            sines.push_back(
                {{"slice", s}, {"amplitude", m.amplitude}, {"omega", m.omega}, {"phase", m.phase}, {"offset", m.offset}});
        }
        write_json(gt / "sine_params.json", {{"slices", sines}});
        log_event(LogLevel::info, {{"stage", "simulate"},
                                   {"slices", sim.stack.slices.size()},
                                   {"columns", sim.stack.columns()},
                                   {"depth_samples", sim.stack.depth_samples()},
                                   {"pockets", geom.model().pockets.size()}});
    });
}

std::uint64_t ransac_seed(const PipelineConfig& cfg, std::size_t slice)
{
    return mix_seed(cfg.seed, ransac_stream + slice);
}

FitReport fit_slice(const PipelineConfig& cfg, const BScanPolar& raw, std::size_t slice)
{
    const BinarizeParams bin = resolved_binarize(cfg);
    const int width = static_cast<int>(raw.columns());
    FitReport fit;
    try {
        const std::vector<BorderPoint> points = binarize_border(enhance(raw, cfg.enhance), bin);
        fit = fit_sine(points, width, cfg.ransac, ransac_seed(cfg, slice));
    } catch (const FitRejected& e) {
        fit = e.report();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::no_candidates && e.kind() != ErrorKind::insufficient_data)
            throw;
        // Nothing to fit: fall back to the concentric border.
        const int hi = bin.band_hi < 0 ? static_cast<int>(raw.depth_samples()) : bin.band_hi;
        fit.model = {0.0, 2.0 * M_PI / width, 0.0, 0.5 * (bin.band_lo + hi - 1)};
        fit.rejected = true;
    }
    return fit;
}

void run_undistort(const PipelineConfig& cfg, const fs::path& raw_dir, const fs::path& out_dir)
{
    staged("undistort", [&] {
        const VolumeStack raw = read_stack(raw_dir);
        const std::size_t n = raw.slices.size();

        std::vector<FitReport> fits(n);
        VolumeStack out;
        out.pullback_step = raw.pullback_step;
        out.depth_resolution = raw.depth_resolution;
        out.slices.resize(n);
        parallel_for(n, cfg.parallel, [&](std::size_t s) {
            fits[s] = fit_slice(cfg, raw.slices[s], s);
            out.slices[s] = unwarp(raw.slices[s], fits[s].model);
        });

        json list = json::array();
        std::size_t rejected = 0;
        for (std::size_t s = 0; s < n; ++s) {
            list.push_back(fit_to_json(s, fits[s]));
            if (fits[s].rejected) {
                ++rejected;
                log_event(LogLevel::warn, {{"stage", "undistort"},
                                           {"slice", s},
                                           {"event", "fit_rejected"},
                                           {"inlier_fraction", fits[s].inlier_fraction}});
            }
        }
        reset_dir(out_dir);
        write_stack(out, out_dir, {{"kind", "undistorted"}});
        write_json(out_dir / "fits.json", {{"slices", list}});
        log_event(LogLevel::info, {{"stage", "undistort"}, {"slices", n}, {"rejected", rejected}});
    });
}

void run_surface(const PipelineConfig& cfg, const fs::path& undistorted_dir, const fs::path& out_dir)
{
    staged("surface", [&] {
        const VolumeStack stack = read_stack(undistorted_dir);
        const std::vector<FitReport> fits = read_fits(undistorted_dir / "fits.json");
        if (fits.size() != stack.slices.size())
            throw Error(ErrorKind::validation, "fits.json lists " + std::to_string(fits.size()) + " slices, stack has " +
                                                   std::to_string(stack.slices.size()));
        std::vector<DepthSignal> signals(stack.slices.size());
        parallel_for(signals.size(), cfg.parallel, [&](std::size_t s) {
            signals[s] = surface_signal(stack.slices[s], fits[s].model, cfg.surface.crop_margin, cfg.surface.min_peak);
        });
        SurfaceMap map = stack_surface(signals);
        map.depth_resolution = stack.depth_resolution;
        map.pullback_step = stack.pullback_step;
        reset_dir(out_dir);
        write_surface_map(map, out_dir);
        log_event(LogLevel::info, {{"stage", "surface"},
                                   {"slices", map.slices()},
                                   {"columns", map.columns()},
                                   {"invalid_px", map.valid.size() - map.valid.count()}});
    });
}

void run_volume(const PipelineConfig& cfg, const fs::path& raw_dir, const fs::path& fits_path, const fs::path& out_dir)
{
    staged("volume", [&] {
        const VolumeStack raw = read_stack(raw_dir);
        const std::vector<FitReport> fits = read_fits(fits_path);
        const HollowCylinderVolume vol =
            build_volume(raw, fits, cfg.surface.crop_margin, cfg.acquisition.capillary_outer_radius,
                         cfg.allow_rejected_fits);
        reset_dir(out_dir);
        write_volume(vol, out_dir);
    });
}

double run_endostitch(const PipelineConfig& cfg, const fs::path& out_dir)
{
    return staged("endostitch", [&] {
        const PhantomGeometry geom = build_phantom(resolved_phantom(cfg));
        EndoConfig endo = cfg.endoscope;
        endo.seed = mix_seed(cfg.seed, 0xe4d0);
        const std::vector<AnnulusFrame> frames = simulate_endo_frames(geom, endo, cfg.parallel);

        Panorama pano = stitch_frames(frames, endo.feed_step, cfg.endoscope_columns, cfg.parallel);
        pano.um_per_column = 2.0 * M_PI * geom.model().hole_radius / cfg.endoscope_columns;
        const std::vector<double> z = panorama_row_positions(frames, endo.feed_step);
        const Image8 truth = unrolled_reflectivity(geom, z, cfg.endoscope_columns);
        const double ncc = normalized_cross_correlation(pano.image.cast<double>(), truth.cast<double>());

        reset_dir(out_dir);
        write_pgm8(out_dir / "panorama.pgm", pano.image);
        write_pgm8(out_dir / "reflectivity.pgm", truth);
        Mask breached(truth.rows(), truth.cols());
        for (Eigen::Index i = 0; i < breached.rows(); ++i)
            for (Eigen::Index c = 0; c < breached.cols(); ++c)
                breached(i, c) = geom.wall_radius(z[static_cast<std::size_t>(i)], 2.0 * M_PI * c / breached.cols()) >
                                 geom.model().hole_radius;
        write_mask(out_dir / "pattern_mask.pgm", breached);
        write_json(out_dir / "endo.json", {{"frames", frames.size()},
                                           {"um_per_row", pano.um_per_row},
                                           {"um_per_column", pano.um_per_column},
                                           {"normalized_cross_correlation", ncc}});
        log_event(LogLevel::info, {{"stage", "endostitch"}, {"frames", frames.size()}, {"ncc", ncc}});
        return ncc;
    });
}

void run_segment(const PipelineConfig& cfg, const fs::path& input, const fs::path& out_dir)
{
    staged("segment", [&] {
        PatternMask mask;
        double threshold = 0.0;
        if (fs::is_directory(input)) {
            const SurfaceMap map = read_surface_map(input);
            mask = segment(map, cfg.segment.channel, cfg.segment.intensity_polarity, &threshold);
        } else {
            const PgmImage pano = read_pgm(input);
            mask = segment_image(pano.pixels.cast<double>(), cfg.segment.endo_polarity, MaskSource::endo, &threshold);
        }
        reset_dir(out_dir);
        write_mask(out_dir / "mask.pgm", mask.mask);
        write_json(out_dir / "segment.json", {{"source", to_string(mask.source)},
                                              {"threshold", threshold},
                                              {"rows", mask.mask.rows()},
                                              {"columns", mask.mask.cols()},
                                              {"foreground_px", mask.mask.count()}});
    });
}

MetricsReport run_compare(const fs::path& mask_a, const fs::path& mask_b, const fs::path& out_dir)
{
    return staged("compare", [&] {
        const Mask a = read_mask(mask_a);
        const Mask b = read_mask(mask_b);
        MetricsReport report = jaccard(a, b);
        const fs::path seg_json = mask_a.parent_path() / "segment.json";
        if (fs::exists(seg_json)) {
            const json seg = read_json(seg_json);
            if (seg.contains("threshold") && seg["threshold"].is_number())
                report.threshold_used = seg["threshold"].get<double>();
        }
        reset_dir(out_dir);
        write_json(out_dir / "metrics.json", to_json(report));
        write_pgm8(out_dir / "difference.pgm", difference_display(difference_image(a, b)));
        write_json(out_dir / "difference_legend.json", difference_legend());
        log_event(LogLevel::info, {{"stage", "compare"}, {"jaccard", report.jaccard}});
        return report;
    });
}

MetricsReport run_pipeline(const PipelineConfig& cfg, const fs::path& out)
{
    fs::create_directories(out);
    run_simulate(cfg, out);
    run_undistort(cfg, out / "raw", out / "undistorted");
    run_surface(cfg, out / "undistorted", out / "surface");
    run_segment(cfg, out / "surface", out / "segment");
    return run_compare(out / "segment" / "mask.pgm", out / "ground_truth" / "pattern_mask.pgm", out / "compare");
}

}  // namespace octds
