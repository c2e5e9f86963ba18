// octds command line: every pipeline stage as a subcommand.

#include "octds/pipeline.hpp"
#include "octds/raw_io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> parallel;
    std::optional<std::string> out;
    std::optional<double> eccentricity_um;
    std::optional<double> nurd_rad;
    std::optional<double> speckle_sigma;
    std::optional<int> crop_margin;
    std::optional<std::string> channel;
};

void add_common(CLI::App* app, Overrides& o)
{
    app->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", o.seed, "Random seed");
    app->add_option("--parallel", o.parallel, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", o.out, "Output directory");
    app->add_option("--eccentricity-um", o.eccentricity_um, "Catheter eccentricity amplitude");
    app->add_option("--nurd-rad", o.nurd_rad, "NURD amplitude");
    app->add_option("--speckle-sigma", o.speckle_sigma, "Speckle standard deviation");
    app->add_option("--crop-margin", o.crop_margin, "Rows skipped below the border");
    app->add_option("--channel", o.channel, "Segmentation channel")->check(CLI::IsMember({"depth", "intensity"}));
}

// Config file first, flags on top.
octds::PipelineConfig resolve(const Overrides& o)
{
    octds::PipelineConfig cfg = o.config.empty() ? octds::desk_config() : octds::load_config(o.config);
    if (o.seed)
        cfg.seed = *o.seed;
    if (o.parallel)
        cfg.parallel = *o.parallel;
    if (o.out)
        cfg.output = *o.out;
    if (o.eccentricity_um)
        cfg.acquisition.eccentricity_amplitude = *o.eccentricity_um;
    if (o.nurd_rad)
        cfg.acquisition.noise.nurd_amplitude = *o.nurd_rad;
    if (o.speckle_sigma)
        cfg.acquisition.noise.speckle_sigma = *o.speckle_sigma;
    if (o.crop_margin)
        cfg.surface.crop_margin = *o.crop_margin;
    if (o.channel)
        cfg.segment.channel = *o.channel == "depth" ? octds::Channel::depth : octds::Channel::intensity;
    try {
        cfg.acquisition.validate();
    } catch (const octds::Error& e) {
        throw octds::Error(octds::ErrorKind::configuration, e.what());
    }
    return cfg;
}

int fail(const std::string& stage, const std::string& kind, const std::string& message)
{
    std::cout << json{{"error", kind}, {"stage", stage}, {"message", message}}.dump() << std::endl;
    octds::log_event(octds::LogLevel::error, {{"stage", stage}, {"error", kind}, {"message", message}});
    return 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Drill-hole OCT reconstruction toolkit"};
    app.require_subcommand(1);
    Overrides o;
    std::string input, input_b, fits;

    auto* simulate = app.add_subcommand("simulate", "Simulate the OCT pullback and ground truth");
    auto* undistort = app.add_subcommand("undistort", "Fit and remove the catheter eccentricity");
    auto* surface = app.add_subcommand("surface", "Extract the wall depth and intensity maps");
    auto* volume = app.add_subcommand("volume", "Assemble the hollow cylinder volume");
    auto* endostitch = app.add_subcommand("endostitch", "Simulate and stitch the endoscope panorama");
    auto* seg = app.add_subcommand("segment", "Threshold a surface map or panorama into a pattern mask");
    auto* compare = app.add_subcommand("compare", "Jaccard and difference image of two masks");
    auto* pipeline = app.add_subcommand("pipeline", "simulate, undistort, surface, segment, compare");
    for (auto* sub : {simulate, undistort, surface, volume, endostitch, seg, compare, pipeline})
        add_common(sub, o);
    undistort->add_option("--input", input, "Raw OCTV directory (default OUT/raw)");
    surface->add_option("--input", input, "Undistorted directory (default OUT/undistorted)");
    volume->add_option("--input", input, "Raw OCTV directory (default OUT/raw)");
    volume->add_option("--fits", fits, "fits.json (default OUT/undistorted/fits.json)");
    seg->add_option("--input", input, "Surface directory or panorama PGM (default OUT/surface)");
    compare->add_option("--a", input, "First mask (default OUT/segment/mask.pgm)");
    compare->add_option("--b", input_b, "Second mask (default OUT/ground_truth/pattern_mask.pgm)");

    CLI11_PARSE(app, argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        const octds::PipelineConfig cfg = resolve(o);
        const fs::path out = cfg.output;
        auto or_default = [&](const std::string& given, const fs::path& fallback) {
            return given.empty() ? fallback : fs::path(given);
        };
        if (sub == simulate) {
            octds::run_simulate(cfg, out);
        } else if (sub == undistort) {
            octds::run_undistort(cfg, or_default(input, out / "raw"), out / "undistorted");
        } else if (sub == surface) {
            octds::run_surface(cfg, or_default(input, out / "undistorted"), out / "surface");
        } else if (sub == volume) {
            octds::run_volume(cfg, or_default(input, out / "raw"), or_default(fits, out / "undistorted" / "fits.json"),
                              out / "volume");
        } else if (sub == endostitch) {
            const double ncc = octds::run_endostitch(cfg, out / "endo");
            std::cout << json{{"normalized_cross_correlation", ncc}}.dump() << std::endl;
        } else if (sub == seg) {
            octds::run_segment(cfg, or_default(input, out / "surface"), out / "segment");
        } else if (sub == compare) {
            const auto report = octds::run_compare(or_default(input, out / "segment" / "mask.pgm"),
                                                   or_default(input_b, out / "ground_truth" / "pattern_mask.pgm"),
                                                   out / "compare");
            std::cout << octds::to_json(report).dump() << std::endl;
        } else {
            const auto report = octds::run_pipeline(cfg, out);
            std::cout << octds::to_json(report).dump() << std::endl;
        }
    } catch (const octds::StageError& e) {
        return fail(e.stage(), octds::to_string(e.kind()), e.what());
    } catch (const octds::Error& e) {
        return fail(name, octds::to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return fail(name, "internal", e.what());
    }
    return 0;
}
