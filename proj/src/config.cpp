#include "octds/config.hpp"
#include "octds/raw_io.hpp"

#include <set>

using nlohmann::json;

namespace octds {

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& why)
{
    throw Error(ErrorKind::configuration, path + ": " + why);
}

/// One JSON object being read; remembers which keys were consumed.
class Section {
public:
    Section(const json* node, std::string path) : node_(node), path_(std::move(path))
    {
        if (node_ && !node_->is_object())
            config_error(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const char* key) const { return node_ && node_->contains(key); }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    template <typename T>
    void read(const char* key, T& dst)
    {
        if (!has(key))
            return;
        seen_.insert(key);
        const json& v = node_->at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean())
                config_error(field(key), "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer())
                config_error(field(key), "expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
                    config_error(field(key), "must be non-negative");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number())
                config_error(field(key), "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string())
                config_error(field(key), "expected a string");
        }
        dst = v.get<T>();
    }

    void read_vec3(const char* key, Eigen::Vector3d& dst)
    {
        if (!has(key))
            return;
        seen_.insert(key);
        const json& v = node_->at(key);
        if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
            config_error(field(key), "expected an array of three numbers");
        dst = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    }

    const json* raw(const char* key)
    {
        if (!has(key))
            return nullptr;
        seen_.insert(key);
        return &node_->at(key);
    }

    Section child(const char* key) { return Section(raw(key), field(key)); }

    void finish() const
    {
        if (!node_)
            return;
        for (const auto& [key, value] : node_->items())
            if (!seen_.count(key))
                config_error(field(key.c_str()), "unknown field");
    }

private:
    const json* node_;
    std::string path_;
    std::set<std::string> seen_;
};

Pocket read_pocket(const json& node, const std::string& path)
{
    Section s(&node, path);
    Pocket p;
    std::string kind = "sphere";
    s.read("kind", kind);
    if (kind == "sphere")
        p.kind = Pocket::Kind::sphere;
    else if (kind == "cylinder")
        p.kind = Pocket::Kind::cylinder;
    else
        config_error(s.field("kind"), "expected \"sphere\" or \"cylinder\"");
    s.read_vec3("center_um", p.center);
    s.read_vec3("direction", p.direction);
    s.read("radius_um", p.radius);
    s.read("length_um", p.length);
    s.finish();
    return p;
}

template <typename E>
E read_enum(Section& s, const char* key, E current, std::initializer_list<std::pair<const char*, E>> names)
{
    if (!s.has(key))
        return current;
    std::string text;
    s.read(key, text);
    std::string allowed;
    for (const auto& [name, value] : names) {
        if (text == name)
            return value;
        allowed += (allowed.empty() ? "" : "|") + std::string(name);
    }
    config_error(s.field(key), "expected one of " + allowed);
}

const char* channel_name(Channel c)
{
    return c == Channel::depth ? "depth" : "intensity";
}

const char* polarity_name(Polarity p)
{
    return p == Polarity::bright ? "bright" : "dark";
}

}  // namespace

PipelineConfig desk_config()
{
    PipelineConfig cfg;
    cfg.phantom.rng_seed = 11;
    cfg.random_pockets = {8, 3, 800.0};
    cfg.acquisition.noise.speckle_sigma = 0.1;
    cfg.endoscope.feed_step = 500.0;
    return cfg;
}

PipelineConfig full_scale_config()
{
    PipelineConfig cfg = desk_config();
    cfg.output = "out_full_scale";
    cfg.phantom.hole_length = 30000.0;
    cfg.random_pockets = {30, 10, 800.0};
    cfg.acquisition.a_scan_rate = 91000.0;
    cfg.acquisition.rotation_rate = 390.0 / 60.0;
    cfg.acquisition.pullback_step = 200.0;
    cfg.acquisition.pullback_length = 30000.0;
    cfg.acquisition.eccentricity_amplitude = 225.0;
    cfg.acquisition.noise.speckle_sigma = 0.15;
    cfg.acquisition.noise.nurd_amplitude = 0.01;
    cfg.acquisition.noise.nurd_correlation = 32.0 * 14000.0 / 1024.0;
    cfg.endoscope_columns = 2048;
    return cfg;
}

PipelineConfig config_from_json(const json& doc)
{
    PipelineConfig cfg = desk_config();
    Section root(&doc, "");
    root.read("seed", cfg.seed);
    root.read("parallel", cfg.parallel);
    root.read("output", cfg.output);
    if (cfg.parallel < 1)
        config_error("parallel", "must be at least 1");

    {
        Section s = root.child("phantom");
        PhantomModel& p = cfg.phantom;
        s.read("hole_radius_um", p.hole_radius);
        s.read("hole_length_um", p.hole_length);
        s.read("outer_radius_um", p.outer_radius);
        s.read("scatter_base", p.scatter_base);
        s.read("pocket_reflectivity", p.pocket_reflectivity);
        s.read("rng_seed", p.rng_seed);
        {
            Section r = s.child("random_pockets");
            r.read("spheres", cfg.random_pockets.spheres);
            r.read("cylinders", cfg.random_pockets.cylinders);
            r.read("max_breach_um", cfg.random_pockets.max_breach);
            r.finish();
        }
        if (const json* list = s.raw("pockets")) {
            if (!list->is_array())
                config_error("phantom.pockets", "expected an array");
            p.pockets.clear();
            for (std::size_t i = 0; i < list->size(); ++i)
                p.pockets.push_back(read_pocket((*list)[i], "phantom.pockets[" + std::to_string(i) + "]"));
        }
        s.finish();
    }
    {
        Section s = root.child("acquisition");
        AcquisitionConfig& a = cfg.acquisition;
        s.read("a_scan_rate_hz", a.a_scan_rate);
        s.read("rotation_rate_rps", a.rotation_rate);
        s.read("pullback_step_um", a.pullback_step);
        s.read("pullback_length_um", a.pullback_length);
        s.read("depth_samples", a.depth_samples);
        s.read("depth_resolution_um", a.depth_resolution);
        s.read("eccentricity_amplitude_um", a.eccentricity_amplitude);
        s.read("eccentricity_phase_rad", a.eccentricity_phase);
        s.read("eccentricity_drift_um_per_slice", a.eccentricity_drift);
        s.read("eccentricity_phase_drift_rad_per_slice", a.eccentricity_phase_drift);
        s.read("catheter_radius_um", a.catheter_radius);
        s.read("capillary_outer_radius_um", a.capillary_outer_radius);
        s.read("glass_thickness_um", a.glass_thickness);
        s.read("glass_group_index", a.glass_group_index);
        s.read("subsurface_decay_samples", a.subsurface_decay);
        s.read("psf_sigma_samples", a.psf_sigma);
        s.read("gain", a.gain);
        {
            Section r = s.child("reflectivity");
            r.read("sheath", a.sheath_amplitude);
            r.read("inner_glass", a.inner_glass_amplitude);
            r.read("outer_glass", a.outer_glass_amplitude);
            r.read("wall", a.wall_amplitude);
            r.read("subsurface", a.subsurface_amplitude);
            r.finish();
        }
        {
            Section n = s.child("noise");
            n.read("speckle_sigma", a.noise.speckle_sigma);
            n.read("nurd_amplitude_rad", a.noise.nurd_amplitude);
            n.read("nurd_correlation_columns", a.noise.nurd_correlation);
            n.read("background_level", a.noise.background_level);
            n.finish();
        }
        s.finish();
    }
    {
        Section s = root.child("endoscope");
        s.read("feed_step_um", cfg.endoscope.feed_step);
        s.read("frame_size_px", cfg.endoscope.frame_size);
        s.read("view_length_um", cfg.endoscope.view_length);
        s.read("speckle_sigma", cfg.endoscope.speckle_sigma);
        s.read("columns", cfg.endoscope_columns);
        s.finish();
    }
    {
        Section s = root.child("enhance");
        s.read("denoise", cfg.enhance.denoise);
        s.read("threshold_scale", cfg.enhance.threshold_scale);
        s.read("tiles_x", cfg.enhance.tiles_x);
        s.read("tiles_y", cfg.enhance.tiles_y);
        s.read("clip_limit", cfg.enhance.clip_limit);
        s.read("bins", cfg.enhance.bins);
        s.finish();
    }
    {
        Section s = root.child("binarize");
        s.read("window", cfg.binarize.window);
        s.read("offset", cfg.binarize.offset);
        s.read("min_level", cfg.binarize.min_level);
        s.read("max_expected_eccentricity_um", cfg.max_expected_eccentricity);
        if (const json* band = s.raw("band_rows")) {
            if (band->is_string() && band->get<std::string>() == "auto") {
                cfg.auto_band = true;
            } else if (band->is_array() && band->size() == 2 && (*band)[0].is_number_integer() &&
                       (*band)[1].is_number_integer()) {
                cfg.auto_band = false;
                cfg.binarize.band_lo = (*band)[0].get<int>();
                cfg.binarize.band_hi = (*band)[1].get<int>();
            } else {
                config_error("binarize.band_rows", "expected \"auto\" or [lo, hi]");
            }
        }
        s.finish();
    }
    {
        Section s = root.child("ransac");
        s.read("tol_samples", cfg.ransac.tol_samples);
        s.read("max_iterations", cfg.ransac.max_iterations);
        s.read("min_inlier_fraction", cfg.ransac.min_inlier_fraction);
        s.read("omega_span", cfg.ransac.omega_span);
        s.read("omega_steps", cfg.ransac.omega_steps);
        s.read("confidence", cfg.ransac.confidence);
        s.finish();
    }
    {
        Section s = root.child("surface");
        s.read("crop_margin", cfg.surface.crop_margin);
        if (const json* mp = s.raw("min_peak")) {
            if (mp->is_null())
                cfg.surface.min_peak.reset();
            else if (mp->is_number())
                cfg.surface.min_peak = mp->get<double>();
            else
                config_error("surface.min_peak", "expected a number or null");
        }
        s.finish();
    }
    {
        Section s = root.child("segment");
        cfg.segment.channel =
            read_enum(s, "channel", cfg.segment.channel, {{"depth", Channel::depth}, {"intensity", Channel::intensity}});
        cfg.segment.intensity_polarity = read_enum(s, "intensity_polarity", cfg.segment.intensity_polarity,
                                                   {{"bright", Polarity::bright}, {"dark", Polarity::dark}});
        cfg.segment.endo_polarity = read_enum(s, "endo_polarity", cfg.segment.endo_polarity,
                                              {{"bright", Polarity::bright}, {"dark", Polarity::dark}});
        s.finish();
    }
    {
        Section s = root.child("volume");
        s.read("allow_rejected", cfg.allow_rejected_fits);
        s.finish();
    }
    root.finish();

    try {
        cfg.phantom.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::configuration, std::string("phantom.") + e.what());
    }
    try {
        cfg.acquisition.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::configuration, std::string("acquisition.") + e.what());
    }
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    return config_from_json(read_json(path));
}

json to_json(const PipelineConfig& cfg, bool for_output_tree)
{
    const PhantomModel& p = cfg.phantom;
    json pockets = json::array();
    for (const Pocket& k : p.pockets) {
        pockets.push_back({{"kind", k.kind == Pocket::Kind::sphere ? "sphere" : "cylinder"},
                           {"center_um", {k.center.x(), k.center.y(), k.center.z()}},
                           {"direction", {k.direction.x(), k.direction.y(), k.direction.z()}},
                           {"radius_um", k.radius},
                           {"length_um", k.length}});
    }
    const AcquisitionConfig& a = cfg.acquisition;
    json doc = {
        {"seed", cfg.seed},
        {"phantom",
         {{"hole_radius_um", p.hole_radius},
          {"hole_length_um", p.hole_length},
          {"outer_radius_um", p.outer_radius},
          {"scatter_base", p.scatter_base},
          {"pocket_reflectivity", p.pocket_reflectivity},
          {"rng_seed", p.rng_seed},
          {"random_pockets",
           {{"spheres", cfg.random_pockets.spheres},
            {"cylinders", cfg.random_pockets.cylinders},
            {"max_breach_um", cfg.random_pockets.max_breach}}},
          {"pockets", pockets}}},
        {"acquisition",
         {{"a_scan_rate_hz", a.a_scan_rate},
          {"rotation_rate_rps", a.rotation_rate},
          {"pullback_step_um", a.pullback_step},
          {"pullback_length_um", a.pullback_length},
          {"depth_samples", a.depth_samples},
          {"depth_resolution_um", a.depth_resolution},
          {"eccentricity_amplitude_um", a.eccentricity_amplitude},
          {"eccentricity_phase_rad", a.eccentricity_phase},
          {"eccentricity_drift_um_per_slice", a.eccentricity_drift},
          {"eccentricity_phase_drift_rad_per_slice", a.eccentricity_phase_drift},
          {"catheter_radius_um", a.catheter_radius},
          {"capillary_outer_radius_um", a.capillary_outer_radius},
          {"glass_thickness_um", a.glass_thickness},
          {"glass_group_index", a.glass_group_index},
          {"subsurface_decay_samples", a.subsurface_decay},
          {"psf_sigma_samples", a.psf_sigma},
          {"gain", a.gain},
          {"reflectivity",
           {{"sheath", a.sheath_amplitude},
            {"inner_glass", a.inner_glass_amplitude},
            {"outer_glass", a.outer_glass_amplitude},
            {"wall", a.wall_amplitude},
            {"subsurface", a.subsurface_amplitude}}},
          {"noise",
           {{"speckle_sigma", a.noise.speckle_sigma},
            {"nurd_amplitude_rad", a.noise.nurd_amplitude},
            {"nurd_correlation_columns", a.noise.nurd_correlation},
            {"background_level", a.noise.background_level}}}}},
        {"endoscope",
         {{"feed_step_um", cfg.endoscope.feed_step},
          {"frame_size_px", cfg.endoscope.frame_size},
          {"view_length_um", cfg.endoscope.view_length},
          {"speckle_sigma", cfg.endoscope.speckle_sigma},
          {"columns", cfg.endoscope_columns}}},
        {"enhance",
         {{"denoise", cfg.enhance.denoise},
          {"threshold_scale", cfg.enhance.threshold_scale},
          {"tiles_x", cfg.enhance.tiles_x},
          {"tiles_y", cfg.enhance.tiles_y},
          {"clip_limit", cfg.enhance.clip_limit},
          {"bins", cfg.enhance.bins}}},
        {"binarize",
         {{"window", cfg.binarize.window},
          {"offset", cfg.binarize.offset},
          {"min_level", cfg.binarize.min_level},
          {"max_expected_eccentricity_um", cfg.max_expected_eccentricity},
          {"band_rows", cfg.auto_band ? json("auto") : json::array({cfg.binarize.band_lo, cfg.binarize.band_hi})}}},
        {"ransac",
         {{"tol_samples", cfg.ransac.tol_samples},
          {"max_iterations", cfg.ransac.max_iterations},
          {"min_inlier_fraction", cfg.ransac.min_inlier_fraction},
          {"omega_span", cfg.ransac.omega_span},
          {"omega_steps", cfg.ransac.omega_steps},
          {"confidence", cfg.ransac.confidence}}},
        {"surface",
         {{"crop_margin", cfg.surface.crop_margin},
          {"min_peak", cfg.surface.min_peak ? json(*cfg.surface.min_peak) : json(nullptr)}}},
        {"segment",
         {{"channel", channel_name(cfg.segment.channel)},
          {"intensity_polarity", polarity_name(cfg.segment.intensity_polarity)},
          {"endo_polarity", polarity_name(cfg.segment.endo_polarity)}}},
        {"volume", {{"allow_rejected", cfg.allow_rejected_fits}}},
    };
    if (!for_output_tree) {
        doc["output"] = cfg.output;
        doc["parallel"] = cfg.parallel;
    }
    return doc;
}

PhantomModel resolved_phantom(const PipelineConfig& cfg)
{
    PhantomModel model = cfg.phantom;
    const auto extra = random_pockets(model, cfg.random_pockets.spheres, cfg.random_pockets.cylinders,
                                      cfg.random_pockets.max_breach, model.rng_seed);
    model.pockets.insert(model.pockets.end(), extra.begin(), extra.end());
    return model;
}

BinarizeParams resolved_binarize(const PipelineConfig& cfg)
{
    BinarizeParams params = cfg.binarize;
    if (!cfg.auto_band)
        return params;
    const AcquisitionConfig& a = cfg.acquisition;
    const double e_max =
        cfg.max_expected_eccentricity > 0.0 ? cfg.max_expected_eccentricity : 0.2 * cfg.phantom.hole_radius;
    const double center = border_optical_radius(a) / a.depth_resolution;
    const double half = e_max / a.depth_resolution + 3.0;
    params.band_lo = std::max(0, static_cast<int>(std::floor(center - half)));
    params.band_hi = std::min(a.depth_samples, static_cast<int>(std::ceil(center + half)) + 1);
    return params;
}

}  // namespace octds
