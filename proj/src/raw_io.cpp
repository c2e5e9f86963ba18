#include "octds/raw_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace octds {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::range: return "range";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::fit_rejected: return "fit_rejected";
    case ErrorKind::no_candidates: return "no_candidates";
    case ErrorKind::degenerate_input: return "degenerate_input";
    }
    return "unknown";
}

void VolumeStack::validate() const
{
    if (slices.empty())
        throw Error(ErrorKind::validation, "volume stack has no slices");
    const auto cols = slices.front().columns();
    const auto depth = slices.front().depth_samples();
    if (cols == 0 || depth == 0)
        throw Error(ErrorKind::validation, "volume stack slices are empty");
    for (std::size_t s = 0; s < slices.size(); ++s) {
        if (slices[s].columns() != cols || slices[s].depth_samples() != depth)
            throw Error(ErrorKind::validation,
                        "slice " + std::to_string(s) + " has shape " +
                            std::to_string(slices[s].columns()) + "x" +
                            std::to_string(slices[s].depth_samples()) + ", expected " +
                            std::to_string(cols) + "x" + std::to_string(depth));
    }
}

namespace {

std::string slice_file_name(std::size_t s)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "slice_%04zu.u16", s);
    return buf;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(ErrorKind::io, "write failed: " + path.string());
}

std::vector<unsigned char> read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T required(const json& meta, const char* key)
{
    if (!meta.contains(key))
        throw Error(ErrorKind::format, std::string("meta.json: missing field '") + key + "'");
    try {
        return meta.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::format, std::string("meta.json: field '") + key + "' has the wrong type");
    }
}

}  // namespace

void write_json(const fs::path& path, const json& doc)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::format, path.string() + ": " + e.what());
    }
}

void write_stack(const VolumeStack& stack, const fs::path& dir, const json& extra)
{
    stack.validate();
    fs::create_directories(dir);

    const auto cols = stack.columns();
    const auto depth = stack.depth_samples();
    json meta = extra.is_object() ? extra : json::object();
    meta["format"] = "OCTV";
    meta["version"] = 1;
    meta["dtype"] = "uint16";
    meta["byte_order"] = "little";
    meta["slice_count"] = stack.slices.size();
    meta["columns"] = cols;
    meta["depth_samples"] = depth;
    meta["depth_resolution_um"] = stack.depth_resolution;
    meta["pullback_step_um"] = stack.pullback_step;

    json slices = json::array();
    std::vector<unsigned char> bytes(static_cast<std::size_t>(cols * depth) * 2);
    for (std::size_t s = 0; s < stack.slices.size(); ++s) {
        const Image16& img = stack.slices[s].intensity;
        const std::uint16_t* data = img.data();
        for (Eigen::Index i = 0; i < img.size(); ++i) {
            bytes[2 * i] = static_cast<unsigned char>(data[i] & 0xff);
            bytes[2 * i + 1] = static_cast<unsigned char>(data[i] >> 8);
        }
        const std::string name = slice_file_name(s);
        write_bytes(dir / name, bytes);
        slices.push_back({{"file", name}, {"axial_position_um", stack.slices[s].axial_position}});
    }
    meta["slices"] = std::move(slices);
    write_json(dir / "meta.json", meta);
}

json read_stack_meta(const fs::path& dir)
{
    const fs::path meta_path = dir / "meta.json";
    if (!fs::exists(meta_path))
        throw Error(ErrorKind::io, "missing " + meta_path.string());
    return read_json(meta_path);
}

VolumeStack read_stack(const fs::path& dir)
{
    const json meta = read_stack_meta(dir);
    if (required<std::string>(meta, "format") != "OCTV")
        throw Error(ErrorKind::format, "meta.json: not an OCTV container");
    const auto dtype = required<std::string>(meta, "dtype");
    if (dtype != "uint16")
        throw Error(ErrorKind::format, "meta.json: unsupported dtype '" + dtype + "', expected uint16");
    if (meta.contains("byte_order") && meta.at("byte_order") != "little")
        throw Error(ErrorKind::format, "meta.json: unsupported byte order");

    const auto count = required<std::int64_t>(meta, "slice_count");
    const auto cols = required<std::int64_t>(meta, "columns");
    const auto depth = required<std::int64_t>(meta, "depth_samples");
    if (count <= 0)
        throw Error(ErrorKind::validation, "meta.json: slice_count must be positive");
    if (cols <= 0 || depth <= 0)
        throw Error(ErrorKind::validation, "meta.json: slice dimensions must be positive");
    const auto& entries = meta.contains("slices") ? meta.at("slices") : json::array();
    if (!entries.is_array() || static_cast<std::int64_t>(entries.size()) != count)
        throw Error(ErrorKind::format, "meta.json: slices array does not match slice_count");

    VolumeStack stack;
    stack.depth_resolution = required<double>(meta, "depth_resolution_um");
    stack.pullback_step = required<double>(meta, "pullback_step_um");
    stack.slices.resize(static_cast<std::size_t>(count));

    const auto expected = static_cast<std::size_t>(cols * depth) * 2;
    for (std::int64_t s = 0; s < count; ++s) {
        const json& entry = entries[static_cast<std::size_t>(s)];
        const fs::path file = dir / entry.value("file", slice_file_name(static_cast<std::size_t>(s)));
        if (!fs::exists(file))
            throw Error(ErrorKind::io, "slice " + std::to_string(s) + ": missing file " + file.string());
        const auto bytes = read_bytes(file);
        if (bytes.size() != expected)
            throw Error(ErrorKind::io, "slice " + std::to_string(s) + ": expected " + std::to_string(expected) +
                                           " bytes, found " + std::to_string(bytes.size()));
        BScanPolar& slice = stack.slices[static_cast<std::size_t>(s)];
        slice.intensity.resize(cols, depth);
        std::uint16_t* data = slice.intensity.data();
        for (Eigen::Index i = 0; i < slice.intensity.size(); ++i)
            data[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
        slice.axial_position = entry.value("axial_position_um", 0.0);
    }
    return stack;
}

// --- PGM ------------------------------------------------------------------

namespace {

void write_pgm(const fs::path& path, Eigen::Index width, Eigen::Index height, int maxval,
               const std::vector<unsigned char>& payload)
{
    std::ostringstream header;
    header << "P5\n" << width << ' ' << height << '\n' << maxval << '\n';
    const std::string h = header.str();
    std::vector<unsigned char> bytes(h.begin(), h.end());
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    write_bytes(path, bytes);
}

}  // namespace

void write_pgm16(const fs::path& path, const Image16& image)
{
    if (image.size() == 0)
        throw Error(ErrorKind::validation, "refusing to write an empty image to " + path.string());
    std::vector<unsigned char> payload(static_cast<std::size_t>(image.size()) * 2);
    const std::uint16_t* data = image.data();
    for (Eigen::Index i = 0; i < image.size(); ++i) {
        payload[2 * i] = static_cast<unsigned char>(data[i] >> 8);
        payload[2 * i + 1] = static_cast<unsigned char>(data[i] & 0xff);
    }
    write_pgm(path, image.cols(), image.rows(), 65535, payload);
}

void write_pgm8(const fs::path& path, const Image8& image)
{
    if (image.size() == 0)
        throw Error(ErrorKind::validation, "refusing to write an empty image to " + path.string());
    std::vector<unsigned char> payload(image.data(), image.data() + image.size());
    write_pgm(path, image.cols(), image.rows(), 255, payload);
}

PgmImage read_pgm(const fs::path& path)
{
    const auto bytes = read_bytes(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        for (;;) {
            while (pos < bytes.size() && std::isspace(bytes[pos]))
                ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
                continue;
            }
            break;
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos]))
            tok.push_back(static_cast<char>(bytes[pos++]));
        return tok;
    };
    if (next_token() != "P5")
        throw Error(ErrorKind::format, path.string() + ": not a binary PGM");
    long width = 0, height = 0, maxval = 0;
    try {
        width = std::stol(next_token());
        height = std::stol(next_token());
        maxval = std::stol(next_token());
    } catch (const std::exception&) {
        throw Error(ErrorKind::format, path.string() + ": malformed PGM header");
    }
    ++pos;  // single whitespace after maxval
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
        throw Error(ErrorKind::format, path.string() + ": invalid PGM dimensions or maxval");
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    const std::size_t need = static_cast<std::size_t>(width * height) * bpp;
    if (bytes.size() < pos + need)
        throw Error(ErrorKind::io, path.string() + ": truncated PGM payload");

    PgmImage out;
    out.maxval = static_cast<int>(maxval);
    out.pixels.resize(height, width);
    std::uint16_t* data = out.pixels.data();
    for (Eigen::Index i = 0; i < out.pixels.size(); ++i) {
        data[i] = bpp == 2 ? static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1])
                           : bytes[pos + i];
    }
    return out;
}

void write_mask(const fs::path& path, const Mask& mask)
{
    write_pgm8(path, mask.cast<std::uint8_t>() * std::uint8_t{255});
}

Mask read_mask(const fs::path& path)
{
    return read_pgm(path).pixels != 0;
}

Image16 quantize_depth(const ImageD& depth)
{
    Image16 out(depth.rows(), depth.cols());
    for (Eigen::Index i = 0; i < depth.size(); ++i) {
        const double v = std::round(depth.data()[i]);
        if (!(v >= 0.0 && v <= 65535.0))
            throw Error(ErrorKind::range, "depth value " + std::to_string(depth.data()[i]) +
                                              " does not fit a 16-bit PGM");
        out.data()[i] = static_cast<std::uint16_t>(v);
    }
    return out;
}

void write_surface_map(const SurfaceMap& map, const fs::path& dir)
{
    if (map.depth.size() == 0)
        throw Error(ErrorKind::validation, "surface map is empty");
    if (map.intensity.rows() != map.depth.rows() || map.intensity.cols() != map.depth.cols() ||
        map.valid.rows() != map.depth.rows() || map.valid.cols() != map.depth.cols())
        throw Error(ErrorKind::validation, "surface map channels differ in shape");
    const Image16 depth = quantize_depth(map.depth);
    fs::create_directories(dir);
    write_pgm16(dir / "depth.pgm", depth);
    write_pgm8(dir / "intensity.pgm", (map.intensity / std::uint16_t{256}).cast<std::uint8_t>());
    write_mask(dir / "valid.pgm", map.valid);
    write_json(dir / "surface.json", {{"slices", map.slices()},
                                      {"columns", map.columns()},
                                      {"depth_units", "samples below fitted capillary border"},
                                      {"depth_resolution_um", map.depth_resolution},
                                      {"pullback_step_um", map.pullback_step}});
}

SurfaceMap read_surface_map(const fs::path& dir)
{
    const json meta = read_json(dir / "surface.json");
    SurfaceMap map;
    map.depth = read_pgm(dir / "depth.pgm").pixels.cast<double>();
    map.intensity = read_pgm(dir / "intensity.pgm").pixels * std::uint16_t{256};
    map.valid = read_mask(dir / "valid.pgm");
    map.depth_resolution = meta.value("depth_resolution_um", 0.0);
    map.pullback_step = meta.value("pullback_step_um", 0.0);
    if (map.depth.rows() != meta.value("slices", -1) || map.depth.cols() != meta.value("columns", -1))
        throw Error(ErrorKind::format, dir.string() + ": surface.json disagrees with depth.pgm shape");
    return map;
}

}  // namespace octds
