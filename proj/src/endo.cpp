#include "octds/endo.hpp"
#include "octds/parallel.hpp"

#include <cmath>

namespace octds {

namespace {

int stripe_rows(const AnnulusFrame& frame)
{
    return static_cast<int>(std::lround(frame.r_outer - frame.r_inner)) + 1;
}

double bilinear(const Image8& img, double x, double y)
{
    const double fx = std::floor(x), fy = std::floor(y);
    const auto x0 = static_cast<Eigen::Index>(fx), y0 = static_cast<Eigen::Index>(fy);
    const double tx = x - fx, ty = y - fy;
    auto at = [&](Eigen::Index yy, Eigen::Index xx) -> double {
        if (xx < 0 || yy < 0 || xx >= img.cols() || yy >= img.rows())
            return 0.0;
        return img(yy, xx);
    };
    return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
           ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
}

}  // namespace

double stripe_um_per_row(const AnnulusFrame& frame)
{
    return frame.view_length / (stripe_rows(frame) - 1);
}

Image8 unroll_frame(const AnnulusFrame& frame, int columns)
{
    if (columns < 2)
        throw Error(ErrorKind::configuration, "unroll_frame: need at least 2 columns");
    const double size = static_cast<double>(frame.image.rows());
    if (frame.image.rows() != frame.image.cols() || !(frame.r_inner > 0.0) || !(frame.r_outer > frame.r_inner) ||
        frame.r_outer > 0.5 * size || frame.center.x() < 0.0 || frame.center.y() < 0.0 ||
        frame.center.x() >= size || frame.center.y() >= size)
        throw Error(ErrorKind::validation, "unroll_frame: frame geometry is invalid");

    const int rows = stripe_rows(frame);
    Image8 stripe(rows, columns);
    for (int c = 0; c < columns; ++c) {
        const double theta = 2.0 * M_PI * c / columns;
        const double cs = std::cos(theta), sn = std::sin(theta);
        for (int j = 0; j < rows; ++j) {
            const double r = frame.r_inner + j * (frame.r_outer - frame.r_inner) / (rows - 1);
            stripe(j, c) = saturate_cast<std::uint8_t>(
                bilinear(frame.image, frame.center.x() + r * cs, frame.center.y() + r * sn));
        }
    }
    return stripe;
}

Panorama stitch(std::span<const Image8> stripes, double feed_step, double um_per_row,
                std::optional<std::span<const double>> band_offsets)
{
    if (stripes.empty())
        throw Error(ErrorKind::validation, "stitch: no stripes");
    if (!(feed_step > 0.0) || !(um_per_row > 0.0))
        throw Error(ErrorKind::configuration, "stitch: feed_step and um_per_row must be positive");
    if (band_offsets && band_offsets->size() != stripes.size())
        throw Error(ErrorKind::validation, "stitch: one band offset per stripe required");

    const Eigen::Index width = stripes.front().cols();
    const Eigen::Index height = stripes.front().rows();
    const auto band = static_cast<Eigen::Index>(std::lround(feed_step / um_per_row));
    if (band < 1 || band > height)
        throw Error(ErrorKind::configuration, "stitch: band of " + std::to_string(band) +
                                                  " rows does not fit stripes of height " + std::to_string(height));
    const Eigen::Index first = (height - band) / 2;

    std::vector<Eigen::Index> dest(stripes.size());
    Eigen::Index total = 0;
    for (std::size_t k = 0; k < stripes.size(); ++k) {
        if (stripes[k].cols() != width || stripes[k].rows() != height)
            throw Error(ErrorKind::validation, "stitch: stripe " + std::to_string(k) + " differs in shape");
        dest[k] = band_offsets ? std::lround((*band_offsets)[k] / um_per_row) : static_cast<Eigen::Index>(k) * band;
        if (dest[k] < 0)
            throw Error(ErrorKind::validation, "stitch: negative band offset");
        total = std::max(total, dest[k] + band);
    }

    Panorama pano;
    pano.um_per_row = um_per_row;
    pano.image = Image8::Zero(total, width);
    for (std::size_t k = 0; k < stripes.size(); ++k)
        pano.image.middleRows(dest[k], band) = stripes[k].middleRows(first, band);
    return pano;
}

namespace {

std::vector<double> band_offsets(std::span<const AnnulusFrame> frames, double feed_step)
{
    std::vector<double> offsets;
    for (const AnnulusFrame& f : frames)
        offsets.push_back(f.axial_position - 0.5 * feed_step);
    return offsets;
}

}  // namespace

Panorama stitch_frames(std::span<const AnnulusFrame> frames, double feed_step, int columns, unsigned threads)
{
    if (frames.empty())
        throw Error(ErrorKind::validation, "stitch_frames: no frames");
    std::vector<Image8> stripes(frames.size());
    parallel_for(frames.size(), threads, [&](std::size_t k) { stripes[k] = unroll_frame(frames[k], columns); });
    const std::vector<double> offsets = band_offsets(frames, feed_step);
    return stitch(stripes, feed_step, stripe_um_per_row(frames.front()), std::span<const double>(offsets));
}

std::vector<double> panorama_row_positions(std::span<const AnnulusFrame> frames, double feed_step)
{
    if (frames.empty())
        throw Error(ErrorKind::validation, "panorama_row_positions: no frames");
    const double upr = stripe_um_per_row(frames.front());
    const Eigen::Index height = stripe_rows(frames.front());
    const auto band = static_cast<Eigen::Index>(std::lround(feed_step / upr));
    const Eigen::Index first = (height - band) / 2;
    const std::vector<double> offsets = band_offsets(frames, feed_step);

    std::vector<double> z;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto dest = static_cast<std::size_t>(std::lround(offsets[k] / upr));
        if (z.size() < dest + static_cast<std::size_t>(band))
            z.resize(dest + static_cast<std::size_t>(band), 0.0);
        const double z0 = frames[k].axial_position - 0.5 * frames[k].view_length;
        for (Eigen::Index j = 0; j < band; ++j)
            z[dest + static_cast<std::size_t>(j)] = z0 + static_cast<double>(first + j) * upr;
    }
    return z;
}

Image8 unrolled_reflectivity(const PhantomGeometry& geom, std::span<const double> axial_positions, int columns)
{
    Image8 out(static_cast<Eigen::Index>(axial_positions.size()), columns);
    for (std::size_t i = 0; i < axial_positions.size(); ++i)
        for (int c = 0; c < columns; ++c)
            out(static_cast<Eigen::Index>(i), c) =
                saturate_cast<std::uint8_t>(255.0 * geom.reflectivity(axial_positions[i], 2.0 * M_PI * c / columns));
    return out;
}

double normalized_cross_correlation(const ImageD& a, const ImageD& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0)
        throw Error(ErrorKind::validation, "normalized_cross_correlation: shape mismatch");
    const ImageD da = a - a.mean();
    const ImageD db = b - b.mean();
    const double denom = std::sqrt(da.square().sum() * db.square().sum());
    if (denom == 0.0)
        return 0.0;
    return (da * db).sum() / denom;
}

}  // namespace octds
