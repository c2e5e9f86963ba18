#include "octds/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace octds {

namespace {

double soft(double x, double t)
{
    if (x > t)
        return x - t;
    if (x < -t)
        return x + t;
    return 0.0;
}

double median_abs(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    for (double& x : v)
        x = std::abs(x);
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

std::vector<double> diagonal_details(const ImageD& image)
{
    const Eigen::Index rows = image.rows() / 2 * 2;
    const Eigen::Index cols = image.cols() / 2 * 2;
    std::vector<double> hh;
    hh.reserve(static_cast<std::size_t>(rows * cols / 4));
    for (Eigen::Index y = 0; y < rows; y += 2)
        for (Eigen::Index x = 0; x < cols; x += 2)
            hh.push_back(0.5 * (image(y, x) - image(y, x + 1) - image(y + 1, x) + image(y + 1, x + 1)));
    return hh;
}

}  // namespace

double universal_threshold(const ImageD& image)
{
    const double sigma = median_abs(diagonal_details(image)) / 0.6745;
    return sigma * std::sqrt(2.0 * std::log(static_cast<double>(std::max<Eigen::Index>(2, image.size()))));
}

ImageD wavelet_denoise(const ImageD& image, double threshold_scale)
{
    ImageD out = image;
    if (image.rows() < 2 || image.cols() < 2)
        return out;
    const double t = threshold_scale * universal_threshold(image);
    if (t <= 0.0)
        return out;
    const Eigen::Index rows = image.rows() / 2 * 2;
    const Eigen::Index cols = image.cols() / 2 * 2;
    for (Eigen::Index y = 0; y < rows; y += 2) {
        for (Eigen::Index x = 0; x < cols; x += 2) {
            const double a = image(y, x), b = image(y, x + 1);
            const double c = image(y + 1, x), d = image(y + 1, x + 1);
            const double ll = 0.5 * (a + b + c + d);
            const double hl = soft(0.5 * (a - b + c - d), t);
            const double lh = soft(0.5 * (a + b - c - d), t);
            const double hh = soft(0.5 * (a - b - c + d), t);
            out(y, x) = 0.5 * (ll + hl + lh + hh);
            out(y, x + 1) = 0.5 * (ll - hl + lh - hh);
            out(y + 1, x) = 0.5 * (ll + hl - lh - hh);
            out(y + 1, x + 1) = 0.5 * (ll - hl - lh + hh);
        }
    }
    return out;
}

Image16 clahe(const Image16& image, int tiles_x, int tiles_y, double clip_limit, int bins)
{
    const Eigen::Index rows = image.rows();
    const Eigen::Index cols = image.cols();
    if (rows == 0 || cols == 0)
        throw Error(ErrorKind::validation, "clahe: empty image");
    if (tiles_x < 1 || tiles_y < 1 || tiles_x > cols || tiles_y > rows)
        throw Error(ErrorKind::configuration, "clahe: tile grid " + std::to_string(tiles_y) + "x" +
                                                  std::to_string(tiles_x) + " does not fit a " +
                                                  std::to_string(rows) + "x" + std::to_string(cols) + " image");
    if (bins < 2 || !(clip_limit > 0.0))
        throw Error(ErrorKind::configuration, "clahe: bins must be >= 2 and clip_limit positive");

    const std::uint16_t lo = image.minCoeff();
    const std::uint16_t hi = image.maxCoeff();
    if (lo == hi)
        return image;
    const long span = static_cast<long>(hi) - lo + 1;
    auto bin_of = [&](std::uint16_t v) { return static_cast<int>((static_cast<long>(v) - lo) * bins / span); };

    auto edge = [](Eigen::Index n, int tiles, int t) { return n * t / tiles; };

    // Mapping per tile: maps[(ty * tiles_x + tx) * bins + b] in [0, 65535].
    std::vector<double> maps(static_cast<std::size_t>(tiles_x * tiles_y * bins));
    std::vector<long> hist(static_cast<std::size_t>(bins));
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            const Eigen::Index y0 = edge(rows, tiles_y, ty), y1 = edge(rows, tiles_y, ty + 1);
            const Eigen::Index x0 = edge(cols, tiles_x, tx), x1 = edge(cols, tiles_x, tx + 1);
            const long area = static_cast<long>((y1 - y0) * (x1 - x0));
            std::fill(hist.begin(), hist.end(), 0);
            for (Eigen::Index y = y0; y < y1; ++y)
                for (Eigen::Index x = x0; x < x1; ++x)
                    ++hist[static_cast<std::size_t>(bin_of(image(y, x)))];

            const long limit = std::max<long>(1, static_cast<long>(clip_limit * area / bins));
            long excess = 0;
            for (long& h : hist) {
                if (h > limit) {
                    excess += h - limit;
                    h = limit;
                }
            }
            const long share = excess / bins;
            long residual = excess - share * bins;
            for (long& h : hist) {
                h += share;
                if (residual > 0) {
                    ++h;
                    --residual;
                }
            }
            double* map = &maps[static_cast<std::size_t>((ty * tiles_x + tx) * bins)];
            long cdf = 0;
            for (int b = 0; b < bins; ++b) {
                cdf += hist[static_cast<std::size_t>(b)];
                map[b] = 65535.0 * static_cast<double>(cdf) / static_cast<double>(area);
            }
        }
    }

    // Bilinear blend between the four nearest tile centres.
    auto locate = [&](Eigen::Index p, Eigen::Index n, int tiles, int& t0, int& t1, double& w) {
        auto center = [&](int t) { return 0.5 * static_cast<double>(edge(n, tiles, t) + edge(n, tiles, t + 1) - 1); };
        if (p <= center(0)) {
            t0 = t1 = 0;
            w = 0.0;
            return;
        }
        if (p >= center(tiles - 1)) {
            t0 = t1 = tiles - 1;
            w = 0.0;
            return;
        }
        int t = 0;
        while (center(t + 1) < p)
            ++t;
        t0 = t;
        t1 = t + 1;
        w = (p - center(t0)) / (center(t1) - center(t0));
    };

    std::vector<int> cx0(static_cast<std::size_t>(cols)), cx1(static_cast<std::size_t>(cols));
    std::vector<double> wx(static_cast<std::size_t>(cols));
    for (Eigen::Index x = 0; x < cols; ++x)
        locate(x, cols, tiles_x, cx0[x], cx1[x], wx[x]);

    Image16 out(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        int ty0, ty1;
        double wy;
        locate(y, rows, tiles_y, ty0, ty1, wy);
        for (Eigen::Index x = 0; x < cols; ++x) {
            const int b = bin_of(image(y, x));
            auto m = [&](int ty, int tx) { return maps[static_cast<std::size_t>((ty * tiles_x + tx) * bins + b)]; };
            const double top = (1.0 - wx[x]) * m(ty0, cx0[x]) + wx[x] * m(ty0, cx1[x]);
            const double bottom = (1.0 - wx[x]) * m(ty1, cx0[x]) + wx[x] * m(ty1, cx1[x]);
            out(y, x) = saturate_cast<std::uint16_t>((1.0 - wy) * top + wy * bottom);
        }
    }
    return out;
}

BScanPolar enhance(const BScanPolar& slice, const EnhanceParams& params)
{
    if (slice.intensity.size() == 0)
        throw Error(ErrorKind::validation, "enhance: empty slice");
    BScanPolar out;
    out.axial_position = slice.axial_position;
    Image16 base = slice.intensity;
    if (params.denoise) {
        const ImageD denoised = wavelet_denoise(slice.intensity.cast<double>(), params.threshold_scale);
        base = denoised.unaryExpr([](double v) { return saturate_cast<std::uint16_t>(v); });
    }
    out.intensity = clahe(base, params.tiles_x, params.tiles_y, params.clip_limit, params.bins);
    return out;
}

}  // namespace octds
