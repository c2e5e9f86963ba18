#pragma once

#include "octds/image.hpp"
#include "octds/surface_map.hpp"

#include <json.hpp>

#include <array>
#include <type_traits>
#include <vector>

namespace octds {

/// 256-bin quantization used by the Li threshold. 8-bit input maps value to
/// bin one-to-one; anything else is spread linearly over [min, max].
struct HistogramBinning {
    static constexpr int bins = 256;
    double lo = 0.0;
    double width = 1.0;
    bool identity = false;

    int bin(double value) const;
    /// Smallest value that falls into bin b + 1.
    double upper_edge(int b) const { return identity ? b + 0.5 : lo + (b + 1) * width; }

    template <typename Scalar>
    static HistogramBinning for_image(const Image<Scalar>& image);
};

struct LiThreshold {
    int bin = 0;          // background = bins <= bin
    double value = 0.0;   // foreground = pixels above this (input units)
    int iterations = 0;
    HistogramBinning binning;
};

/// Minimum cross entropy threshold on a 256-bin histogram. Levels are the
/// 1-based bin indices. Li-Tam iteration t <- (mb - mf) / (ln mb - ln mf)
/// runs until the update is below half a bin. Its fixed point is then
/// checked against the cross entropy of every occupied bin and replaced by
/// a strictly better one if the iteration stalled in a local minimum.
/// Throws ErrorKind::degenerate_input on fewer than two distinct values.
LiThreshold li_threshold_histogram(const std::array<double, 256>& histogram);

template <typename Scalar>
LiThreshold li_threshold(const Image<Scalar>& image);

/// Cross-entropy objective (up to a threshold-independent constant) for
/// background = bins <= t. Infinite if a class is empty.
double li_cross_entropy(const std::array<double, 256>& histogram, int t);

enum class MaskSource { oct_depth, oct_intensity, endo, ground_truth };

struct PatternMask {
    Mask mask;
    MaskSource source = MaskSource::ground_truth;
};

enum class Channel { depth, intensity };
enum class Polarity { bright, dark };

/// Threshold one channel with li_threshold. The depth channel uses
/// "deeper is foreground"; intensity polarity is selectable. A constant
/// channel yields an all-background mask.
PatternMask segment(const SurfaceMap& map, Channel channel, Polarity intensity_polarity = Polarity::bright,
                    double* threshold_used = nullptr);

/// Same for a plain image (endoscopic panorama).
PatternMask segment_image(const ImageD& image, Polarity polarity, MaskSource source, double* threshold_used = nullptr);

struct MetricsReport {
    double jaccard = 0.0;
    long intersection_px = 0;
    long union_px = 0;
    long a_px = 0;
    long b_px = 0;
    double threshold_used = 0.0;
};

/// |A and B| / |A or B|; two empty masks score 1.
MetricsReport jaccard(const Mask& a, const Mask& b);

enum class DiffLabel : std::uint8_t { neither = 0, only_a = 1, only_b = 2, both = 3 };

Image<std::uint8_t> difference_image(const Mask& a, const Mask& b);

/// Labels spread over 0..255 for viewing: neither 0, only_a 85, only_b 170, both 255.
Image8 difference_display(const Image<std::uint8_t>& labels);
nlohmann::json difference_legend();

nlohmann::json to_json(const MetricsReport& report);

const char* to_string(MaskSource source);

// --- template definitions -------------------------------------------------

template <typename Scalar>
HistogramBinning HistogramBinning::for_image(const Image<Scalar>& image)
{
    HistogramBinning b;
    if constexpr (std::is_same_v<Scalar, std::uint8_t>) {
        b.identity = true;
        return b;
    }
    const double lo = static_cast<double>(image.minCoeff());
    const double hi = static_cast<double>(image.maxCoeff());
    b.lo = lo;
    b.width = hi > lo ? (hi - lo) / bins : 1.0;
    return b;
}

template <typename Scalar>
LiThreshold li_threshold(const Image<Scalar>& image)
{
    if (image.size() == 0)
        throw Error(ErrorKind::degenerate_input, "li_threshold: empty image");
    const HistogramBinning binning = HistogramBinning::for_image(image);
    std::array<double, 256> hist{};
    for (Eigen::Index i = 0; i < image.size(); ++i)
        hist[static_cast<std::size_t>(binning.bin(static_cast<double>(image.data()[i])))] += 1.0;
    LiThreshold t = li_threshold_histogram(hist);
    t.binning = binning;
    t.value = binning.upper_edge(t.bin);
    return t;
}

}  // namespace octds
