#include "octds/segmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace octds {

int HistogramBinning::bin(double value) const
{
    const double b = identity ? std::floor(value) : std::floor((value - lo) / width);
    return static_cast<int>(std::clamp(b, 0.0, static_cast<double>(bins - 1)));
}

double li_cross_entropy(const std::array<double, 256>& h, int t)
{
    double nb = 0, sb = 0, nf = 0, sf = 0;
    for (int i = 0; i < 256; ++i) {
        const double g = i + 1.0;
        if (i <= t) {
            nb += h[i];
            sb += g * h[i];
        } else {
            nf += h[i];
            sf += g * h[i];
        }
    }
    if (nb <= 0.0 || nf <= 0.0)
        return std::numeric_limits<double>::infinity();
    return -(sb * std::log(sb / nb) + sf * std::log(sf / nf));
}

LiThreshold li_threshold_histogram(const std::array<double, 256>& h)
{
    std::vector<int> occupied;
    double n = 0.0, s = 0.0;
    for (int i = 0; i < 256; ++i) {
        if (h[i] > 0.0) {
            occupied.push_back(i);
            n += h[i];
            s += (i + 1.0) * h[i];
        }
    }
    if (occupied.size() < 2)
        throw Error(ErrorKind::degenerate_input, "li_threshold: image has fewer than two distinct values");

    // Li-Tam fixed point iteration on the level scale.
    LiThreshold out;
    double t = s / n;
    for (int it = 0; it < 1000; ++it) {
        out.iterations = it + 1;
        double nb = 0, sb = 0, nf = 0, sf = 0;
        for (int i : occupied) {
            const double g = i + 1.0;
            (g <= t ? nb : nf) += h[i];
            (g <= t ? sb : sf) += g * h[i];
        }
        if (nb <= 0.0 || nf <= 0.0)
            break;
        const double mb = sb / nb, mf = sf / nf;
        const double next = (mb - mf) / (std::log(mb) - std::log(mf));
        const bool done = std::abs(next - t) < 0.5;
        t = next;
        if (done)
            break;
    }

    // Thresholds only change the partition at occupied bins, so the
    // candidates are occupied[0 .. size-2] (background = bins <= candidate).
    // The fixed point seeds the choice; any candidate with strictly lower
    // cross entropy replaces it, since the iteration can stall in a local
    // minimum on multimodal histograms.
    const int fixed_bin = static_cast<int>(std::floor(t)) - 1;
    std::size_t j = 0;
    for (std::size_t k = 0; k + 1 < occupied.size(); ++k)
        if (occupied[k] <= fixed_bin)
            j = k;
    double best = li_cross_entropy(h, occupied[j]);
    for (std::size_t k = 0; k + 1 < occupied.size(); ++k) {
        const double e = li_cross_entropy(h, occupied[k]);
        if (e < best) {
            best = e;
            j = k;
        }
    }
    out.bin = occupied[j];
    out.value = out.bin + 0.5;
    return out;
}

const char* to_string(MaskSource source)
{
    switch (source) {
    case MaskSource::oct_depth: return "oct_depth";
    case MaskSource::oct_intensity: return "oct_intensity";
    case MaskSource::endo: return "endo";
    case MaskSource::ground_truth: return "ground_truth";
    }
    return "unknown";
}

PatternMask segment_image(const ImageD& image, Polarity polarity, MaskSource source, double* threshold_used)
{
    if (image.size() == 0)
        throw Error(ErrorKind::validation, "segment: empty channel");
    PatternMask out;
    out.source = source;
    out.mask = Mask::Constant(image.rows(), image.cols(), false);
    LiThreshold t;
    try {
        t = li_threshold(image);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::degenerate_input)
            throw;
        if (threshold_used)
            *threshold_used = image.size() ? image(0, 0) : 0.0;
        return out;
    }
    for (Eigen::Index i = 0; i < image.size(); ++i) {
        const bool above = t.binning.bin(image.data()[i]) > t.bin;
        out.mask.data()[i] = polarity == Polarity::bright ? above : !above;
    }
    if (threshold_used)
        *threshold_used = t.value;
    return out;
}

PatternMask segment(const SurfaceMap& map, Channel channel, Polarity intensity_polarity, double* threshold_used)
{
    if (channel == Channel::depth)
        return segment_image(map.depth, Polarity::bright, MaskSource::oct_depth, threshold_used);
    return segment_image(map.intensity.cast<double>(), intensity_polarity, MaskSource::oct_intensity,
                         threshold_used);
}

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* who)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorKind::validation, std::string(who) + ": mask shapes differ (" + std::to_string(a.rows()) +
                                               "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                               "x" + std::to_string(b.cols()) + ")");
}

}  // namespace

MetricsReport jaccard(const Mask& a, const Mask& b)
{
    require_same_shape(a, b, "jaccard");
    MetricsReport r;
    r.a_px = a.count();
    r.b_px = b.count();
    r.intersection_px = (a && b).count();
    r.union_px = (a || b).count();
    r.jaccard = r.union_px == 0 ? 1.0 : static_cast<double>(r.intersection_px) / static_cast<double>(r.union_px);
    return r;
}

Image<std::uint8_t> difference_image(const Mask& a, const Mask& b)
{
    require_same_shape(a, b, "difference_image");
    return a.cast<std::uint8_t>() + std::uint8_t{2} * b.cast<std::uint8_t>();
}

Image8 difference_display(const Image<std::uint8_t>& labels)
{
    return labels * std::uint8_t{85};
}

nlohmann::json difference_legend()
{
    return {{"neither", 0}, {"only_a", 85}, {"only_b", 170}, {"both", 255}};
}

nlohmann::json to_json(const MetricsReport& r)
{
    return {{"jaccard", r.jaccard},   {"intersection_px", r.intersection_px}, {"union_px", r.union_px},
            {"a_px", r.a_px},         {"b_px", r.b_px},                       {"threshold_used", r.threshold_used}};
}

}  // namespace octds
