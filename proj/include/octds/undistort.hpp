#pragma once

#include "octds/image.hpp"
#include "octds/raw_io.hpp"
#include "octds/sine_model.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace octds {

/// Pixel coordinate of a border candidate: u = angle column, v = depth row.
struct BorderPoint {
    double u = 0.0;
    double v = 0.0;
};

struct BinarizeParams {
    int window = 31;
    /// Local offset C in 8-bit grey levels; scaled by 257 on 16-bit slices.
    double offset = 5.0;
    /// Border search band, depth rows [band_lo, band_hi). band_hi < 0 means
    /// "to the last row".
    int band_lo = 0;
    int band_hi = -1;
    /// Foreground additionally needs this fraction of the band maximum.
    double min_level = 0.5;
};

/// Foreground pixels of the adaptive threshold I > local_mean + C inside the
/// border band. Throws ErrorKind::no_candidates when nothing survives.
std::vector<BorderPoint> binarize_border(const BScanPolar& slice, const BinarizeParams& params = {});

struct RansacParams {
    double tol_samples = 3.0;
    int max_iterations = 500;
    double min_inlier_fraction = 0.5;
    double omega_span = 0.02;  // relative half-width of the omega grid
    int omega_steps = 9;
    double confidence = 0.9999;  // adaptive stopping
};

struct FitReport {
    SineModel model;
    double inlier_fraction = 0.0;
    double residual_rms = 0.0;
    int iterations_used = 0;
    bool rejected = false;
};

class FitRejected : public Error {
public:
    explicit FitRejected(FitReport report);
    const FitReport& report() const { return report_; }

private:
    FitReport report_;
};

/// RANSAC over minimal three-point samples. For every omega on a narrow grid
/// around 2 pi / width the remaining parameters follow in closed form from
/// the (sin, cos, 1) basis; the best consensus is refit on its inliers.
///
/// Throws ErrorKind::insufficient_data for fewer than 4 points and
/// FitRejected when the inlier fraction falls below min_inlier_fraction.
FitReport fit_sine(std::span<const BorderPoint> points, int width, const RansacParams& params, std::uint64_t seed);

enum class Interpolation { linear, nearest };

/// Shifts column u by -(f(u) - D): out(u, v) = in(u, v + f(u) - D).
/// Samples that fall outside the column are zero.
template <typename Scalar>
Image<Scalar> unwarp(const Image<Scalar>& in, const SineModel& model, Interpolation mode = Interpolation::linear)
{
    const Eigen::Index columns = in.rows();
    const Eigen::Index depth = in.cols();
    Image<Scalar> out = Image<Scalar>::Zero(columns, depth);
    for (Eigen::Index u = 0; u < columns; ++u) {
        const double shift = model(static_cast<double>(u)) - model.offset;
        for (Eigen::Index v = 0; v < depth; ++v) {
            const double p = static_cast<double>(v) + shift;
            if (mode == Interpolation::nearest) {
                const double r = std::round(p);
                if (r >= 0.0 && r <= static_cast<double>(depth - 1))
                    out(u, v) = in(u, static_cast<Eigen::Index>(r));
                continue;
            }
            if (p < 0.0 || p > static_cast<double>(depth - 1))
                continue;
            const auto i0 = static_cast<Eigen::Index>(std::floor(p));
            const double t = p - static_cast<double>(i0);
            if (t == 0.0 || i0 + 1 >= depth) {
                out(u, v) = in(u, i0);
                continue;
            }
            const double value = (1.0 - t) * static_cast<double>(in(u, i0)) + t * static_cast<double>(in(u, i0 + 1));
            out(u, v) = saturate_cast<Scalar>(value);
        }
    }
    return out;
}

BScanPolar unwarp(const BScanPolar& slice, const SineModel& model, Interpolation mode = Interpolation::linear);

}  // namespace octds
