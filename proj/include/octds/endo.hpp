#pragma once

#include "octds/image.hpp"
#include "octds/phantom.hpp"

#include <optional>
#include <span>
#include <vector>

namespace octds {

struct Panorama {
    Image8 image;  // [axial rows x angle columns]
    double um_per_row = 0.0;
    double um_per_column = 0.0;  // along the circumference at the hole radius; 0 if unknown
};

/// Polar-to-Cartesian unrolling. Stripe row j samples radius
/// r_inner + j (r_outer - r_inner) / (rows - 1) with rows = round(r_outer -
/// r_inner) + 1; column c samples angle 2 pi c / columns. Bilinear.
Image8 unroll_frame(const AnnulusFrame& frame, int columns);

/// Axial distance between adjacent stripe rows of `frame`.
double stripe_um_per_row(const AnnulusFrame& frame);

/// Each stripe contributes round(feed_step / um_per_row) rows taken from its
/// centre. Bands go to row k * h by default, or to round(offset / um_per_row)
/// when `band_offsets` (µm) is given; where bands overlap the later one wins.
Panorama stitch(std::span<const Image8> stripes, double feed_step, double um_per_row,
                std::optional<std::span<const double>> band_offsets = std::nullopt);

/// Unrolls every frame and stitches the stripes at their frame positions
/// (band offset = axial_position - feed_step / 2), so clamped end frames land
/// where they were taken.
Panorama stitch_frames(std::span<const AnnulusFrame> frames, double feed_step, int columns, unsigned threads = 1);

/// Axial position (µm) of every row of stitch_frames' panorama.
std::vector<double> panorama_row_positions(std::span<const AnnulusFrame> frames, double feed_step);

/// Ground-truth reflectivity (0..255) sampled at the given axial positions
/// and `columns` equally spaced angles.
Image8 unrolled_reflectivity(const PhantomGeometry& geom, std::span<const double> axial_positions, int columns);

/// Zero-mean normalized cross-correlation of two equally sized images.
double normalized_cross_correlation(const ImageD& a, const ImageD& b);

}  // namespace octds
