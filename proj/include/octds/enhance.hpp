#pragma once

#include "octds/image.hpp"
#include "octds/raw_io.hpp"

namespace octds {

struct EnhanceParams {
    bool denoise = true;
    double threshold_scale = 1.0;  // multiplies the universal threshold
    int tiles_x = 8;               // CLAHE grid along the depth axis
    int tiles_y = 8;               // CLAHE grid along the angle axis
    double clip_limit = 2.0;       // relative to the mean bin count of a tile
    int bins = 256;
};

/// Single-level orthonormal Haar transform; detail bands are soft-thresholded
/// with the universal threshold sigma * sqrt(2 ln N), where sigma is the
/// median absolute HH coefficient / 0.6745. An odd trailing row or column is
/// passed through unchanged.
ImageD wavelet_denoise(const ImageD& image, double threshold_scale = 1.0);

/// The threshold wavelet_denoise would apply to `image`.
double universal_threshold(const ImageD& image);

/// Contrast limited adaptive histogram equalization with bilinear blending
/// between tile mappings. Output spans [0, 65535]. A constant image is
/// returned unchanged.
Image16 clahe(const Image16& image, int tiles_x, int tiles_y, double clip_limit, int bins = 256);

/// clahe(wavelet_denoise(slice)). Throws ErrorKind::configuration when the
/// tile grid does not fit the image.
BScanPolar enhance(const BScanPolar& slice, const EnhanceParams& params = {});

}  // namespace octds
