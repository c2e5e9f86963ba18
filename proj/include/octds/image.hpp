#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace octds {

/// Dense 2D raster. Row-major so that one A-scan (or one image row) is contiguous.
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Image16 = Image<std::uint16_t>;
using Image8 = Image<std::uint8_t>;
using ImageD = Image<double>;
using Mask = Image<bool>;

enum class ErrorKind {
    validation,
    io,
    format,
    range,
    configuration,
    insufficient_data,
    fit_rejected,
    no_candidates,
    degenerate_input,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline double clamp_u16(double v)
{
    return v < 0.0 ? 0.0 : (v > 65535.0 ? 65535.0 : v);
}

template <typename Scalar>
Scalar saturate_cast(double v);

template <>
inline double saturate_cast<double>(double v)
{
    return v;
}

template <>
inline float saturate_cast<float>(double v)
{
    return static_cast<float>(v);
}

template <>
inline std::uint16_t saturate_cast<std::uint16_t>(double v)
{
    return static_cast<std::uint16_t>(clamp_u16(v) + 0.5);
}

template <>
inline std::uint8_t saturate_cast<std::uint8_t>(double v)
{
    v = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
    return static_cast<std::uint8_t>(v + 0.5);
}

}  // namespace octds
