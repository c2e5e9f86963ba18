#pragma once

#include <cmath>

namespace octds {

/// f(x) = A sin(omega x + phi) + D, x in angle columns, f in depth rows.
/// Amplitude is kept non-negative; a sign flip is folded into the phase.
struct SineModel {
    double amplitude = 0.0;
    double omega = 0.0;
    double phase = 0.0;  // [-pi, pi)
    double offset = 0.0;

    double operator()(double x) const { return amplitude * std::sin(omega * x + phase) + offset; }
};

/// Wraps into [-pi, pi).
inline double wrap_angle(double a)
{
    constexpr double two_pi = 2.0 * M_PI;
    a = std::fmod(a + M_PI, two_pi);
    if (a < 0.0)
        a += two_pi;
    return a - M_PI;
}

}  // namespace octds
