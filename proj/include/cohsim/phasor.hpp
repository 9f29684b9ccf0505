#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace cohsim {

using Complex = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr Complex j1{0.0, 1.0};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * pi);
    if (w <= -pi) w += 2.0 * pi;
    return w;
}

/// Removes 2*pi jumps between consecutive samples.
inline std::vector<double> unwrap(std::span<const double> angles) {
    std::vector<double> out(angles.begin(), angles.end());
    for (std::size_t k = 1; k < out.size(); ++k) {
        out[k] = out[k - 1] + wrap_angle(angles[k] - angles[k - 1]);
    }
    return out;
}

/// d/q components in a frame rotated by `delta - pi/2` (machine convention:
/// v_d = |V| sin(delta - theta), v_q = |V| cos(delta - theta)).
struct DqPair {
    double d = 0.0;
    double q = 0.0;
};

inline DqPair to_dq(Complex x, double delta) {
    const Complex r = x * std::polar(1.0, pi / 2.0 - delta);
    return {r.real(), r.imag()};
}

inline Complex from_dq(DqPair p, double delta) {
    return Complex(p.d, p.q) * std::polar(1.0, delta - pi / 2.0);
}

}  // namespace cohsim
