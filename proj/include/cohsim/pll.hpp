#pragma once

#include <cmath>
#include <span>

#include "cohsim/phasor.hpp"

namespace cohsim {

/// Synchronous-reference-frame PLL with a PI regulator on the q-axis voltage:
///   w_pll = 1 + kp v_q + x_i,  dx_i/dt = ki v_q,  dtheta/dt = w_b (w_pll - 1)
/// Frequencies are per unit of nominal; theta is the phasor-frame angle.
struct Pll {
    struct Params {
        double kp = 0.1;
        double ki = 0.05;
        friend bool operator==(const Params&, const Params&) = default;
    };

    Params p;
    double omega_base = 2.0 * pi * 60.0;

    static constexpr std::size_t size = 2;
    static constexpr std::size_t kTheta = 0, kXi = 1;

    static double q_component(std::span<const double> x, Complex v) {
        return (v * std::polar(1.0, -x[kTheta])).imag();
    }
    double frequency(std::span<const double> x, Complex v) const {
        return 1.0 + p.kp * q_component(x, v) + x[kXi];
    }
    void derivatives(std::span<const double> x, Complex v, std::span<double> dx) const {
        const double vq = q_component(x, v);
        dx[kTheta] = omega_base * (p.kp * vq + x[kXi]);
        dx[kXi] = p.ki * vq;
    }
    void initialize(Complex v, std::span<double> x) const {
        x[kTheta] = std::arg(v);
        x[kXi] = 0.0;
    }
};

}  // namespace cohsim
