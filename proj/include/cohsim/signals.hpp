#pragma once

// Measurement chain: complex-frequency estimation, first-order communication
// delay and Ornstein-Uhlenbeck measurement noise.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cohsim/error.hpp"
#include "cohsim/phasor.hpp"
#include "cohsim/pll.hpp"

namespace cohsim {

/// Complex frequency of a phasor x = |x| e^{j phi}: rho = d ln|x| / dt (1/s)
/// and omega = d phi / dt (rad/s). Phasors live in the synchronous frame, so
/// `omega` is the deviation from nominal angular frequency.
struct CfEstimate {
    double rho = 0.0;
    double omega = 0.0;
    bool valid = true;

    Complex eta() const { return {rho, omega}; }
};

/// Causal complex-frequency estimator. The magnitude channel is a washout on
/// ln|x|, the phase channel a PLL tracking x/|x| whose PI gains place a
/// critically damped pair at 1/tau_f. Both channels have unity derivative gain
/// at low frequency. State layout: [m, theta, x_i].
class CfEstimator {
  public:
    static constexpr std::size_t size = 3;
    static constexpr std::size_t kLogMag = 0, kTheta = 1, kXi = 2;
    static constexpr double min_magnitude = 1e-6;

    explicit CfEstimator(double tau_f = 0.02, double omega_base = 2.0 * pi * 60.0)
        : tau_f_(tau_f), pll_{Pll::Params{2.0 / (tau_f * omega_base), 1.0 / (tau_f * tau_f * omega_base)}, omega_base} {
        if (!(tau_f > 0.0)) throw ConfigError("estimator time constant must be positive");
    }

    double tau_f() const { return tau_f_; }

    CfEstimate output(std::span<const double> x, Complex sig) const {
        const double mag = std::abs(sig);
        if (mag < min_magnitude) return {0.0, pll_.omega_base * x[kXi], false};
        std::array<double, 2> px{x[kTheta], x[kXi]};
        const double wpll = pll_.frequency(px, sig / mag);
        return {(std::log(mag) - x[kLogMag]) / tau_f_, pll_.omega_base * (wpll - 1.0), true};
    }

    void derivatives(std::span<const double> x, Complex sig, std::span<double> dx) const {
        const double mag = std::abs(sig);
        if (mag < min_magnitude) {
            dx[kLogMag] = dx[kTheta] = dx[kXi] = 0.0;
            return;
        }
        dx[kLogMag] = (std::log(mag) - x[kLogMag]) / tau_f_;
        std::array<double, 2> px{x[kTheta], x[kXi]};
        std::array<double, 2> dpx{};
        pll_.derivatives(px, sig / mag, dpx);
        dx[kTheta] = dpx[0];
        dx[kXi] = dpx[1];
    }

    void initialize(Complex sig, std::span<double> x) const {
        x[kLogMag] = std::log(std::max(std::abs(sig), min_magnitude));
        x[kTheta] = std::arg(sig);
        x[kXi] = 0.0;
    }

  private:
    double tau_f_;
    Pll pll_;
};

/// Runs the estimator over a uniformly sampled phasor stream (RK4, input
/// linearly interpolated between samples). Samples below the magnitude
/// threshold hold the last estimate and are flagged invalid.
inline std::vector<CfEstimate> estimate_cf(std::span<const Complex> samples, double h, double tau_f = 0.02,
                                           double omega_base = 2.0 * pi * 60.0) {
    std::vector<CfEstimate> out;
    if (samples.empty()) return out;
    const CfEstimator est(tau_f, omega_base);
    std::array<double, 3> x{};
    est.initialize(samples[0], x);
    out.push_back(est.output(x, samples[0]));
    auto f = [&](const std::array<double, 3>& s, Complex u) {
        std::array<double, 3> d{};
        est.derivatives(s, u, d);
        return d;
    };
    for (std::size_t k = 1; k < samples.size(); ++k) {
        const Complex u0 = samples[k - 1], u1 = samples[k], um = 0.5 * (u0 + u1);
        const auto k1 = f(x, u0);
        std::array<double, 3> tmp{};
        for (std::size_t i = 0; i < 3; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        const auto k2 = f(tmp, um);
        for (std::size_t i = 0; i < 3; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        const auto k3 = f(tmp, um);
        for (std::size_t i = 0; i < 3; ++i) tmp[i] = x[i] + h * k3[i];
        const auto k4 = f(tmp, u1);
        for (std::size_t i = 0; i < 3; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        CfEstimate e = est.output(x, u1);
        if (!e.valid) {
            e.rho = out.back().rho;
            e.omega = out.back().omega;
        }
        out.push_back(e);
    }
    return out;
}

struct IdentityResidual {
    double residual = 0.0;
    bool evaluated = false;
};

/// |int_{t0}^{t1} eta dt - (ln(|x1|/|x0|) + j dtheta)| with the integral taken
/// by the trapezoidal rule on the sample grid and the phase unwrapped. Not
/// evaluated when |x| comes within 1e-6 of zero inside the window.
inline IdentityResidual cf_integral_identity(std::span<const double> t, std::span<const Complex> x,
                                             std::span<const CfEstimate> eta, double t0, double t1) {
    if (t.size() != x.size() || t.size() != eta.size()) throw ConfigError("cf_integral_identity: length mismatch");
    std::size_t a = 0;
    while (a < t.size() && t[a] < t0 - 1e-12) ++a;
    std::size_t b = a;
    while (b + 1 < t.size() && t[b + 1] <= t1 + 1e-12) ++b;
    if (a >= t.size() || b <= a) return {};

    Complex integral{};
    double dtheta = 0.0;
    for (std::size_t k = a; k <= b; ++k) {
        if (std::abs(x[k]) < CfEstimator::min_magnitude) return {};
        if (k > a) {
            integral += 0.5 * (t[k] - t[k - 1]) * (eta[k].eta() + eta[k - 1].eta());
            dtheta += wrap_angle(std::arg(x[k]) - std::arg(x[k - 1]));
        }
    }
    const Complex endpoint{std::log(std::abs(x[b]) / std::abs(x[a])), dtheta};
    return {std::abs(integral - endpoint), true};
}

// ---------------------------------------------------------------------------

/// First-order lag applied to the real and imaginary parts of a phasor.
class FirstOrderDelay {
  public:
    static constexpr std::size_t size = 2;

    explicit FirstOrderDelay(double tau = 0.1) : tau_(tau) {
        if (!(tau > 0.0)) throw ConfigError("delay time constant must be positive");
    }

    double tau() const { return tau_; }
    bool under_resolved(double h) const { return tau_ < h; }

    // continuous form, used inside the DAE
    static Complex output(std::span<const double> x) { return {x[0], x[1]}; }
    void derivatives(std::span<const double> x, Complex input, std::span<double> dx) const {
        dx[0] = (input.real() - x[0]) / tau_;
        dx[1] = (input.imag() - x[1]) / tau_;
    }
    static void initialize(Complex input, std::span<double> x) {
        x[0] = input.real();
        x[1] = input.imag();
    }

    // sampled form: exact for inputs held over the step
    void reset(Complex value) { state_ = value; }
    Complex value() const { return state_; }
    Complex step(Complex input, double h) {
        state_ = input + (state_ - input) * std::exp(-h / tau_);
        return state_;
    }

  private:
    double tau_;
    Complex state_{};
};

inline Complex delay_step(FirstOrderDelay& delay, Complex input, double h) { return delay.step(input, h); }

struct OuParams {
    double sigma = 0.01;   ///< stationary standard deviation
    double alpha = 10.0;   ///< mean-reversion rate (1/s)
    double weight = 1.0;   ///< W
    std::uint64_t seed = 1;
    friend bool operator==(const OuParams&, const OuParams&) = default;
};

/// Ornstein-Uhlenbeck process with exact discretization:
///   n <- n e^{-alpha h} + sigma sqrt(1 - e^{-2 alpha h}) xi,  output W n.
/// Each channel owns its generator, seeded from (seed, channel).
class OuNoise {
  public:
    explicit OuNoise(OuParams p = {}, std::uint64_t channel = 0) : p_(p) {
        std::seed_seq seq{static_cast<std::uint32_t>(p.seed), static_cast<std::uint32_t>(p.seed >> 32),
                          static_cast<std::uint32_t>(channel), static_cast<std::uint32_t>(channel >> 32)};
        rng_.seed(seq);
    }

    const OuParams& params() const { return p_; }
    double state() const { return n_; }
    double value() const { return p_.weight * n_; }

    double step(double h) {
        const double decay = std::exp(-p_.alpha * h);
        const double xi = normal_(rng_);
        n_ = n_ * decay + p_.sigma * std::sqrt(1.0 - decay * decay) * xi;
        return value();
    }

  private:
    OuParams p_;
    double n_ = 0.0;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double ou_step(OuNoise& noise, double h) { return noise.step(h); }

}  // namespace cohsim
