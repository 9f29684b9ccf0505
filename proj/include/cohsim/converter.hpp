#pragma once

// Grid-following inverter with the coherency controller. The controller
// scales a measured remote current by a complex gain fixed at t = 0 and turns
// the result into power references for the converter's current loops.

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "cohsim/error.hpp"
#include "cohsim/machines.hpp"
#include "cohsim/phasor.hpp"
#include "cohsim/pll.hpp"
#include "cohsim/signals.hpp"

namespace cohsim {

enum class CoherencyMode { Complex, Conventional };

inline std::string to_string(CoherencyMode m) { return m == CoherencyMode::Complex ? "complex" : "conventional"; }

inline CoherencyMode parse_mode(const std::string& s) {
    if (s == "complex") return CoherencyMode::Complex;
    if (s == "conventional") return CoherencyMode::Conventional;
    throw ConfigError("unknown coherency mode '" + s + "' (expected complex|conventional)");
}

struct CoherencyGain {
    double k_i = 1.0;
    double theta_k = 0.0;
};

/// Gain that maps the reference current onto the local current at t = 0.
inline CoherencyGain init_gain(Complex i_local_0, Complex i_ext_0) {
    if (std::abs(i_ext_0) < 1e-9) throw InitError("reference device injects no current at t = 0");
    return {std::abs(i_local_0) / std::abs(i_ext_0), wrap_angle(std::arg(i_local_0) - std::arg(i_ext_0))};
}

struct CoherencyController {
    std::string reference_device;
    double k_i = 1.0;
    double theta_k = 0.0;
    double share = 1.0;  ///< C
    CoherencyMode mode = CoherencyMode::Complex;
    double i_mag_0 = 0.0;

    Complex gain() const { return std::polar(k_i, theta_k); }
};

/// Complex mode: k_i |i| at angle(i) + theta_k. Conventional mode keeps the
/// magnitude at its t = 0 value and follows the phase only.
inline Complex coherency_reference(Complex i_ext_meas, const CoherencyController& c) {
    const double phase = std::arg(i_ext_meas) + c.theta_k;
    if (c.mode == CoherencyMode::Conventional) return std::polar(c.i_mag_0, phase);
    return std::polar(c.k_i * std::abs(i_ext_meas), phase);
}

/// S_ref = v conj(i_ref): the power that injects `i_ref` at terminal voltage `v`.
inline Complex power_reference(Complex v_term, Complex i_ref) { return v_term * std::conj(i_ref); }

/// Grid-following current control in the PLL frame: algebraic voltage loop
/// (dq current references from the power references and the PLL-frame
/// voltage) followed by first-order current loops.
struct GflConverter {
    double tau_idq = 0.01;
    double min_voltage = 0.01;

    static constexpr std::size_t size = 2;

    static Complex dq_current(std::span<const double> x) { return {x[0], x[1]}; }

    Complex current_reference(Complex s_ref, Complex v_pll) const { return std::conj(s_ref / v_pll); }

    void derivatives(std::span<const double> x, Complex s_ref, Complex v_pll, std::span<double> dx) const {
        if (std::abs(v_pll) < min_voltage) {
            dx[0] = dx[1] = 0.0;
            return;
        }
        const Complex i_ref = current_reference(s_ref, v_pll);
        dx[0] = (i_ref.real() - x[0]) / tau_idq;
        dx[1] = (i_ref.imag() - x[1]) / tau_idq;
    }
};

struct MeasurementChain {
    double delay_tau = 0.0;            ///< 0 disables the delay block
    std::optional<OuParams> noise;
    double noise_base = 1.0;           ///< current base of the noise (system pu)
    bool noise_relative = false;       ///< base is the reference current magnitude at t = 0
    double estimator_tau = 0.02;

    friend bool operator==(const MeasurementChain&, const MeasurementChain&) = default;
};

/// Inverter with coherency control. State layout: [pll | i_d, i_q | delay].
class InverterUnit {
  public:
    InverterUnit() = default;
    InverterUnit(Pll pll, GflConverter conv, CoherencyController ctrl, MeasurementChain chain, double rating_mva)
        : pll_(pll), conv_(conv), ctrl_(std::move(ctrl)), chain_(std::move(chain)), rating_mva_(rating_mva) {
        if (chain_.delay_tau > 0.0) delay_.emplace(chain_.delay_tau);
    }

    const Pll& pll() const { return pll_; }
    const GflConverter& converter() const { return conv_; }
    const CoherencyController& controller() const { return ctrl_; }
    const MeasurementChain& chain() const { return chain_; }
    const std::optional<FirstOrderDelay>& delay() const { return delay_; }
    double rating_mva() const { return rating_mva_; }

    static constexpr std::size_t kPll = 0, kConv = 2, kDelay = 4;
    std::size_t size() const { return 4 + (delay_ ? FirstOrderDelay::size : 0); }

    Complex injected_current(std::span<const double> x) const {
        return GflConverter::dq_current(x.subspan(kConv)) * std::polar(1.0, x[kPll + Pll::kTheta]);
    }
    double pll_frequency(std::span<const double> x, Complex v) const { return pll_.frequency(x.subspan(kPll), v); }

    /// Remote current as seen by the controller: delayed, plus noise.
    Complex measured_reference(std::span<const double> x, Complex i_ext, Complex noise) const {
        return (delay_ ? FirstOrderDelay::output(x.subspan(kDelay)) : i_ext) + noise;
    }

    Complex current_reference(std::span<const double> x, Complex i_ext, Complex noise) const {
        return coherency_reference(measured_reference(x, i_ext, noise), ctrl_);
    }

    void derivatives(std::span<const double> x, Complex v, Complex i_ext, Complex noise, std::span<double> dx) const {
        const Complex s_ref = power_reference(v, current_reference(x, i_ext, noise));
        pll_.derivatives(x.subspan(kPll), v, dx.subspan(kPll));
        const Complex v_pll = v * std::polar(1.0, -x[kPll + Pll::kTheta]);
        conv_.derivatives(x.subspan(kConv), s_ref, v_pll, dx.subspan(kConv));
        if (delay_) delay_->derivatives(x.subspan(kDelay), i_ext, dx.subspan(kDelay));
    }

    /// Equilibrium for output power `s` at voltage `v`; fixes the coherency
    /// gain against the reference current `i_ext_0`.
    void initialize(Complex s, Complex v, Complex i_ext_0, std::span<double> x) {
        pll_.initialize(v, x.subspan(kPll));
        const Complex i0 = std::conj(s / v);
        const Complex idq = i0 * std::polar(1.0, -x[kPll + Pll::kTheta]);
        x[kConv] = idq.real();
        x[kConv + 1] = idq.imag();
        if (delay_) FirstOrderDelay::initialize(i_ext_0, x.subspan(kDelay));
        const CoherencyGain g = init_gain(i0, i_ext_0);
        ctrl_.k_i = g.k_i;
        ctrl_.theta_k = g.theta_k;
        ctrl_.i_mag_0 = std::abs(i0);
    }

  private:
    Pll pll_;
    GflConverter conv_;
    CoherencyController ctrl_;
    MeasurementChain chain_;
    std::optional<FirstOrderDelay> delay_;
    double rating_mva_ = 0.0;
};

/// A generating device at one bus: a synchronous machine carrying (1 - C) of
/// the rating and dispatch, and a coherency-controlled inverter carrying C.
struct HybridDevice {
    std::string id;
    int bus = 0;
    double share = 0.0;
    std::optional<SynchronousUnit> sm;
    std::optional<InverterUnit> ibr;

    /// t = 0 power split at a common terminal voltage.
    Complex sm_dispatch(Complex s0) const { return (1.0 - share) * s0; }
    Complex ibr_dispatch(Complex s0) const { return share * s0; }
};

struct CoherencySettings {
    std::string reference_device;
    CoherencyMode mode = CoherencyMode::Complex;
    Pll::Params pll{};
    double tau_idq = 0.01;
    MeasurementChain chain{};
};

/// Splits a synchronous unit into machine and inverter shares. C = 0 leaves
/// the machine untouched, C = 1 replaces it by an inverter.
inline HybridDevice split_device(std::string id, int bus, const SynchronousUnit& original, double share,
                                 const CoherencySettings& settings) {
    if (!(share >= 0.0 && share <= 1.0)) {
        throw ConfigError(id + ": coherency share C=" + std::to_string(share) + " outside [0, 1]");
    }
    HybridDevice dev;
    dev.id = std::move(id);
    dev.bus = bus;
    dev.share = share;
    const auto& m = original.machine();
    if (share < 1.0) {
        MachineParams p = m.params();
        p.rating_mva *= (1.0 - share);
        const double system_mva = m.params().rating_mva / m.base_ratio();
        dev.sm.emplace(SynchronousMachine(p, system_mva, m.omega_base()), original.avr(), original.governor(),
                       original.pss());
    }
    if (share > 0.0) {
        if (settings.reference_device == dev.id) throw ConfigError(dev.id + ": device cannot reference itself");
        CoherencyController ctrl;
        ctrl.reference_device = settings.reference_device;
        ctrl.share = share;
        ctrl.mode = settings.mode;
        dev.ibr.emplace(Pll{settings.pll, m.omega_base()}, GflConverter{settings.tau_idq}, ctrl, settings.chain,
                        share * m.params().rating_mva);
    }
    return dev;
}

}  // namespace cohsim
