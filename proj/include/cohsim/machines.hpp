#pragma once

// Synchronous machine models (6th-order subtransient, 4th-order two-axis)
// and their controls: simplified IEEE DC-1 and AC4 exciters, a Type I
// turbine governor and a Type 2 power system stabilizer.
//
// Machine quantities are per unit on the machine rating; currents handed to
// the network are converted to the system base with `base_ratio`.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "cohsim/error.hpp"
#include "cohsim/phasor.hpp"

namespace cohsim {

struct MachineParams {
    int order = 6;
    double h = 6.5;       ///< inertia constant (s, machine base)
    double d = 0.0;       ///< damping (pu torque / pu speed)
    double ra = 0.0025;
    double xd = 1.8;
    double xq = 1.7;
    double xd1 = 0.3;
    double xq1 = 0.55;
    double xd2 = 0.25;
    double xq2 = 0.25;
    double td01 = 8.0;
    double tq01 = 0.4;
    double td02 = 0.03;
    double tq02 = 0.05;
    double rating_mva = 900.0;

    friend bool operator==(const MachineParams&, const MachineParams&) = default;

    void validate(const std::string& who) const {
        if (order != 4 && order != 6) throw ConfigError(who + ": machine order must be 4 or 6");
        if (!(h > 0.0)) throw ConfigError(who + ": H must be positive");
        if (!(rating_mva > 0.0)) throw ConfigError(who + ": rating must be positive");
        if (!(xd1 <= xd) || !(xq1 <= xq)) throw ConfigError(who + ": transient reactances exceed synchronous");
        if (order == 6 && (!(xd2 <= xd1) || !(xq2 <= xq1))) {
            throw ConfigError(who + ": subtransient reactances exceed transient");
        }
        if (!(td01 > 0.0) || !(tq01 > 0.0) || (order == 6 && (!(td02 > 0.0) || !(tq02 > 0.0)))) {
            throw ConfigError(who + ": open-circuit time constants must be positive");
        }
    }
};

/// Norton equivalent of a device at its terminal: I = y * V + i_src.
struct NortonPair {
    Complex y{};
    Complex i_src{};
};

struct MachineInit {
    std::array<double, 6> states{};
    double efd = 0.0;
    double pm = 0.0;
};

class SynchronousMachine {
  public:
    static constexpr std::size_t kDelta = 0, kOmega = 1, kEq1 = 2, kEd1 = 3, kEq2 = 4, kEd2 = 5;

    SynchronousMachine() = default;
    SynchronousMachine(MachineParams p, double system_mva, double omega_base)
        : p_(p), base_ratio_(p.rating_mva / system_mva), omega_base_(omega_base) {}

    const MachineParams& params() const { return p_; }
    std::size_t size() const { return static_cast<std::size_t>(p_.order); }
    double base_ratio() const { return base_ratio_; }
    double omega_base() const { return omega_base_; }

    /// Internal EMF behind the stator reactances (e'' for order 6, e' for 4).
    DqPair emf(std::span<const double> x) const {
        return p_.order == 6 ? DqPair{x[kEd2], x[kEq2]} : DqPair{x[kEd1], x[kEq1]};
    }
    double xd_stator() const { return p_.order == 6 ? p_.xd2 : p_.xd1; }
    double xq_stator() const { return p_.order == 6 ? p_.xq2 : p_.xq1; }

    /// Stator dq currents (machine base) for terminal voltage `v`.
    DqPair stator_currents(std::span<const double> x, Complex v) const {
        const DqPair vdq = to_dq(v, x[kDelta]);
        const DqPair e = emf(x);
        const double xd = xd_stator(), xq = xq_stator(), ra = p_.ra;
        const double det = ra * ra + xd * xq;
        const double a = e.d - vdq.d, b = e.q - vdq.q;
        return {(ra * a + xq * b) / det, (ra * b - xd * a) / det};
    }

    /// Current injected into the network, system base.
    Complex injected_current(std::span<const double> x, Complex v) const {
        return from_dq(stator_currents(x, v), x[kDelta]) * base_ratio_;
    }

    NortonPair stator_algebra(std::span<const double> x, Complex v) const {
        const Complex y = base_ratio_ / Complex(p_.ra, 0.5 * (xd_stator() + xq_stator()));
        return {y, injected_current(x, v) - y * v};
    }

    /// Air-gap power, machine base.
    double electrical_power(DqPair vdq, DqPair idq) const {
        return vdq.d * idq.d + vdq.q * idq.q + p_.ra * (idq.d * idq.d + idq.q * idq.q);
    }

    /// State derivatives from terminal voltage and stator currents (both dq,
    /// machine base), field voltage and mechanical power.
    void derivatives(std::span<const double> x, DqPair vdq, DqPair idq, double efd, double pm,
                     std::span<double> dx) const {
        const double w = x[kOmega];
        const double pe = electrical_power(vdq, idq);
        dx[kDelta] = omega_base_ * (w - 1.0);
        dx[kOmega] = (pm - pe - p_.d * (w - 1.0)) / (2.0 * p_.h);
        dx[kEq1] = (efd - x[kEq1] - (p_.xd - p_.xd1) * idq.d) / p_.td01;
        dx[kEd1] = (-x[kEd1] + (p_.xq - p_.xq1) * idq.q) / p_.tq01;
        if (p_.order == 6) {
            dx[kEq2] = (x[kEq1] - x[kEq2] - (p_.xd1 - p_.xd2) * idq.d) / p_.td02;
            dx[kEd2] = (x[kEd1] - x[kEd2] + (p_.xq1 - p_.xq2) * idq.q) / p_.tq02;
        }
    }

    void derivatives(std::span<const double> x, Complex v, double efd, double pm, std::span<double> dx) const {
        derivatives(x, to_dq(v, x[kDelta]), stator_currents(x, v), efd, pm, dx);
    }

    /// Equilibrium states for the terminal power `s` (system base) at voltage `v`.
    MachineInit initialize(Complex s, Complex v) const {
        const Complex i_m = std::conj(s / v) / base_ratio_;
        const Complex e_q = v + Complex(p_.ra, p_.xq) * i_m;
        const double delta = std::arg(e_q);
        const DqPair vdq = to_dq(v, delta);
        const DqPair idq = to_dq(i_m, delta);
        MachineInit init;
        auto& st = init.states;
        st[kDelta] = delta;
        st[kOmega] = 1.0;
        st[kEd1] = (p_.xq - p_.xq1) * idq.q;
        if (p_.order == 6) {
            st[kEd2] = vdq.d + p_.ra * idq.d - p_.xq2 * idq.q;
            st[kEq2] = vdq.q + p_.ra * idq.q + p_.xd2 * idq.d;
            st[kEq1] = st[kEq2] + (p_.xd1 - p_.xd2) * idq.d;
        } else {
            st[kEq1] = vdq.q + p_.ra * idq.q + p_.xd1 * idq.d;
        }
        init.efd = st[kEq1] + (p_.xd - p_.xd1) * idq.d;
        init.pm = electrical_power(vdq, idq);
        if (!std::isfinite(init.efd) || init.efd <= 0.0) {
            throw InitError("operating point P=" + std::to_string(s.real()) + " Q=" + std::to_string(s.imag()) +
                            " needs non-positive field voltage");
        }
        return init;
    }

  private:
    MachineParams p_;
    double base_ratio_ = 1.0;
    double omega_base_ = 2.0 * pi * 60.0;
};

// ---------------------------------------------------------------------------
// Exciters

/// Simplified IEEE DC-1 (no saturation, no transducer lag):
///   Vr = Ka/(1+sTa) (Vref - Vt + Vs - Vf), limited to [vr_min, vr_max]
///   Efd = 1/(Ke + sTe) Vr
///   Vf = sKf/(1+sTf) Efd
struct AvrDc1 {
    struct Params {
        double ka = 20.0, ta = 0.055, ke = 1.0, te = 0.36, kf = 0.125, tf = 1.8;
        double vr_max = 5.0, vr_min = -5.0;
        friend bool operator==(const Params&, const Params&) = default;
    } p;

    static constexpr std::size_t size = 3;
    static constexpr std::size_t kVr = 0, kEfd = 1, kXf = 2;

    double regulator_output(std::span<const double> x) const { return std::clamp(x[kVr], p.vr_min, p.vr_max); }
    double field_voltage(std::span<const double> x) const { return x[kEfd]; }

    void derivatives(std::span<const double> x, double vt, double vref, double vs, std::span<double> dx) const {
        const double vf = p.kf / p.tf * (x[kEfd] - x[kXf]);
        dx[kVr] = (p.ka * (vref - vt + vs - vf) - x[kVr]) / p.ta;
        dx[kEfd] = (regulator_output(x) - p.ke * x[kEfd]) / p.te;
        dx[kXf] = (x[kEfd] - x[kXf]) / p.tf;
    }

    /// Returns the voltage reference that holds `efd` at terminal voltage `vt`.
    double initialize(double efd, double vt, std::span<double> x) const {
        x[kVr] = p.ke * efd;
        x[kEfd] = efd;
        x[kXf] = efd;
        if (x[kVr] > p.vr_max || x[kVr] < p.vr_min) {
            throw InitError("DC-1 regulator output " + std::to_string(x[kVr]) + " outside limits");
        }
        return vt + x[kVr] / p.ka;
    }
};

/// IEEE AC4 without the field-current term:
///   y  = (1+sTc)/(1+sTb) (Vref - Vt + Vs)
///   Efd = Ka/(1+sTa) y, limited to [vr_min, vr_max]
struct AvrAc4 {
    struct Params {
        double tc = 1.0, tb = 10.0, ka = 200.0, ta = 0.015, vr_max = 5.64, vr_min = -4.53;
        friend bool operator==(const Params&, const Params&) = default;
    } p;

    static constexpr std::size_t size = 2;
    static constexpr std::size_t kLl = 0, kVr = 1;

    double field_voltage(std::span<const double> x) const { return std::clamp(x[kVr], p.vr_min, p.vr_max); }
    double regulator_output(std::span<const double> x) const { return field_voltage(x); }

    void derivatives(std::span<const double> x, double vt, double vref, double vs, std::span<double> dx) const {
        const double u = vref - vt + vs;
        const double y = x[kLl] + p.tc / p.tb * (u - x[kLl]);
        dx[kLl] = (u - x[kLl]) / p.tb;
        dx[kVr] = (p.ka * y - x[kVr]) / p.ta;
    }

    double initialize(double efd, double vt, std::span<double> x) const {
        if (efd > p.vr_max || efd < p.vr_min) {
            throw InitError("AC4 field voltage " + std::to_string(efd) + " outside limits");
        }
        x[kVr] = efd;
        x[kLl] = efd / p.ka;
        return vt + x[kLl];
    }
};

using Avr = std::variant<AvrDc1, AvrAc4>;

// ---------------------------------------------------------------------------
// Turbine governor

/// Type I governor (servo, transient gain reduction, reheat):
///   Tin = Pref + (1 - w)/R, limited to [t_min, t_max]
///   Pm  = (1+sT3)/(1+sTc) (1+sT4)/(1+sT5) 1/(1+sTs) Tin
struct TurbineGovernorType1 {
    struct Params {
        double r = 0.05, t_max = 1.2, t_min = 0.0, ts = 0.1, tc = 0.45, t3 = 0.0, t4 = 12.0, t5 = 50.0;
        friend bool operator==(const Params&, const Params&) = default;
    } p;

    static constexpr std::size_t size = 3;

    double governor_input(double omega, double pref) const {
        return std::clamp(pref + (1.0 - omega) / p.r, p.t_min, p.t_max);
    }
    double mechanical_power(std::span<const double> x) const {
        return x[2] + p.t4 / p.t5 * (x[1] + p.t3 / p.tc * x[0]);
    }
    void derivatives(std::span<const double> x, double omega, double pref, std::span<double> dx) const {
        const double tin = governor_input(omega, pref);
        dx[0] = (tin - x[0]) / p.ts;
        dx[1] = ((1.0 - p.t3 / p.tc) * x[0] - x[1]) / p.tc;
        dx[2] = ((1.0 - p.t4 / p.t5) * (x[1] + p.t3 / p.tc * x[0]) - x[2]) / p.t5;
    }
    /// Returns the power reference for mechanical power `pm` at nominal speed.
    double initialize(double pm, std::span<double> x) const {
        if (pm > p.t_max || pm < p.t_min) {
            throw InitError("governor set point " + std::to_string(pm) + " outside limits");
        }
        x[0] = pm;
        x[1] = (1.0 - p.t3 / p.tc) * pm;
        x[2] = (1.0 - p.t4 / p.t5) * pm;
        return pm;
    }
};

// ---------------------------------------------------------------------------
// Power system stabilizer

/// Type 2 PSS on speed deviation: washout, two lead-lags, output limits.
struct Pss2 {
    struct Params {
        double kw = 10.0, tw = 10.0, t1 = 0.3, t2 = 0.05, t3 = 0.3, t4 = 0.05, vs_max = 0.1, vs_min = -0.1;
        friend bool operator==(const Params&, const Params&) = default;
    } p;

    static constexpr std::size_t size = 3;

    double output(std::span<const double> x, double omega) const {
        const double y1 = p.kw * (omega - 1.0) - x[0];
        const double y2 = x[1] + p.t1 / p.t2 * (y1 - x[1]);
        const double y3 = x[2] + p.t3 / p.t4 * (y2 - x[2]);
        return std::clamp(y3, p.vs_min, p.vs_max);
    }
    void derivatives(std::span<const double> x, double omega, std::span<double> dx) const {
        const double u = p.kw * (omega - 1.0);
        const double y1 = u - x[0];
        const double y2 = x[1] + p.t1 / p.t2 * (y1 - x[1]);
        dx[0] = (u - x[0]) / p.tw;
        dx[1] = (y1 - x[1]) / p.t2;
        dx[2] = (y2 - x[2]) / p.t4;
    }
    void initialize(double omega, std::span<double> x) const {
        x[0] = p.kw * (omega - 1.0);
        x[1] = 0.0;
        x[2] = 0.0;
    }
};

// ---------------------------------------------------------------------------

/// A synchronous machine with its optional controls. The state slice is laid
/// out as [machine | avr | governor | pss].
class SynchronousUnit {
  public:
    SynchronousUnit() = default;
    SynchronousUnit(SynchronousMachine m, std::optional<Avr> avr, std::optional<TurbineGovernorType1> gov,
                    std::optional<Pss2> pss)
        : machine_(std::move(m)), avr_(std::move(avr)), gov_(std::move(gov)), pss_(std::move(pss)) {}

    const SynchronousMachine& machine() const { return machine_; }
    const std::optional<Avr>& avr() const { return avr_; }
    const std::optional<TurbineGovernorType1>& governor() const { return gov_; }
    const std::optional<Pss2>& pss() const { return pss_; }
    double vref() const { return vref_; }
    double pref() const { return pref_; }

    std::size_t avr_size() const {
        return avr_ ? std::visit([](const auto& a) { return a.size; }, *avr_) : 0;
    }
    std::size_t size() const {
        return machine_.size() + avr_size() + (gov_ ? TurbineGovernorType1::size : 0) +
               (pss_ ? Pss2::size : 0);
    }
    std::size_t avr_offset() const { return machine_.size(); }
    std::size_t gov_offset() const { return avr_offset() + avr_size(); }
    std::size_t pss_offset() const { return gov_offset() + (gov_ ? TurbineGovernorType1::size : 0); }

    double omega(std::span<const double> x) const { return x[SynchronousMachine::kOmega]; }

    double field_voltage(std::span<const double> x) const {
        if (!avr_) return efd0_;
        auto sub = x.subspan(avr_offset());
        return std::visit([&](const auto& a) { return a.field_voltage(sub); }, *avr_);
    }
    double mechanical_power(std::span<const double> x) const {
        return gov_ ? gov_->mechanical_power(x.subspan(gov_offset())) : pm0_;
    }
    double stabilizer_output(std::span<const double> x) const {
        return pss_ ? pss_->output(x.subspan(pss_offset()), omega(x)) : 0.0;
    }

    Complex injected_current(std::span<const double> x, Complex v) const { return machine_.injected_current(x, v); }

    void derivatives(std::span<const double> x, Complex v, std::span<double> dx) const {
        machine_.derivatives(x, v, field_voltage(x), mechanical_power(x), dx);
        const double vs = stabilizer_output(x);
        if (avr_) {
            auto sub = x.subspan(avr_offset());
            auto dsub = dx.subspan(avr_offset());
            std::visit([&](const auto& a) { a.derivatives(sub, std::abs(v), vref_, vs, dsub); }, *avr_);
        }
        if (gov_) gov_->derivatives(x.subspan(gov_offset()), omega(x), pref_, dx.subspan(gov_offset()));
        if (pss_) pss_->derivatives(x.subspan(pss_offset()), omega(x), dx.subspan(pss_offset()));
    }

    /// Fills `x` with the equilibrium for terminal power `s` (system base) at
    /// voltage `v` and back-computes the voltage and power references.
    void initialize(Complex s, Complex v, std::span<double> x) {
        const MachineInit mi = machine_.initialize(s, v);
        std::copy_n(mi.states.begin(), machine_.size(), x.begin());
        efd0_ = mi.efd;
        pm0_ = mi.pm;
        vref_ = std::abs(v);
        if (avr_) {
            auto sub = x.subspan(avr_offset());
            vref_ = std::visit([&](const auto& a) { return a.initialize(mi.efd, std::abs(v), sub); }, *avr_);
        }
        pref_ = mi.pm;
        if (gov_) pref_ = gov_->initialize(mi.pm, x.subspan(gov_offset()));
        if (pss_) pss_->initialize(1.0, x.subspan(pss_offset()));
    }

  private:
    SynchronousMachine machine_;
    std::optional<Avr> avr_;
    std::optional<TurbineGovernorType1> gov_;
    std::optional<Pss2> pss_;
    double vref_ = 1.0;
    double pref_ = 0.0;
    double efd0_ = 1.0;
    double pm0_ = 0.0;
};

}  // namespace cohsim
