#pragma once

// Time-domain simulation of a scenario: power flow, device initialization,
// trapezoidal DAE integration with events, channel recording.
//
// Unknowns: z = [x; Re V1, Im V1, ..., Re Vn, Im Vn]. Algebraic equations
// are the bus current balances I_dev(x, V) - Y V = 0 with loads folded into Y.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cohsim/converter.hpp"
#include "cohsim/error.hpp"
#include "cohsim/integrator.hpp"
#include "cohsim/machines.hpp"
#include "cohsim/metrics.hpp"
#include "cohsim/netcore.hpp"
#include "cohsim/scenario.hpp"
#include "cohsim/signals.hpp"

namespace cohsim {

enum class RunStatus { Stable, Unstable, Failed };

inline std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Stable: return "STABLE";
        case RunStatus::Unstable: return "UNSTABLE";
        case RunStatus::Failed: return "FAILED";
    }
    return "FAILED";
}

/// Uniformly sampled named channels.
class TimeSeries {
  public:
    std::vector<double> t;

    void add_channel(std::string name, std::string unit) {
        if (has(name)) throw ConfigError("duplicate channel '" + name + "'");
        names_.push_back(std::move(name));
        units_.push_back(std::move(unit));
        columns_.emplace_back();
    }
    void append(double time, std::span<const double> values) {
        if (values.size() != columns_.size()) throw ConfigError("TimeSeries::append: width mismatch");
        t.push_back(time);
        for (std::size_t c = 0; c < values.size(); ++c) columns_[c].push_back(values[c]);
    }

    std::size_t size() const { return t.size(); }
    std::size_t width() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<std::string>& units() const { return units_; }
    bool has(const std::string& name) const { return std::find(names_.begin(), names_.end(), name) != names_.end(); }
    std::size_t index(const std::string& name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) throw ConfigError("no channel '" + name + "' in time series");
        return static_cast<std::size_t>(it - names_.begin());
    }
    const std::vector<double>& channel(const std::string& name) const { return columns_[index(name)]; }
    const std::vector<double>& column(std::size_t c) const { return columns_[c]; }

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

  private:
    std::vector<std::string> names_;
    std::vector<std::string> units_;
    std::vector<std::vector<double>> columns_;
};

struct RunResult {
    RunStatus status = RunStatus::Stable;
    std::string message;
    TimeSeries series;
    double h = 0.0;                   ///< integration step actually used
    double t_reached = 0.0;
    int steps = 0;
    int jacobian_updates = 0;
    double max_power_balance = 0.0;   ///< worst |S_gen - S_load - S_loss| over the output samples
    bool coi_from_pll = false;
};

class Simulation {
  public:
    explicit Simulation(Scenario scenario) : sc_(std::move(scenario)) {
        sc_.validate();
        omega_b_ = sc_.system.omega_base();
        build_network();
        solve_power_flow();
        build_devices();
        initialize_devices();
        build_channels();
        h_ = effective_step(sc_.solver, min_time_constant(sc_));
        integrator_.emplace(dae_, initial_z_, NewtonSettings{sc_.solver.newton_tol, sc_.solver.max_newton_iters});
        integrator_->solve_algebraic();
        update_lagged();
    }

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    const Scenario& scenario() const { return sc_; }
    const Network& network() const { return net_; }
    const PowerFlowResult& power_flow_result() const { return pf_; }
    const std::vector<HybridDevice>& devices() const { return devices_; }
    double time() const { return t_; }
    double step_size() const { return h_; }
    int jacobian_updates() const { return integrator_->jacobian_updates(); }

    std::size_t state_size() const { return nx_; }
    std::span<const double> states() const { return {integrator_->state().data(), nx_}; }
    std::span<const double> derivatives() const { return {integrator_->derivatives().data(), nx_}; }

    std::size_t device_index(const std::string& id) const {
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            if (devices_[k].id == id) return k;
        }
        throw ConfigError("unknown device '" + id + "'");
    }
    std::span<const double> device_states(std::size_t k) const {
        return states().subspan(layout_[k].offset, layout_[k].sm_size + layout_[k].ibr_size);
    }

    Complex bus_voltage(int bus) const { return voltage(net_.index_of(bus)); }
    Complex device_current(std::size_t k) const {
        const auto z = std::span<const double>(integrator_->state().data(), integrator_->state().size());
        return device_current(k, z);
    }
    Complex device_sm_current(std::size_t k) const {
        const auto& L = layout_[k];
        if (!devices_[k].sm) return {};
        return devices_[k].sm->injected_current(states().subspan(L.offset, L.sm_size), voltage(L.bus_index));
    }
    Complex device_ibr_current(std::size_t k) const {
        const auto& L = layout_[k];
        if (!devices_[k].ibr) return {};
        return devices_[k].ibr->injected_current(states().subspan(L.offset + L.sm_size, L.ibr_size));
    }
    Complex device_power(std::size_t k) const {
        return voltage(layout_[k].bus_index) * std::conj(device_current(k));
    }
    /// Current reference emitted by the coherency controller of device k.
    Complex coherency_current_reference(std::size_t k) const {
        const auto& L = layout_[k];
        if (!devices_[k].ibr) throw ConfigError(devices_[k].id + " has no inverter");
        return devices_[k].ibr->current_reference(states().subspan(L.offset + L.sm_size, L.ibr_size),
                                                  reference_input(k), noise_[k]);
    }
    std::optional<CfEstimate> cf_estimate(std::size_t k) const {
        const auto& L = layout_[k];
        if (!L.estimator) return std::nullopt;
        return L.estimator->output(states().subspan(L.estimator_offset, CfEstimator::size), device_current(k));
    }

    bool coi_from_pll() const { return coi_weight_ == 0.0; }
    double coi_frequency() const {
        if (coi_weight_ == 0.0) {
            const auto k = coi_fallback_;
            const auto& L = layout_[k];
            return devices_[k].ibr->pll_frequency(states().subspan(L.offset + L.sm_size, L.ibr_size),
                                                  voltage(L.bus_index));
        }
        double num = 0.0;
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            if (!devices_[k].sm) continue;
            const auto& m = devices_[k].sm->machine().params();
            num += m.h * m.rating_mva * states()[layout_[k].offset + SynchronousMachine::kOmega];
        }
        return num / coi_weight_;
    }

    /// |sum S_dev - sum S_load - sum S_loss| with losses accounted branch by branch.
    double power_balance_residual() const {
        Complex gen{}, load{}, loss{};
        for (std::size_t k = 0; k < devices_.size(); ++k) gen += device_power(k);
        for (const auto& l : net_.loads()) load += std::norm(bus_voltage(l.bus)) * std::conj(l.y);
        for (const auto& br : net_.branches()) {
            if (!br.in_service) continue;
            const Complex vf = bus_voltage(br.from), vt = bus_voltage(br.to);
            const Complex ys = br.series_admittance(), ysh{0.0, br.b / 2.0};
            const Complex i_ft = (vf - vt) * ys + vf * ysh, i_tf = (vt - vf) * ys + vt * ysh;
            loss += vf * std::conj(i_ft) + vt * std::conj(i_tf);
        }
        for (const auto& b : net_.buses()) loss += std::norm(bus_voltage(b.id)) * std::conj(b.shunt);
        for (const auto& f : net_.faults()) loss += std::norm(bus_voltage(f.bus)) * std::conj(f.y);
        return std::abs(gen - load - loss);
    }

    double algebraic_residual() const {
        Eigen::VectorXd f(static_cast<Eigen::Index>(nx_)), g(static_cast<Eigen::Index>(2 * nb_));
        dae_.eval(integrator_->state(), f, g);
        return g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    }

    /// One trapezoidal step of length h (noise advanced first, held over the step).
    StepStats step(double h) {
        advance_noise(h);
        const StepStats s = integrator_->step(h);
        t_ += h;
        update_lagged();
        return s;
    }

    /// Applies a topology event at the current time and re-solves the network.
    EventOutcome apply(const NetworkEvent& ev) {
        const EventOutcome out = net_.apply(ev);
        if (out == EventOutcome::Applied) {
            dae_.y = net_.ybus().dense();
            integrator_->solve_algebraic();
            update_lagged();
        }
        return out;
    }

    const std::vector<std::string>& channel_names() const { return channel_names_; }
    std::vector<double> sample() const {
        std::vector<double> v;
        v.reserve(channels_.size());
        for (const auto& c : channels_) v.push_back(c.eval());
        return v;
    }

    RunResult run() {
        RunResult res;
        res.h = h_;
        for (std::size_t c = 0; c < channels_.size(); ++c) res.series.add_channel(channel_names_[c], channel_units_[c]);

        std::vector<NetworkEvent> events = sc_.events;
        std::stable_sort(events.begin(), events.end(),
                         [](const NetworkEvent& a, const NetworkEvent& b) { return a.time < b.time; });
        std::size_t next_event = 0;
        const double t_end = sc_.solver.t_end, dt_out = sc_.solver.output_step;
        const auto n_out = static_cast<std::size_t>(std::floor(t_end / dt_out + 1e-9));
        std::size_t next_out = 0;
        const double eps = 1e-9;

        auto record = [&] {
            res.series.append(t_, sample());
            res.max_power_balance = std::max(res.max_power_balance, power_balance_residual());
        };
        auto apply_due_events = [&] {
            while (next_event < events.size() && events[next_event].time <= t_ + eps) {
                apply(events[next_event]);
                ++next_event;
            }
        };
        try {
            if (next_event < events.size() && events[next_event].time <= eps) apply_due_events();
            record();
            ++next_out;
            while (next_out <= n_out) {
                const double t_out = static_cast<double>(next_out) * dt_out;
                double target = t_out;
                if (next_event < events.size()) target = std::min(target, events[next_event].time);
                double h = h_;
                bool land = false;
                if (t_ + h >= target - eps) {
                    h = target - t_;
                    land = true;
                }
                step(h);
                if (land) t_ = target;
                ++res.steps;
                if (auto why = instability()) {
                    record();
                    res.status = RunStatus::Unstable;
                    res.message = *why;
                    break;
                }
                if (land && std::abs(t_ - t_out) <= eps) {
                    record();
                    ++next_out;
                }
                if (land) apply_due_events();
            }
        } catch (const SolveError& e) {
            res.status = RunStatus::Failed;
            res.message = "t=" + std::to_string(t_) + ": " + e.what();
        }
        res.t_reached = t_;
        res.jacobian_updates = integrator_->jacobian_updates();
        res.coi_from_pll = coi_from_pll();
        return res;
    }

    /// Smallest time constant of any block in the scenario.
    static double min_time_constant(const Scenario& sc) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& d : sc.devices) {
            if (d.coherency && d.coherency->share > 0.0) m = std::min(m, d.coherency->tau_idq);
            if (d.avr) {
                std::visit([&](const auto& p) { m = std::min(m, p.ta); }, *d.avr);
            }
            if (d.governor) m = std::min(m, d.governor->ts);
        }
        for (const auto& ms : sc.measurements) {
            if (ms.delay > 0.0) m = std::min(m, ms.delay);
            if (ms.channel.ends_with(".cf")) m = std::min(m, ms.estimator_tau);
        }
        return m;
    }
    static double effective_step(const SolverConfig& c, double min_tau) {
        return (c.auto_step && min_tau < 0.01) ? std::min(c.h, 0.002) : c.h;
    }

  private:
    struct DeviceLayout {
        std::size_t bus_index = 0;
        std::size_t offset = 0;
        std::size_t sm_size = 0;
        std::size_t ibr_size = 0;
        std::optional<std::size_t> reference;   ///< index of the reference device
        std::optional<CfEstimator> estimator;
        std::size_t estimator_offset = 0;
        std::array<std::optional<OuNoise>, 2> noise;
        double noise_base = 1.0;
    };

    struct Channel {
        std::function<double()> eval;
    };

    /// The DAE seen by the integrator.
    struct Dae {
        Simulation* sim = nullptr;
        Eigen::MatrixXcd y;

        std::size_t differential_size() const { return sim->nx_; }
        std::size_t algebraic_size() const { return 2 * sim->nb_; }
        std::string describe(std::size_t eq) const { return sim->describe_equation(eq); }

        void eval(const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> f, Eigen::Ref<Eigen::VectorXd> g) const {
            sim->evaluate(y, z, f, g);
        }
    };

    Complex voltage(std::size_t bus_index) const {
        const auto& z = integrator_->state();
        const auto base = static_cast<Eigen::Index>(nx_ + 2 * bus_index);
        return {z(base), z(base + 1)};
    }

    Complex device_current(std::size_t k, std::span<const double> z) const {
        const auto& L = layout_[k];
        const auto& d = devices_[k];
        Complex i{};
        const std::size_t vb = nx_ + 2 * L.bus_index;
        const Complex v{z[vb], z[vb + 1]};
        if (d.sm) i += d.sm->injected_current(z.subspan(L.offset, L.sm_size), v);
        if (d.ibr) i += d.ibr->injected_current(z.subspan(L.offset + L.sm_size, L.ibr_size));
        return i;
    }

    Complex reference_input(std::size_t k) const {
        const auto& L = layout_[k];
        if (!L.reference) return {};
        if (sc_.solver.lagged_reference) return lagged_[*L.reference];
        return device_current(*L.reference);
    }

    void evaluate(const Eigen::MatrixXcd& y, const Eigen::VectorXd& zv, Eigen::Ref<Eigen::VectorXd> f,
                  Eigen::Ref<Eigen::VectorXd> g) const {
        const std::span<const double> z(zv.data(), static_cast<std::size_t>(zv.size()));
        std::span<double> dx(f.data(), nx_);
        Eigen::VectorXcd v(static_cast<Eigen::Index>(nb_));
        for (std::size_t b = 0; b < nb_; ++b) v(static_cast<Eigen::Index>(b)) = {z[nx_ + 2 * b], z[nx_ + 2 * b + 1]};

        std::vector<Complex>& cur = scratch_currents_;
        cur.assign(devices_.size(), Complex{});
        for (std::size_t k = 0; k < devices_.size(); ++k) cur[k] = device_current(k, z);

        Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(nb_));
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            const auto& L = layout_[k];
            const auto& d = devices_[k];
            const Complex vb = v(static_cast<Eigen::Index>(L.bus_index));
            inj(static_cast<Eigen::Index>(L.bus_index)) += cur[k];
            if (d.sm) d.sm->derivatives(z.subspan(L.offset, L.sm_size), vb, dx.subspan(L.offset, L.sm_size));
            if (d.ibr) {
                const Complex i_ext =
                    !L.reference ? Complex{} : (sc_.solver.lagged_reference ? lagged_[*L.reference] : cur[*L.reference]);
                d.ibr->derivatives(z.subspan(L.offset + L.sm_size, L.ibr_size), vb, i_ext, noise_[k],
                                   dx.subspan(L.offset + L.sm_size, L.ibr_size));
            }
            if (L.estimator) {
                L.estimator->derivatives(z.subspan(L.estimator_offset, CfEstimator::size), cur[k],
                                         dx.subspan(L.estimator_offset, CfEstimator::size));
            }
        }
        const Eigen::VectorXcd mismatch = inj - y * v;
        for (std::size_t b = 0; b < nb_; ++b) {
            g(static_cast<Eigen::Index>(2 * b)) = mismatch(static_cast<Eigen::Index>(b)).real();
            g(static_cast<Eigen::Index>(2 * b + 1)) = mismatch(static_cast<Eigen::Index>(b)).imag();
        }
    }

    std::string describe_equation(std::size_t eq) const {
        if (eq >= nx_) {
            const std::size_t b = (eq - nx_) / 2;
            return "bus " + std::to_string(net_.buses()[b].id) + ((eq - nx_) % 2 ? " current balance (imag)"
                                                                                   : " current balance (real)");
        }
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            const auto& L = layout_[k];
            if (eq >= L.offset && eq < L.offset + L.sm_size) {
                return "device " + devices_[k].id + " machine state " + std::to_string(eq - L.offset);
            }
            if (eq >= L.offset + L.sm_size && eq < L.offset + L.sm_size + L.ibr_size) {
                return "device " + devices_[k].id + " inverter state " + std::to_string(eq - L.offset - L.sm_size);
            }
            if (L.estimator && eq >= L.estimator_offset && eq < L.estimator_offset + CfEstimator::size) {
                return "device " + devices_[k].id + " estimator state " + std::to_string(eq - L.estimator_offset);
            }
        }
        return "state " + std::to_string(eq);
    }

    // -- construction -------------------------------------------------------

    void build_network() {
        std::vector<Bus> buses;
        for (const auto& b : sc_.buses) buses.push_back({b.id, b.base_kv, Complex{1.0, 0.0}, Complex{b.g_shunt, b.b_shunt}});
        net_ = Network(std::move(buses), sc_.branches);
        nb_ = net_.size();
    }

    void solve_power_flow() {
        std::vector<BusSchedule> sched;
        for (const auto& d : sc_.devices) {
            BusSchedule s;
            s.bus = d.bus;
            s.type = d.bus == sc_.system.slack_bus ? BusType::Slack : BusType::PV;
            s.p_gen = d.p;
            s.v_set = d.v;
            sched.push_back(s);
        }
        for (const auto& l : sc_.loads) {
            BusSchedule s;
            s.bus = l.bus;
            s.p_load = l.p;
            s.q_load = l.q;
            sched.push_back(s);
        }
        pf_ = power_flow(net_, sched);
        std::vector<LoadZ> loads;
        for (const auto& l : sc_.loads) loads.push_back(LoadZ::from_power(l.bus, {l.p, l.q}, pf_.voltage(l.bus)));
        net_.set_loads(std::move(loads));
        for (auto& b : net_.buses()) b.v0 = pf_.voltage(b.id);
        dae_.y = net_.ybus().dense();
        dae_.sim = this;
    }

    MeasurementChain chain_for(const DeviceData& d) const {
        MeasurementChain chain;
        if (const auto* m = sc_.find_measurement(d.id + ".iext")) {
            chain.delay_tau = m->delay;
            chain.noise = m->noise;
            chain.estimator_tau = m->estimator_tau;
            if (m->noise_base == "device" && d.coherency) {
                chain.noise_base = sc_.find_device(d.coherency->reference)->rating_mva / sc_.system.base_mva;
            }
            chain.noise_relative = m->noise_base == "signal";
        }
        return chain;
    }

    void build_devices() {
        for (const auto& d : sc_.devices) {
            HybridDevice dev;
            if (d.type == "sm") {
                MachineParams mp = *d.machine;
                mp.rating_mva = d.rating_mva;
                std::optional<Avr> avr;
                if (d.avr) {
                    if (const auto* p = std::get_if<AvrDc1::Params>(&*d.avr)) {
                        avr = AvrDc1{*p};
                    } else {
                        avr = AvrAc4{std::get<AvrAc4::Params>(*d.avr)};
                    }
                }
                std::optional<TurbineGovernorType1> gov;
                if (d.governor) gov = TurbineGovernorType1{*d.governor};
                std::optional<Pss2> pss;
                if (d.pss) pss = Pss2{*d.pss};
                SynchronousUnit unit(SynchronousMachine(mp, sc_.system.base_mva, omega_b_), avr, gov, pss);
                if (d.coherency) {
                    CoherencySettings cs{d.coherency->reference, d.coherency->mode, d.coherency->pll,
                                         d.coherency->tau_idq, chain_for(d)};
                    dev = split_device(d.id, d.bus, unit, d.coherency->share, cs);
                } else {
                    dev.id = d.id;
                    dev.bus = d.bus;
                    dev.share = 0.0;
                    dev.sm = unit;
                }
            } else {
                const auto& c = *d.coherency;
                CoherencyController ctrl;
                ctrl.reference_device = c.reference;
                ctrl.share = 1.0;
                ctrl.mode = c.mode;
                dev.id = d.id;
                dev.bus = d.bus;
                dev.share = 1.0;
                dev.ibr.emplace(Pll{c.pll, omega_b_}, GflConverter{c.tau_idq}, ctrl, chain_for(d), d.rating_mva);
            }
            devices_.push_back(std::move(dev));
        }

        // state layout: device slices, then estimators
        std::size_t off = 0;
        layout_.resize(devices_.size());
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            auto& L = layout_[k];
            L.bus_index = net_.index_of(devices_[k].bus);
            L.offset = off;
            L.sm_size = devices_[k].sm ? devices_[k].sm->size() : 0;
            L.ibr_size = devices_[k].ibr ? devices_[k].ibr->size() : 0;
            off += L.sm_size + L.ibr_size;
            if (devices_[k].ibr) {
                L.reference = device_index(devices_[k].ibr->controller().reference_device);
                const auto& chain = devices_[k].ibr->chain();
                if (chain.noise) {
                    L.noise[0].emplace(*chain.noise, 2 * k);
                    L.noise[1].emplace(*chain.noise, 2 * k + 1);
                    L.noise_base = chain.noise_base;
                }
            }
        }
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            const auto& id = devices_[k].id;
            double tau = 0.0;
            if (const auto* m = sc_.find_measurement(id + ".cf")) tau = m->estimator_tau;
            for (const auto& ch : sc_.channels) {
                if ((ch == id + ".rho" || ch == id + ".wdev") && tau == 0.0) tau = 0.02;
            }
            if (tau > 0.0) {
                layout_[k].estimator.emplace(tau, omega_b_);
                layout_[k].estimator_offset = off;
                off += CfEstimator::size;
            }
        }
        nx_ = off;
        noise_.assign(devices_.size(), Complex{});
        lagged_.assign(devices_.size(), Complex{});

        coi_weight_ = 0.0;
        for (const auto& d : devices_) {
            if (d.sm) coi_weight_ += d.sm->machine().params().h * d.sm->machine().params().rating_mva;
        }
        if (coi_weight_ == 0.0) {
            // no machine anywhere: fall back on the first inverter's reference, or the inverter itself
            for (std::size_t k = 0; k < devices_.size(); ++k) {
                if (!devices_[k].ibr) continue;
                const auto r = *layout_[k].reference;
                coi_fallback_ = devices_[r].ibr ? r : k;
                break;
            }
        }
    }

    void initialize_devices() {
        initial_z_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nx_ + 2 * nb_));
        std::span<double> x(initial_z_.data(), nx_);
        for (std::size_t b = 0; b < nb_; ++b) {
            const Complex v = pf_.v[b];
            initial_z_(static_cast<Eigen::Index>(nx_ + 2 * b)) = v.real();
            initial_z_(static_cast<Eigen::Index>(nx_ + 2 * b + 1)) = v.imag();
        }
        auto total_current = [&](std::size_t k) {
            return std::conj(pf_.generation(devices_[k].bus) / pf_.voltage(devices_[k].bus));
        };
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            auto& d = devices_[k];
            auto& L = layout_[k];
            const Complex s0 = pf_.generation(d.bus), v0 = pf_.voltage(d.bus);
            try {
                if (d.sm) d.sm->initialize(d.sm_dispatch(s0), v0, x.subspan(L.offset, L.sm_size));
                if (d.ibr) {
                    const Complex s_ibr = d.sm ? d.ibr_dispatch(s0) : s0;
                    d.ibr->initialize(s_ibr, v0, total_current(*L.reference), x.subspan(L.offset + L.sm_size, L.ibr_size));
                    if (d.ibr->chain().noise_relative) L.noise_base = std::abs(total_current(*L.reference));
                }
            } catch (const InitError& e) {
                throw InitError("device " + d.id + ": " + e.what());
            }
            if (L.estimator) {
                L.estimator->initialize(total_current(k), x.subspan(L.estimator_offset, CfEstimator::size));
            }
        }
    }

    void build_channels() {
        std::vector<std::string> names = sc_.channels;
        if (names.empty()) {
            names.push_back("coi.freq");
            for (const auto& b : net_.buses()) names.push_back("bus" + std::to_string(b.id) + ".vmag");
            for (const auto& d : devices_) {
                names.push_back(d.id + ".omega");
                names.push_back(d.id + ".p");
                names.push_back(d.id + ".q");
            }
        }
        for (const auto& n : names) add_channel(n);
    }

    void add_channel(const std::string& name) {
        const auto dot = name.rfind('.');
        if (dot == std::string::npos) throw ConfigError("channel '" + name + "': expected <bus|device>.<quantity>");
        const std::string owner = name.substr(0, dot), q = name.substr(dot + 1);
        std::function<double()> fn;
        std::string unit;
        if (owner == "coi" && q == "freq") {
            fn = [this] { return coi_frequency(); };
            unit = "pu";
        } else if (owner.starts_with("bus") && owner.size() > 3 &&
                   std::all_of(owner.begin() + 3, owner.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            const int bus = std::stoi(owner.substr(3));
            if (!net_.has_bus(bus)) throw ConfigError("channel '" + name + "': unknown bus");
            const std::size_t b = net_.index_of(bus);
            if (q == "vmag") {
                fn = [this, b] { return std::abs(voltage(b)); };
                unit = "pu";
            } else if (q == "vang") {
                fn = [this, b] { return std::arg(voltage(b)); };
                unit = "rad";
            }
        } else {
            std::size_t k = 0;
            try {
                k = device_index(owner);
            } catch (const ConfigError&) {
                throw ConfigError("channel '" + name + "': unknown device or bus '" + owner + "'");
            }
            const auto& d = devices_[k];
            const auto& L = layout_[k];
            if (q == "omega") {
                if (d.sm) {
                    fn = [this, k] { return states()[layout_[k].offset + SynchronousMachine::kOmega]; };
                } else {
                    fn = [this, k] { return pll_frequency(k); };
                }
                unit = "pu";
            } else if (q == "pll" && d.ibr) {
                fn = [this, k] { return pll_frequency(k); };
                unit = "pu";
            } else if (q == "delta" && d.sm) {
                fn = [this, k] { return states()[layout_[k].offset + SynchronousMachine::kDelta]; };
                unit = "rad";
            } else if (q == "p" || q == "q") {
                const bool real = q == "p";
                fn = [this, k, real] { const Complex s = device_power(k); return real ? s.real() : s.imag(); };
                unit = "pu";
            } else if (q == "imag") {
                fn = [this, k] { return std::abs(device_current(k)); };
                unit = "pu";
            } else if (q == "iang") {
                fn = [this, k] { return std::arg(device_current(k)); };
                unit = "rad";
            } else if ((q == "rho" || q == "wdev") && L.estimator) {
                const bool rho = q == "rho";
                fn = [this, k, rho] { const auto e = *cf_estimate(k); return rho ? e.rho : e.omega; };
                unit = rho ? "1/s" : "rad/s";
            } else if (q == "efd" && d.sm) {
                fn = [this, k] { return devices_[k].sm->field_voltage(states().subspan(layout_[k].offset, layout_[k].sm_size)); };
                unit = "pu";
            } else if (q == "pm" && d.sm) {
                fn = [this, k] { return devices_[k].sm->mechanical_power(states().subspan(layout_[k].offset, layout_[k].sm_size)); };
                unit = "pu";
            }
        }
        if (!fn) throw ConfigError("channel '" + name + "': unsupported quantity '" + q + "'");
        channel_names_.push_back(name);
        channel_units_.push_back(unit);
        channels_.push_back({std::move(fn)});
    }

    double pll_frequency(std::size_t k) const {
        const auto& L = layout_[k];
        return devices_[k].ibr->pll_frequency(states().subspan(L.offset + L.sm_size, L.ibr_size), voltage(L.bus_index));
    }

    // -- stepping -----------------------------------------------------------

    void advance_noise(double h) {
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            auto& L = layout_[k];
            if (!L.noise[0]) continue;
            const double re = L.noise[0]->step(h), im = L.noise[1]->step(h);
            noise_[k] = Complex{re, im} * L.noise_base;
        }
    }

    void update_lagged() {
        for (std::size_t k = 0; k < devices_.size(); ++k) lagged_[k] = device_current(k);
    }

    std::optional<std::string> instability() const {
        for (std::size_t b = 0; b < nb_; ++b) {
            const double vm = std::abs(voltage(b));
            if (!std::isfinite(vm) || vm > sc_.solver.v_limit) {
                return "bus " + std::to_string(net_.buses()[b].id) + " voltage " + std::to_string(vm) + " pu";
            }
        }
        for (std::size_t k = 0; k < devices_.size(); ++k) {
            if (!devices_[k].sm) continue;
            const double w = states()[layout_[k].offset + SynchronousMachine::kOmega];
            if (!std::isfinite(w) || std::abs(w - 1.0) > sc_.solver.speed_limit) {
                return "device " + devices_[k].id + " speed " + std::to_string(w) + " pu";
            }
        }
        return std::nullopt;
    }

    Scenario sc_;
    double omega_b_ = 2.0 * pi * 60.0;
    Network net_;
    PowerFlowResult pf_;
    std::vector<HybridDevice> devices_;
    std::vector<DeviceLayout> layout_;
    std::size_t nx_ = 0, nb_ = 0;
    double coi_weight_ = 0.0;
    std::size_t coi_fallback_ = 0;
    std::vector<Complex> noise_, lagged_;
    mutable std::vector<Complex> scratch_currents_;
    std::vector<std::string> channel_names_, channel_units_;
    std::vector<Channel> channels_;
    Dae dae_;
    Eigen::VectorXd initial_z_;
    std::optional<TrapezoidalIntegrator<Dae>> integrator_;
    double h_ = 0.005;
    double t_ = 0.0;
};

/// Builds and runs a scenario. Initialization failures propagate as exceptions.
inline RunResult run(const Scenario& sc) {
    Simulation sim(sc);
    return sim.run();
}

}  // namespace cohsim
