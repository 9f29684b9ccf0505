#pragma once

// Static network model: buses, branches, constant-impedance loads, the bus
// admittance matrix, topology events and the algebraic network solves.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cohsim/error.hpp"
#include "cohsim/phasor.hpp"

namespace cohsim {

struct Bus {
    int id = 0;
    double base_kv = 0.0;
    Complex v0{1.0, 0.0};   ///< power-flow voltage, filled at initialization
    Complex shunt{};        ///< fixed shunt admittance (pu), G + jB
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;         ///< total line charging, split half per end
    int circuit = 1;
    bool in_service = true;

    Complex series_admittance() const { return 1.0 / Complex(r, x); }
    bool connects(int a, int c) const { return (from == a && to == c) || (from == c && to == a); }
};

struct LoadZ {
    int bus = 0;
    Complex y{};  ///< (P0 - jQ0) / |V0|^2

    static LoadZ from_power(int bus, Complex s_load, Complex v0) {
        return {bus, std::conj(s_load) / std::norm(v0)};
    }
};

struct FaultShunt {
    int bus = 0;
    Complex y{};
};

inline constexpr Complex default_fault_admittance{0.0, -1.0e6};

enum class EventKind { BranchTrip, FaultApply, FaultClear };

struct NetworkEvent {
    double time = 0.0;
    EventKind kind = EventKind::BranchTrip;
    int bus = 0;                 ///< fault target
    int from = 0;                ///< branch trip target
    int to = 0;
    int circuit = 1;
    Complex y_fault = default_fault_admittance;

    static NetworkEvent branch_trip(double t, int from, int to, int circuit) {
        NetworkEvent e;
        e.time = t;
        e.kind = EventKind::BranchTrip;
        e.from = from;
        e.to = to;
        e.circuit = circuit;
        return e;
    }
    static NetworkEvent fault_apply(double t, int bus, Complex y = default_fault_admittance) {
        NetworkEvent e;
        e.time = t;
        e.kind = EventKind::FaultApply;
        e.bus = bus;
        e.y_fault = y;
        return e;
    }
    static NetworkEvent fault_clear(double t, int bus) {
        NetworkEvent e;
        e.time = t;
        e.kind = EventKind::FaultClear;
        e.bus = bus;
        return e;
    }
    friend bool operator==(const NetworkEvent&, const NetworkEvent&) = default;
};

/// Dense complex bus admittance matrix with its bus-id ordering. Both shipped
/// systems are well below 50 buses.
class AdmittanceMatrix {
  public:
    AdmittanceMatrix() = default;
    explicit AdmittanceMatrix(std::vector<int> bus_ids)
        : ids_(std::move(bus_ids)), y_(Eigen::MatrixXcd::Zero(ids_.size(), ids_.size())) {}

    std::size_t size() const { return ids_.size(); }
    std::span<const int> bus_ids() const { return ids_; }
    Complex operator()(std::size_t i, std::size_t k) const { return y_(i, k); }
    Complex& operator()(std::size_t i, std::size_t k) { return y_(i, k); }
    const Eigen::MatrixXcd& dense() const { return y_; }
    Eigen::MatrixXcd& dense() { return y_; }

    friend bool operator==(const AdmittanceMatrix& a, const AdmittanceMatrix& b) {
        return a.ids_ == b.ids_ && a.y_.rows() == b.y_.rows() && a.y_ == b.y_;
    }

  private:
    std::vector<int> ids_;
    Eigen::MatrixXcd y_;
};

namespace detail {

inline std::unordered_map<int, std::size_t> index_buses(std::span<const Bus> buses) {
    std::unordered_map<int, std::size_t> index;
    for (std::size_t k = 0; k < buses.size(); ++k) {
        if (!index.emplace(buses[k].id, k).second) {
            throw ConfigError("duplicate bus id " + std::to_string(buses[k].id));
        }
    }
    return index;
}

inline std::size_t lookup(const std::unordered_map<int, std::size_t>& index, int id, const char* what) {
    auto it = index.find(id);
    if (it == index.end()) {
        throw ConfigError(std::string(what) + " references unknown bus " + std::to_string(id));
    }
    return it->second;
}

}  // namespace detail

inline AdmittanceMatrix build_ybus(std::span<const Bus> buses, std::span<const Branch> branches,
                                   std::span<const LoadZ> loads, std::span<const FaultShunt> faults = {}) {
    const auto index = detail::index_buses(buses);
    std::vector<int> ids;
    ids.reserve(buses.size());
    for (const auto& b : buses) ids.push_back(b.id);
    AdmittanceMatrix y(std::move(ids));

    for (const auto& br : branches) {
        const auto i = detail::lookup(index, br.from, "branch");
        const auto k = detail::lookup(index, br.to, "branch");
        if (br.r == 0.0 && br.x == 0.0) {
            throw ConfigError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                              " has zero impedance");
        }
        if (!br.in_service) continue;
        const Complex ys = br.series_admittance();
        const Complex ysh{0.0, br.b / 2.0};
        y(i, i) += ys + ysh;
        y(k, k) += ys + ysh;
        y(i, k) -= ys;
        y(k, i) -= ys;
    }
    for (std::size_t i = 0; i < buses.size(); ++i) y(i, i) += buses[i].shunt;
    for (const auto& l : loads) y(detail::lookup(index, l.bus, "load"), detail::lookup(index, l.bus, "load")) += l.y;
    for (const auto& f : faults) {
        const auto i = detail::lookup(index, f.bus, "fault");
        y(i, i) += f.y;
    }
    return y;
}

enum class EventOutcome { Applied, NoOp };

class Network {
  public:
    Network() = default;
    Network(std::vector<Bus> buses, std::vector<Branch> branches, std::vector<LoadZ> loads = {})
        : buses_(std::move(buses)), branches_(std::move(branches)), loads_(std::move(loads)) {
        index_ = detail::index_buses(buses_);
        for (std::size_t a = 0; a < branches_.size(); ++a) {
            detail::lookup(index_, branches_[a].from, "branch");
            detail::lookup(index_, branches_[a].to, "branch");
            for (std::size_t c = a + 1; c < branches_.size(); ++c) {
                if (branches_[c].connects(branches_[a].from, branches_[a].to) &&
                    branches_[c].circuit == branches_[a].circuit) {
                    throw ConfigError("parallel branches " + std::to_string(branches_[a].from) + "-" +
                                      std::to_string(branches_[a].to) + " share circuit id " +
                                      std::to_string(branches_[a].circuit));
                }
            }
        }
        for (const auto& l : loads_) detail::lookup(index_, l.bus, "load");
    }

    std::size_t size() const { return buses_.size(); }
    std::size_t index_of(int bus_id) const { return detail::lookup(index_, bus_id, "query"); }
    bool has_bus(int bus_id) const { return index_.contains(bus_id); }

    const std::vector<Bus>& buses() const { return buses_; }
    std::vector<Bus>& buses() { return buses_; }
    const std::vector<Branch>& branches() const { return branches_; }
    const std::vector<LoadZ>& loads() const { return loads_; }
    const std::vector<FaultShunt>& faults() const { return faults_; }

    void set_loads(std::vector<LoadZ> loads) {
        for (const auto& l : loads) detail::lookup(index_, l.bus, "load");
        loads_ = std::move(loads);
    }

    AdmittanceMatrix ybus() const { return build_ybus(buses_, branches_, loads_, faults_); }

    /// Y-bus of buses, branches and fixed shunts only (no loads, no faults).
    AdmittanceMatrix ybus_without_loads() const { return build_ybus(buses_, branches_, {}, {}); }

    EventOutcome apply(const NetworkEvent& ev) {
        switch (ev.kind) {
            case EventKind::BranchTrip: {
                auto it = std::find_if(branches_.begin(), branches_.end(), [&](const Branch& b) {
                    return b.connects(ev.from, ev.to) && b.circuit == ev.circuit;
                });
                if (it == branches_.end()) {
                    throw ConfigError("branch trip targets missing branch " + std::to_string(ev.from) + "-" +
                                      std::to_string(ev.to) + " circuit " + std::to_string(ev.circuit));
                }
                if (!it->in_service) return EventOutcome::NoOp;
                it->in_service = false;
                return EventOutcome::Applied;
            }
            case EventKind::FaultApply: {
                detail::lookup(index_, ev.bus, "fault");
                auto it = std::find_if(faults_.begin(), faults_.end(),
                                       [&](const FaultShunt& f) { return f.bus == ev.bus; });
                if (it != faults_.end()) {
                    it->y = ev.y_fault;
                } else {
                    faults_.push_back({ev.bus, ev.y_fault});
                }
                return EventOutcome::Applied;
            }
            case EventKind::FaultClear: {
                auto it = std::find_if(faults_.begin(), faults_.end(),
                                       [&](const FaultShunt& f) { return f.bus == ev.bus; });
                if (it == faults_.end()) {
                    throw ConfigError("fault_clear at bus " + std::to_string(ev.bus) + " without an active fault");
                }
                faults_.erase(it);
                return EventOutcome::Applied;
            }
        }
        return EventOutcome::NoOp;
    }

  private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<LoadZ> loads_;
    std::vector<FaultShunt> faults_;
    std::unordered_map<int, std::size_t> index_;
};

inline EventOutcome apply_event(const NetworkEvent& ev, Network& net) { return net.apply(ev); }

/// Solves Y_aug V = i_src. A singular matrix is reported with the bus that
/// dominates the null space.
inline Eigen::VectorXcd solve_network(const AdmittanceMatrix& y_aug, const Eigen::VectorXcd& i_src) {
    const auto& y = y_aug.dense();
    const auto n = static_cast<Eigen::Index>(y_aug.size());
    if (i_src.size() != n) throw SolveError("solve_network: source vector size mismatch");

    for (Eigen::Index i = 0; i < n; ++i) {
        if (y.row(i).cwiseAbs().maxCoeff() == 0.0) {
            throw SolveError("singular network matrix: bus " + std::to_string(y_aug.bus_ids()[i]) +
                             " is isolated with no shunt");
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(y);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) {
        Eigen::Index worst = 0;
        const Eigen::MatrixXcd kernel = lu.kernel();
        kernel.col(0).cwiseAbs().maxCoeff(&worst);
        throw SolveError("singular network matrix near bus " + std::to_string(y_aug.bus_ids()[worst]));
    }
    Eigen::VectorXcd v = lu.solve(i_src);
    const double scale = std::max(1.0, y.cwiseAbs().maxCoeff() * v.cwiseAbs().maxCoeff());
    const double residual = (y * v - i_src).cwiseAbs().maxCoeff();
    if (residual > 1e-10 * scale) {
        throw SolveError("network solve residual " + std::to_string(residual) + " above tolerance");
    }
    return v;
}

// ---------------------------------------------------------------------------
// Power flow

enum class BusType { PQ, PV, Slack };

struct BusSchedule {
    int bus = 0;
    BusType type = BusType::PQ;
    double p_gen = 0.0;
    double q_gen = 0.0;      ///< only used on PQ buses
    double v_set = 1.0;      ///< PV and slack buses
    double angle = 0.0;      ///< slack bus angle (rad)
    double p_load = 0.0;
    double q_load = 0.0;
};

struct PowerFlowResult {
    std::vector<int> bus_ids;
    std::vector<Complex> v;
    std::vector<Complex> s_gen;   ///< generation needed at each bus: S_inj + S_load
    std::vector<Complex> s_load;
    int iterations = 0;
    double max_mismatch = 0.0;

    Complex voltage(int bus) const { return v[position(bus)]; }
    Complex generation(int bus) const { return s_gen[position(bus)]; }

  private:
    std::size_t position(int bus) const {
        auto it = std::find(bus_ids.begin(), bus_ids.end(), bus);
        if (it == bus_ids.end()) throw ConfigError("power flow has no bus " + std::to_string(bus));
        return static_cast<std::size_t>(it - bus_ids.begin());
    }
};

struct PowerFlowOptions {
    double tolerance = 1e-8;
    int max_iterations = 50;
};

/// Newton-Raphson power flow in polar coordinates. Loads enter as constant
/// power; `net` load admittances and faults are ignored.
inline PowerFlowResult power_flow(const Network& net, std::span<const BusSchedule> schedule,
                                  PowerFlowOptions opt = {}) {
    const std::size_t n = net.size();
    const Eigen::MatrixXcd y = net.ybus_without_loads().dense();
    const Eigen::MatrixXd g = y.real();
    const Eigen::MatrixXd b = y.imag();

    std::vector<BusType> type(n, BusType::PQ);
    Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd vm = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    Eigen::VectorXd va = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    std::vector<Complex> s_load(n);
    int slack_count = 0;
    for (const auto& s : schedule) {
        const auto i = net.index_of(s.bus);
        const auto ii = static_cast<Eigen::Index>(i);
        if (s.type != BusType::PQ) {
            if (type[i] != BusType::PQ && (type[i] != s.type || vm(ii) != s.v_set)) {
                throw ConfigError("conflicting voltage schedules at bus " + std::to_string(s.bus));
            }
            type[i] = s.type;
            vm(ii) = s.v_set;
        }
        if (s.type == BusType::Slack) {
            va(ii) = s.angle;
        }
        p_spec(ii) += s.p_gen - s.p_load;
        q_spec(ii) += s.q_gen - s.q_load;
        s_load[i] += Complex(s.p_load, s.q_load);
    }
    for (auto t : type) slack_count += t == BusType::Slack ? 1 : 0;
    if (slack_count != 1) throw ConfigError("power flow needs exactly one slack bus");

    std::vector<Eigen::Index> ang_idx;
    std::vector<Eigen::Index> mag_idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (type[i] != BusType::Slack) ang_idx.push_back(static_cast<Eigen::Index>(i));
        if (type[i] == BusType::PQ) mag_idx.push_back(static_cast<Eigen::Index>(i));
    }
    const auto na = static_cast<Eigen::Index>(ang_idx.size());
    const auto nm = static_cast<Eigen::Index>(mag_idx.size());

    auto injections = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
        const auto nn = static_cast<Eigen::Index>(n);
        p.setZero(nn);
        q.setZero(nn);
        for (Eigen::Index i = 0; i < nn; ++i) {
            for (Eigen::Index k = 0; k < nn; ++k) {
                const double th = va(i) - va(k);
                p(i) += vm(i) * vm(k) * (g(i, k) * std::cos(th) + b(i, k) * std::sin(th));
                q(i) += vm(i) * vm(k) * (g(i, k) * std::sin(th) - b(i, k) * std::cos(th));
            }
        }
    };

    PowerFlowResult result;
    Eigen::VectorXd p, q;
    Eigen::VectorXd mismatch(na + nm);
    for (int iter = 0;; ++iter) {
        injections(p, q);
        for (Eigen::Index a = 0; a < na; ++a) mismatch(a) = p_spec(ang_idx[a]) - p(ang_idx[a]);
        for (Eigen::Index m = 0; m < nm; ++m) mismatch(na + m) = q_spec(mag_idx[m]) - q(mag_idx[m]);
        const double worst = mismatch.size() ? mismatch.cwiseAbs().maxCoeff() : 0.0;
        result.iterations = iter;
        result.max_mismatch = worst;
        if (worst < opt.tolerance) break;
        if (iter >= opt.max_iterations || !std::isfinite(worst)) {
            throw InitError("power flow did not converge in " + std::to_string(opt.max_iterations) +
                            " iterations (mismatch " + std::to_string(worst) + ")");
        }

        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(na + nm, na + nm);
        auto dp_dth = [&](Eigen::Index i, Eigen::Index k) {
            if (i == k) return -q(i) - b(i, i) * vm(i) * vm(i);
            const double th = va(i) - va(k);
            return vm(i) * vm(k) * (g(i, k) * std::sin(th) - b(i, k) * std::cos(th));
        };
        auto dq_dth = [&](Eigen::Index i, Eigen::Index k) {
            if (i == k) return p(i) - g(i, i) * vm(i) * vm(i);
            const double th = va(i) - va(k);
            return -vm(i) * vm(k) * (g(i, k) * std::cos(th) + b(i, k) * std::sin(th));
        };
        auto dp_dv = [&](Eigen::Index i, Eigen::Index k) {
            if (i == k) return p(i) / vm(i) + g(i, i) * vm(i);
            const double th = va(i) - va(k);
            return vm(i) * (g(i, k) * std::cos(th) + b(i, k) * std::sin(th));
        };
        auto dq_dv = [&](Eigen::Index i, Eigen::Index k) {
            if (i == k) return q(i) / vm(i) - b(i, i) * vm(i);
            const double th = va(i) - va(k);
            return vm(i) * (g(i, k) * std::sin(th) - b(i, k) * std::cos(th));
        };
        for (Eigen::Index r = 0; r < na; ++r) {
            for (Eigen::Index c = 0; c < na; ++c) jac(r, c) = dp_dth(ang_idx[r], ang_idx[c]);
            for (Eigen::Index c = 0; c < nm; ++c) jac(r, na + c) = dp_dv(ang_idx[r], mag_idx[c]);
        }
        for (Eigen::Index r = 0; r < nm; ++r) {
            for (Eigen::Index c = 0; c < na; ++c) jac(na + r, c) = dq_dth(mag_idx[r], ang_idx[c]);
            for (Eigen::Index c = 0; c < nm; ++c) jac(na + r, na + c) = dq_dv(mag_idx[r], mag_idx[c]);
        }
        const Eigen::VectorXd dx = jac.partialPivLu().solve(mismatch);
        for (Eigen::Index a = 0; a < na; ++a) va(ang_idx[a]) += dx(a);
        for (Eigen::Index m = 0; m < nm; ++m) vm(mag_idx[m]) += dx(na + m);
    }

    injections(p, q);
    result.bus_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        result.bus_ids.push_back(net.buses()[i].id);
        result.v.push_back(std::polar(vm(ii), va(ii)));
        result.s_gen.push_back(Complex(p(ii), q(ii)) + s_load[i]);
    }
    result.s_load = std::move(s_load);
    return result;
}

}  // namespace cohsim
