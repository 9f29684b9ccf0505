#pragma once

// Scenario description and its JSON file format (comments allowed).
//
// Top-level keys: schema, system, buses, branches, loads, devices, events,
// measurements, solver, channels. Electrical quantities are per unit on
// system.base_mva except machine parameters, which are per unit on the
// device rating. Angles are in radians, times in seconds.

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cohsim/converter.hpp"
#include "cohsim/error.hpp"
#include "cohsim/machines.hpp"
#include "cohsim/netcore.hpp"
#include "cohsim/signals.hpp"

namespace cohsim {

using json = nlohmann::ordered_json;

inline constexpr int scenario_schema_version = 1;

struct SystemInfo {
    std::string name;
    double base_mva = 100.0;
    double freq_hz = 60.0;
    int slack_bus = 0;
    friend bool operator==(const SystemInfo&, const SystemInfo&) = default;

    double omega_base() const { return 2.0 * pi * freq_hz; }
};

struct BusData {
    int id = 0;
    double base_kv = 0.0;
    double g_shunt = 0.0;
    double b_shunt = 0.0;
    friend bool operator==(const BusData&, const BusData&) = default;
};

struct LoadData {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
    friend bool operator==(const LoadData&, const LoadData&) = default;
};

struct CoherencyData {
    double share = 0.0;
    std::string reference;
    CoherencyMode mode = CoherencyMode::Complex;
    Pll::Params pll{};
    double tau_idq = 0.01;
    friend bool operator==(const CoherencyData&, const CoherencyData&) = default;
};

using AvrData = std::variant<AvrDc1::Params, AvrAc4::Params>;

struct DeviceData {
    std::string id;
    std::string type = "sm";   ///< "sm" (optionally hybrid) or "ibr"
    int bus = 0;
    double p = 0.0;            ///< active dispatch (ignored on the slack bus)
    double v = 1.0;            ///< voltage set point
    double rating_mva = 100.0;
    std::optional<MachineParams> machine;
    std::optional<AvrData> avr;
    std::optional<TurbineGovernorType1::Params> governor;
    std::optional<Pss2::Params> pss;
    std::optional<CoherencyData> coherency;
    friend bool operator==(const DeviceData&, const DeviceData&) = default;
};

/// `channel` is "<device>.iext" (coherency input of a device: delay and
/// noise) or "<device>.cf" (complex-frequency estimator on the device
/// current: estimator_tau).
struct MeasurementData {
    std::string channel;
    double delay = 0.0;
    std::optional<OuParams> noise;
    /// Current base of the noise: "signal" (reference current magnitude at
    /// t = 0), "device" (rating of the referenced device) or "system".
    std::string noise_base = "signal";
    double estimator_tau = 0.02;
    friend bool operator==(const MeasurementData&, const MeasurementData&) = default;
};

struct SolverConfig {
    double h = 0.005;
    double t_end = 20.0;
    double output_step = 0.01;
    double newton_tol = 1e-8;
    int max_newton_iters = 25;
    bool auto_step = true;                 ///< h <- min(h, 2 ms) when a block has tau < 10 ms
    bool lagged_reference = false;         ///< one-step-lagged remote current instead of algebraic coupling
    double v_limit = 2.0;                  ///< instability guard on |V|
    double speed_limit = 0.2;              ///< instability guard on |w - 1|
    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;

    void validate() const {
        if (!(h > 0.0)) throw ConfigError("solver.h must be positive");
        if (!(output_step >= h)) throw ConfigError("solver.output_step must be >= solver.h");
        if (!(t_end > 0.0)) throw ConfigError("solver.t_end must be positive");
        if (!(newton_tol > 0.0) || max_newton_iters < 1) throw ConfigError("solver Newton settings invalid");
    }
};

struct Scenario {
    int schema = scenario_schema_version;
    SystemInfo system;
    std::vector<BusData> buses;
    std::vector<Branch> branches;
    std::vector<LoadData> loads;
    std::vector<DeviceData> devices;
    std::vector<NetworkEvent> events;
    std::vector<MeasurementData> measurements;
    SolverConfig solver;
    std::vector<std::string> channels;

    friend bool operator==(const Scenario&, const Scenario&) = default;

    const DeviceData* find_device(const std::string& id) const {
        auto it = std::find_if(devices.begin(), devices.end(), [&](const DeviceData& d) { return d.id == id; });
        return it == devices.end() ? nullptr : &*it;
    }
    DeviceData* find_device(const std::string& id) {
        auto it = std::find_if(devices.begin(), devices.end(), [&](const DeviceData& d) { return d.id == id; });
        return it == devices.end() ? nullptr : &*it;
    }
    const MeasurementData* find_measurement(const std::string& channel) const {
        auto it = std::find_if(measurements.begin(), measurements.end(),
                               [&](const MeasurementData& m) { return m.channel == channel; });
        return it == measurements.end() ? nullptr : &*it;
    }

    void validate() const;
};

// ---------------------------------------------------------------------------
// JSON reading helpers

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError(where + ": unknown field '" + key + "'");
        }
    }
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
    return j.contains(key) ? field<T>(j, key, where) : fallback;
}

inline const json& array_field(const json& j, const char* key) {
    static const json empty = json::array();
    if (!j.contains(key)) return empty;
    if (!j.at(key).is_array()) throw ConfigError(std::string(key) + ": expected an array");
    return j.at(key);
}

inline std::string at(const char* section, std::size_t k) {
    return std::string(section) + "[" + std::to_string(k) + "]";
}

inline MachineParams machine_from_json(const json& j, const std::string& w, double rating) {
    check_keys(j, {"order", "H", "D", "ra", "xd", "xq", "xd1", "xq1", "xd2", "xq2", "td01", "tq01", "td02", "tq02"},
               w);
    MachineParams p;
    p.order = field<int>(j, "order", w);
    p.h = field<double>(j, "H", w);
    p.d = field_or<double>(j, "D", 0.0, w);
    p.ra = field_or<double>(j, "ra", 0.0, w);
    p.xd = field<double>(j, "xd", w);
    p.xq = field<double>(j, "xq", w);
    p.xd1 = field<double>(j, "xd1", w);
    p.xq1 = field<double>(j, "xq1", w);
    p.td01 = field<double>(j, "td01", w);
    p.tq01 = field<double>(j, "tq01", w);
    if (p.order == 6) {
        p.xd2 = field<double>(j, "xd2", w);
        p.xq2 = field<double>(j, "xq2", w);
        p.td02 = field<double>(j, "td02", w);
        p.tq02 = field<double>(j, "tq02", w);
    } else {
        p.xd2 = p.xd1;
        p.xq2 = p.xq1;
        p.td02 = p.tq02 = 0.0;
    }
    p.rating_mva = rating;
    return p;
}

inline json machine_to_json(const MachineParams& p) {
    json j{{"order", p.order}, {"H", p.h}, {"D", p.d}, {"ra", p.ra}, {"xd", p.xd}, {"xq", p.xq},
           {"xd1", p.xd1}, {"xq1", p.xq1}};
    if (p.order == 6) {
        j["xd2"] = p.xd2;
        j["xq2"] = p.xq2;
    }
    j["td01"] = p.td01;
    j["tq01"] = p.tq01;
    if (p.order == 6) {
        j["td02"] = p.td02;
        j["tq02"] = p.tq02;
    }
    return j;
}

inline AvrData avr_from_json(const json& j, const std::string& w) {
    const auto type = field<std::string>(j, "type", w);
    if (type == "dc1") {
        check_keys(j, {"type", "ka", "ta", "ke", "te", "kf", "tf", "vr_max", "vr_min"}, w);
        AvrDc1::Params p;
        p.ka = field<double>(j, "ka", w);
        p.ta = field<double>(j, "ta", w);
        p.ke = field<double>(j, "ke", w);
        p.te = field<double>(j, "te", w);
        p.kf = field<double>(j, "kf", w);
        p.tf = field<double>(j, "tf", w);
        p.vr_max = field<double>(j, "vr_max", w);
        p.vr_min = field<double>(j, "vr_min", w);
        if (!(p.ta > 0 && p.te > 0 && p.tf > 0)) throw ConfigError(w + ": time constants must be positive");
        return p;
    }
    if (type == "ac4") {
        check_keys(j, {"type", "tc", "tb", "ka", "ta", "vr_max", "vr_min"}, w);
        AvrAc4::Params p;
        p.tc = field<double>(j, "tc", w);
        p.tb = field<double>(j, "tb", w);
        p.ka = field<double>(j, "ka", w);
        p.ta = field<double>(j, "ta", w);
        p.vr_max = field<double>(j, "vr_max", w);
        p.vr_min = field<double>(j, "vr_min", w);
        if (!(p.ta > 0 && p.tb > 0)) throw ConfigError(w + ": time constants must be positive");
        return p;
    }
    throw ConfigError(w + ".type: unknown AVR type '" + type + "' (expected dc1|ac4)");
}

inline json avr_to_json(const AvrData& a) {
    if (const auto* p = std::get_if<AvrDc1::Params>(&a)) {
        return json{{"type", "dc1"}, {"ka", p->ka}, {"ta", p->ta}, {"ke", p->ke}, {"te", p->te},
                    {"kf", p->kf}, {"tf", p->tf}, {"vr_max", p->vr_max}, {"vr_min", p->vr_min}};
    }
    const auto& p = std::get<AvrAc4::Params>(a);
    return json{{"type", "ac4"}, {"tc", p.tc}, {"tb", p.tb}, {"ka", p.ka},
                {"ta", p.ta}, {"vr_max", p.vr_max}, {"vr_min", p.vr_min}};
}

inline OuParams noise_from_json(const json& j, const std::string& w) {
    check_keys(j, {"sigma", "alpha", "W", "seed"}, w);
    OuParams p;
    p.sigma = field_or<double>(j, "sigma", 0.01, w);
    p.alpha = field_or<double>(j, "alpha", 10.0, w);
    p.weight = field_or<double>(j, "W", 1.0, w);
    p.seed = field_or<std::uint64_t>(j, "seed", 1, w);
    if (p.sigma < 0.0 || !(p.alpha > 0.0)) throw ConfigError(w + ": sigma must be >= 0 and alpha > 0");
    return p;
}

}  // namespace detail

inline Scenario scenario_from_json(const json& root) {
    using namespace detail;
    check_keys(root, {"schema", "system", "buses", "branches", "loads", "devices", "events", "measurements", "solver",
                      "channels"},
               "scenario");
    Scenario s;
    s.schema = field_or<int>(root, "schema", scenario_schema_version, "scenario");
    if (s.schema != scenario_schema_version) {
        throw ConfigError("scenario.schema: unsupported version " + std::to_string(s.schema));
    }

    const json& sys = root.contains("system") ? root.at("system") : throw ConfigError("scenario: missing 'system'");
    check_keys(sys, {"name", "base_mva", "freq_hz", "slack_bus"}, "system");
    s.system.name = field_or<std::string>(sys, "name", "", "system");
    s.system.base_mva = field_or<double>(sys, "base_mva", 100.0, "system");
    s.system.freq_hz = field_or<double>(sys, "freq_hz", 60.0, "system");
    s.system.slack_bus = field<int>(sys, "slack_bus", "system");

    const auto& buses = array_field(root, "buses");
    for (std::size_t k = 0; k < buses.size(); ++k) {
        const auto w = at("buses", k);
        check_keys(buses[k], {"id", "base_kv", "g", "b"}, w);
        s.buses.push_back({field<int>(buses[k], "id", w), field_or<double>(buses[k], "base_kv", 0.0, w),
                           field_or<double>(buses[k], "g", 0.0, w), field_or<double>(buses[k], "b", 0.0, w)});
    }
    const auto& branches = array_field(root, "branches");
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const auto w = at("branches", k);
        const auto& j = branches[k];
        check_keys(j, {"from", "to", "r", "x", "b", "circuit", "in_service"}, w);
        Branch br;
        br.from = field<int>(j, "from", w);
        br.to = field<int>(j, "to", w);
        br.r = field_or<double>(j, "r", 0.0, w);
        br.x = field_or<double>(j, "x", 0.0, w);
        br.b = field_or<double>(j, "b", 0.0, w);
        br.circuit = field_or<int>(j, "circuit", 1, w);
        br.in_service = field_or<bool>(j, "in_service", true, w);
        s.branches.push_back(br);
    }
    const auto& loads = array_field(root, "loads");
    for (std::size_t k = 0; k < loads.size(); ++k) {
        const auto w = at("loads", k);
        check_keys(loads[k], {"bus", "p", "q"}, w);
        s.loads.push_back({field<int>(loads[k], "bus", w), field_or<double>(loads[k], "p", 0.0, w),
                           field_or<double>(loads[k], "q", 0.0, w)});
    }
    const auto& devices = array_field(root, "devices");
    for (std::size_t k = 0; k < devices.size(); ++k) {
        const auto& j = devices[k];
        const auto w = at("devices", k);
        check_keys(j, {"id", "type", "bus", "p", "v", "rating_mva", "machine", "avr", "governor", "pss", "coherency"},
                   w);
        DeviceData d;
        d.id = field<std::string>(j, "id", w);
        d.type = field_or<std::string>(j, "type", "sm", w);
        if (d.type != "sm" && d.type != "ibr") throw ConfigError(w + ".type: expected sm|ibr");
        d.bus = field<int>(j, "bus", w);
        d.p = field_or<double>(j, "p", 0.0, w);
        d.v = field_or<double>(j, "v", 1.0, w);
        d.rating_mva = field<double>(j, "rating_mva", w);
        if (j.contains("machine")) d.machine = machine_from_json(j.at("machine"), w + ".machine", d.rating_mva);
        if (j.contains("avr")) d.avr = avr_from_json(j.at("avr"), w + ".avr");
        if (j.contains("governor")) {
            const auto& g = j.at("governor");
            const auto wg = w + ".governor";
            check_keys(g, {"R", "t_max", "t_min", "ts", "tc", "t3", "t4", "t5"}, wg);
            TurbineGovernorType1::Params p;
            p.r = field<double>(g, "R", wg);
            p.t_max = field_or<double>(g, "t_max", p.t_max, wg);
            p.t_min = field_or<double>(g, "t_min", p.t_min, wg);
            p.ts = field<double>(g, "ts", wg);
            p.tc = field<double>(g, "tc", wg);
            p.t3 = field_or<double>(g, "t3", 0.0, wg);
            p.t4 = field_or<double>(g, "t4", 0.0, wg);
            p.t5 = field<double>(g, "t5", wg);
            if (!(p.r > 0 && p.ts > 0 && p.tc > 0 && p.t5 > 0)) throw ConfigError(wg + ": R and time constants must be positive");
            d.governor = p;
        }
        if (j.contains("pss")) {
            const auto& g = j.at("pss");
            const auto wp = w + ".pss";
            check_keys(g, {"kw", "tw", "t1", "t2", "t3", "t4", "vs_max", "vs_min"}, wp);
            Pss2::Params p;
            p.kw = field<double>(g, "kw", wp);
            p.tw = field<double>(g, "tw", wp);
            p.t1 = field<double>(g, "t1", wp);
            p.t2 = field<double>(g, "t2", wp);
            p.t3 = field<double>(g, "t3", wp);
            p.t4 = field<double>(g, "t4", wp);
            p.vs_max = field<double>(g, "vs_max", wp);
            p.vs_min = field<double>(g, "vs_min", wp);
            if (!(p.tw > 0 && p.t2 > 0 && p.t4 > 0)) throw ConfigError(wp + ": time constants must be positive");
            d.pss = p;
        }
        if (j.contains("coherency")) {
            const auto& c = j.at("coherency");
            const auto wc = w + ".coherency";
            check_keys(c, {"C", "reference", "mode", "pll_kp", "pll_ki", "tau_idq"}, wc);
            CoherencyData cd;
            cd.share = field<double>(c, "C", wc);
            cd.reference = field<std::string>(c, "reference", wc);
            cd.mode = parse_mode(field_or<std::string>(c, "mode", "complex", wc));
            cd.pll.kp = field_or<double>(c, "pll_kp", 0.1, wc);
            cd.pll.ki = field_or<double>(c, "pll_ki", 0.05, wc);
            cd.tau_idq = field_or<double>(c, "tau_idq", 0.01, wc);
            d.coherency = cd;
        }
        s.devices.push_back(std::move(d));
    }
    const auto& events = array_field(root, "events");
    for (std::size_t k = 0; k < events.size(); ++k) {
        const auto& j = events[k];
        const auto w = at("events", k);
        check_keys(j, {"t", "kind", "bus", "from", "to", "circuit", "g", "b"}, w);
        const auto kind = field<std::string>(j, "kind", w);
        const double t = field<double>(j, "t", w);
        if (kind == "branch_trip") {
            s.events.push_back(NetworkEvent::branch_trip(t, field<int>(j, "from", w), field<int>(j, "to", w),
                                                         field_or<int>(j, "circuit", 1, w)));
        } else if (kind == "fault_apply") {
            const Complex y{field_or<double>(j, "g", default_fault_admittance.real(), w),
                            field_or<double>(j, "b", default_fault_admittance.imag(), w)};
            s.events.push_back(NetworkEvent::fault_apply(t, field<int>(j, "bus", w), y));
        } else if (kind == "fault_clear") {
            s.events.push_back(NetworkEvent::fault_clear(t, field<int>(j, "bus", w)));
        } else {
            throw ConfigError(w + ".kind: unknown event kind '" + kind + "'");
        }
    }
    const auto& meas = array_field(root, "measurements");
    for (std::size_t k = 0; k < meas.size(); ++k) {
        const auto& j = meas[k];
        const auto w = at("measurements", k);
        check_keys(j, {"channel", "delay", "noise", "noise_base", "estimator_tau"}, w);
        MeasurementData m;
        m.channel = field<std::string>(j, "channel", w);
        m.delay = field_or<double>(j, "delay", 0.0, w);
        if (j.contains("noise")) m.noise = noise_from_json(j.at("noise"), w + ".noise");
        m.noise_base = field_or<std::string>(j, "noise_base", "signal", w);
        m.estimator_tau = field_or<double>(j, "estimator_tau", 0.02, w);
        s.measurements.push_back(std::move(m));
    }
    if (root.contains("solver")) {
        const auto& j = root.at("solver");
        check_keys(j, {"h", "t_end", "output_step", "newton_tol", "max_newton_iters", "auto_step", "lagged_reference",
                       "v_limit", "speed_limit"},
                   "solver");
        auto& c = s.solver;
        c.h = field_or<double>(j, "h", c.h, "solver");
        c.t_end = field_or<double>(j, "t_end", c.t_end, "solver");
        c.output_step = field_or<double>(j, "output_step", c.output_step, "solver");
        c.newton_tol = field_or<double>(j, "newton_tol", c.newton_tol, "solver");
        c.max_newton_iters = field_or<int>(j, "max_newton_iters", c.max_newton_iters, "solver");
        c.auto_step = field_or<bool>(j, "auto_step", c.auto_step, "solver");
        c.lagged_reference = field_or<bool>(j, "lagged_reference", c.lagged_reference, "solver");
        c.v_limit = field_or<double>(j, "v_limit", c.v_limit, "solver");
        c.speed_limit = field_or<double>(j, "speed_limit", c.speed_limit, "solver");
    }
    if (root.contains("channels")) s.channels = field<std::vector<std::string>>(root, "channels", "scenario");
    s.validate();
    return s;
}

inline json scenario_to_json(const Scenario& s) {
    json root;
    root["schema"] = s.schema;
    root["system"] = json{{"name", s.system.name},
                          {"base_mva", s.system.base_mva},
                          {"freq_hz", s.system.freq_hz},
                          {"slack_bus", s.system.slack_bus}};
    root["buses"] = json::array();
    for (const auto& b : s.buses) {
        root["buses"].push_back(json{{"id", b.id}, {"base_kv", b.base_kv}, {"g", b.g_shunt}, {"b", b.b_shunt}});
    }
    root["branches"] = json::array();
    for (const auto& b : s.branches) {
        json j{{"from", b.from}, {"to", b.to}, {"r", b.r}, {"x", b.x}, {"b", b.b}, {"circuit", b.circuit}};
        if (!b.in_service) j["in_service"] = false;
        root["branches"].push_back(j);
    }
    root["loads"] = json::array();
    for (const auto& l : s.loads) root["loads"].push_back(json{{"bus", l.bus}, {"p", l.p}, {"q", l.q}});
    root["devices"] = json::array();
    for (const auto& d : s.devices) {
        json j{{"id", d.id}, {"type", d.type}, {"bus", d.bus}, {"p", d.p}, {"v", d.v}, {"rating_mva", d.rating_mva}};
        if (d.machine) j["machine"] = detail::machine_to_json(*d.machine);
        if (d.avr) j["avr"] = detail::avr_to_json(*d.avr);
        if (d.governor) {
            const auto& g = *d.governor;
            j["governor"] = json{{"R", g.r},   {"t_max", g.t_max}, {"t_min", g.t_min}, {"ts", g.ts},
                                 {"tc", g.tc}, {"t3", g.t3},       {"t4", g.t4},       {"t5", g.t5}};
        }
        if (d.pss) {
            const auto& p = *d.pss;
            j["pss"] = json{{"kw", p.kw}, {"tw", p.tw}, {"t1", p.t1}, {"t2", p.t2},
                            {"t3", p.t3}, {"t4", p.t4}, {"vs_max", p.vs_max}, {"vs_min", p.vs_min}};
        }
        if (d.coherency) {
            const auto& c = *d.coherency;
            j["coherency"] = json{{"C", c.share},         {"reference", c.reference}, {"mode", to_string(c.mode)},
                                  {"pll_kp", c.pll.kp},   {"pll_ki", c.pll.ki},       {"tau_idq", c.tau_idq}};
        }
        root["devices"].push_back(j);
    }
    root["events"] = json::array();
    for (const auto& e : s.events) {
        json j{{"t", e.time}};
        switch (e.kind) {
            case EventKind::BranchTrip:
                j["kind"] = "branch_trip";
                j["from"] = e.from;
                j["to"] = e.to;
                j["circuit"] = e.circuit;
                break;
            case EventKind::FaultApply:
                j["kind"] = "fault_apply";
                j["bus"] = e.bus;
                j["g"] = e.y_fault.real();
                j["b"] = e.y_fault.imag();
                break;
            case EventKind::FaultClear:
                j["kind"] = "fault_clear";
                j["bus"] = e.bus;
                break;
        }
        root["events"].push_back(j);
    }
    root["measurements"] = json::array();
    for (const auto& m : s.measurements) {
        json j{{"channel", m.channel}, {"delay", m.delay}};
        if (m.noise) {
            j["noise"] = json{{"sigma", m.noise->sigma}, {"alpha", m.noise->alpha}, {"W", m.noise->weight},
                              {"seed", m.noise->seed}};
        }
        j["noise_base"] = m.noise_base;
        j["estimator_tau"] = m.estimator_tau;
        root["measurements"].push_back(j);
    }
    const auto& c = s.solver;
    root["solver"] = json{{"h", c.h},
                          {"t_end", c.t_end},
                          {"output_step", c.output_step},
                          {"newton_tol", c.newton_tol},
                          {"max_newton_iters", c.max_newton_iters},
                          {"auto_step", c.auto_step},
                          {"lagged_reference", c.lagged_reference},
                          {"v_limit", c.v_limit},
                          {"speed_limit", c.speed_limit}};
    root["channels"] = s.channels;
    return root;
}

inline json parse_scenario_text(std::string_view text, const std::string& origin) {
    try {
        return json::parse(text.begin(), text.end(), nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

inline json read_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Dotted-path overrides: "solver.h=0.0025", "devices.G1.coherency.C=0.5".
// Array segments match an element by its "id" (or "channel") field or by
// numeric index.

inline json parse_override_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);
    }
}

inline void apply_override(json& root, const std::string& path, const json& value) {
    json* node = &root;
    std::string::size_type pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string seg = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (seg.empty()) throw ConfigError("override '" + path + "': empty path segment");
        const bool last = dot == std::string::npos;
        if (node->is_array()) {
            json* found = nullptr;
            for (auto& el : *node) {
                for (const char* key : {"id", "channel"}) {
                    if (el.is_object() && el.contains(key) &&
                        ((el[key].is_string() && el[key].get<std::string>() == seg) ||
                         (el[key].is_number_integer() && std::to_string(el[key].get<long long>()) == seg))) {
                        found = &el;
                    }
                }
            }
            if (!found) {
                std::size_t idx = 0;
                auto [p, ec] = std::from_chars(seg.data(), seg.data() + seg.size(), idx);
                if (ec != std::errc{} || p != seg.data() + seg.size() || idx >= node->size()) {
                    throw ConfigError("override '" + path + "': no element '" + seg + "'");
                }
                found = &(*node)[idx];
            }
            if (last) {
                *found = value;
                return;
            }
            node = found;
        } else {
            if (!node->is_object()) throw ConfigError("override '" + path + "': '" + seg + "' is not an object");
            if (last) {
                (*node)[seg] = value;
                return;
            }
            node = &(*node)[seg];
            if (node->is_null()) *node = json::object();
        }
        pos = dot + 1;
    }
}

// ---------------------------------------------------------------------------

inline void Scenario::validate() const {
    solver.validate();
    if (!(system.base_mva > 0.0) || !(system.freq_hz > 0.0)) throw ConfigError("system: base_mva and freq_hz must be positive");
    std::set<int> bus_ids;
    for (const auto& b : buses) {
        if (!bus_ids.insert(b.id).second) throw ConfigError("buses: duplicate id " + std::to_string(b.id));
    }
    auto need_bus = [&](int id, const std::string& who) {
        if (!bus_ids.contains(id)) throw ConfigError(who + ": unknown bus " + std::to_string(id));
    };
    need_bus(system.slack_bus, "system.slack_bus");
    for (const auto& b : branches) {
        need_bus(b.from, "branch");
        need_bus(b.to, "branch");
        if (b.r == 0.0 && b.x == 0.0) throw ConfigError("branch " + std::to_string(b.from) + "-" + std::to_string(b.to) + ": zero impedance");
    }
    for (const auto& l : loads) need_bus(l.bus, "load");

    std::set<std::string> ids;
    std::set<int> device_buses;
    bool slack_has_device = false;
    for (const auto& d : devices) {
        const std::string who = "device " + d.id;
        if (d.id.empty() || d.id.find('.') != std::string::npos) throw ConfigError(who + ": id must be non-empty without '.'");
        if (!ids.insert(d.id).second) throw ConfigError("devices: duplicate id " + d.id);
        need_bus(d.bus, who);
        if (!device_buses.insert(d.bus).second) {
            throw ConfigError(who + ": more than one device at bus " + std::to_string(d.bus));
        }
        slack_has_device = slack_has_device || d.bus == system.slack_bus;
        if (!(d.v > 0.0)) throw ConfigError(who + ": voltage set point must be positive");
        if (d.type == "sm") {
            if (!d.machine) throw ConfigError(who + ": synchronous machine needs a 'machine' block");
            d.machine->validate(who);
        }
        if (d.coherency) {
            const auto& c = *d.coherency;
            if (!(c.share >= 0.0 && c.share <= 1.0)) {
                throw ConfigError(who + ".coherency.C=" + std::to_string(c.share) + ": C must lie in [0, 1]");
            }
            if (c.reference == d.id) throw ConfigError(who + ".coherency.reference: device cannot reference itself");
            if (!(c.tau_idq > 0.0)) throw ConfigError(who + ".coherency.tau_idq must be positive");
        } else if (d.type == "ibr") {
            throw ConfigError(who + ": inverter needs a 'coherency' block");
        }
    }
    if (!slack_has_device) throw ConfigError("system.slack_bus: no device at the slack bus");
    for (const auto& d : devices) {
        if (d.coherency && !find_device(d.coherency->reference)) {
            throw ConfigError("device " + d.id + ".coherency.reference: unknown device '" + d.coherency->reference + "'");
        }
    }
    for (const auto& e : events) {
        if (e.time < 0.0) throw ConfigError("events: negative time");
        if (e.kind == EventKind::BranchTrip) {
            const bool found = std::any_of(branches.begin(), branches.end(), [&](const Branch& b) {
                return b.connects(e.from, e.to) && b.circuit == e.circuit;
            });
            if (!found) {
                throw ConfigError("events: branch_trip targets missing branch " + std::to_string(e.from) + "-" +
                                  std::to_string(e.to) + " circuit " + std::to_string(e.circuit));
            }
        } else {
            need_bus(e.bus, "event");
        }
    }
    // fault_clear must follow a matching fault_apply
    std::vector<NetworkEvent> ordered = events;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const NetworkEvent& a, const NetworkEvent& b) { return a.time < b.time; });
    std::set<int> faulted;
    for (const auto& e : ordered) {
        if (e.kind == EventKind::FaultApply) faulted.insert(e.bus);
        if (e.kind == EventKind::FaultClear && faulted.erase(e.bus) == 0) {
            throw ConfigError("events: fault_clear at bus " + std::to_string(e.bus) + " without a preceding fault_apply");
        }
    }
    for (const auto& m : measurements) {
        const auto dot = m.channel.rfind('.');
        if (dot == std::string::npos) throw ConfigError("measurement '" + m.channel + "': expected <device>.iext or <device>.cf");
        const auto dev = m.channel.substr(0, dot), kind = m.channel.substr(dot + 1);
        const auto* d = find_device(dev);
        if (!d) throw ConfigError("measurement '" + m.channel + "': unknown device '" + dev + "'");
        if (kind == "iext") {
            if (!d->coherency) throw ConfigError("measurement '" + m.channel + "': device has no coherency controller");
        } else if (kind != "cf") {
            throw ConfigError("measurement '" + m.channel + "': expected <device>.iext or <device>.cf");
        }
        if (m.delay < 0.0) throw ConfigError("measurement '" + m.channel + "': negative delay");
        if (!(m.estimator_tau > 0.0)) throw ConfigError("measurement '" + m.channel + "': estimator_tau must be positive");
        if (m.noise_base != "signal" && m.noise_base != "device" && m.noise_base != "system") {
            throw ConfigError("measurement '" + m.channel + "': noise_base must be signal|device|system");
        }
    }
}

}  // namespace cohsim
