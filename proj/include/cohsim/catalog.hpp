#pragma once

// Built-in systems, setting aliases and the experiment catalog.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cohsim/builtin_data.hpp"
#include "cohsim/engine.hpp"
#include "cohsim/metrics.hpp"
#include "cohsim/scenario.hpp"

namespace cohsim {

inline std::vector<std::string> builtin_systems() {
    std::vector<std::string> out;
    for (const auto& [name, _] : builtin::systems) out.emplace_back(name);
    return out;
}

inline std::optional<std::string_view> builtin_text(std::string_view name) {
    for (const auto& [n, text] : builtin::systems) {
        if (n == name) return text;
    }
    return std::nullopt;
}

/// Built-in system name or path to a scenario file.
inline json load_scenario_json(const std::string& source) {
    if (auto text = builtin_text(source)) return parse_scenario_text(*text, source);
    return read_scenario_file(source);
}

inline Scenario load_scenario(const std::string& source) { return scenario_from_json(load_scenario_json(source)); }

// ---------------------------------------------------------------------------
// Settings: dotted paths plus a few experiment-level aliases
//   C=<share>        every coherency block
//   C71=<share>      coherency block of G7
//   mode=none|conventional|complex   (none sets C = 0)
//   tau_d=<s>        delay on every coherency input
//   W=<weight>       OU noise on every coherency input (sigma 0.01, alpha 10)
//   seed=<u64>       seed of every noise block

namespace detail {

inline std::vector<json*> coherency_devices(json& root) {
    std::vector<json*> out;
    if (!root.contains("devices")) return out;
    for (auto& d : root["devices"]) {
        if (d.contains("coherency")) out.push_back(&d);
    }
    return out;
}

inline json& iext_measurement(json& root, const std::string& device) {
    if (!root.contains("measurements")) root["measurements"] = json::array();
    const std::string channel = device + ".iext";
    for (auto& m : root["measurements"]) {
        if (m.value("channel", "") == channel) return m;
    }
    root["measurements"].push_back(json{{"channel", channel}});
    return root["measurements"].back();
}

inline double number(const std::string& key, const json& v) {
    if (!v.is_number()) throw ConfigError("setting '" + key + "' expects a number");
    return v.get<double>();
}

}  // namespace detail

inline void apply_setting(json& root, const std::string& key, const std::string& text) {
    const json value = parse_override_value(text);
    if (key == "C") {
        const double c = detail::number(key, value);
        for (auto* d : detail::coherency_devices(root)) (*d)["coherency"]["C"] = c;
    } else if (key == "C71") {
        apply_override(root, "devices.G7.coherency.C", json(detail::number(key, value)));
    } else if (key == "mode") {
        const std::string m = value.is_string() ? value.get<std::string>() : text;
        for (auto* d : detail::coherency_devices(root)) {
            if (m == "none") {
                (*d)["coherency"]["C"] = 0.0;
            } else {
                (*d)["coherency"]["mode"] = to_string(parse_mode(m));
            }
        }
    } else if (key == "tau_d") {
        const double tau = detail::number(key, value);
        for (auto* d : detail::coherency_devices(root)) {
            detail::iext_measurement(root, (*d)["id"].get<std::string>())["delay"] = tau;
        }
    } else if (key == "W") {
        const double w = detail::number(key, value);
        for (auto* d : detail::coherency_devices(root)) {
            auto& m = detail::iext_measurement(root, (*d)["id"].get<std::string>());
            if (!m.contains("noise")) m["noise"] = json{{"sigma", 0.01}, {"alpha", 10.0}, {"seed", 1}};
            m["noise"]["W"] = w;
        }
    } else if (key == "seed") {
        if (!value.is_number_unsigned() && !value.is_number_integer()) throw ConfigError("seed expects an integer");
        if (root.contains("measurements")) {
            for (auto& m : root["measurements"]) {
                if (m.contains("noise")) m["noise"]["seed"] = value;
            }
        }
    } else {
        apply_override(root, key, value);
    }
}

using Setting = std::pair<std::string, std::string>;

inline Setting parse_setting(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("setting '" + kv + "': expected key=value");
    return {kv.substr(0, eq), kv.substr(eq + 1)};
}

// ---------------------------------------------------------------------------
// Experiments

struct SweepPoint {
    std::string label;
    double value = 0.0;
    std::vector<Setting> settings;
};

struct AssertionResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct PointOutcome {
    SweepPoint point;
    RunResult result;
    double event_time = 0.0;
};

struct ExperimentSpec {
    std::string id;
    std::string system;
    std::string description;
    std::string axis;
    json events = json::array();
    double t_end = 20.0;
    std::vector<Setting> settings;   ///< applied to every point
    std::vector<SweepPoint> points;
    std::function<std::vector<AssertionResult>(const std::vector<PointOutcome>&)> check;
};

inline double first_event_time(const Scenario& sc) {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& e : sc.events) t = std::min(t, e.time);
    return std::isfinite(t) ? t : 0.0;
}

/// Peak ratio of a channel; UNSTABLE runs rank as +inf, an absent ratio as 0
/// (no second peak: fully damped).
inline double ranked_peak_ratio(const PointOutcome& o, const std::string& channel = "coi.freq") {
    if (o.result.status != RunStatus::Stable) return std::numeric_limits<double>::infinity();
    const auto m = damping_metrics(o.result.series.t, o.result.series.channel(channel), o.event_time);
    return m.peak_ratio.value_or(0.0);
}

inline DampingMetrics channel_metrics(const PointOutcome& o, const std::string& channel = "coi.freq") {
    return damping_metrics(o.result.series.t, o.result.series.channel(channel), o.event_time);
}

/// Largest |x(t) - x(0)| of a channel.
inline double max_deviation(const TimeSeries& ts, const std::string& channel) {
    const auto& x = ts.channel(channel);
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v - x.front()));
    return m;
}

/// Pearson correlation of two channels over [t0, t1].
inline double window_correlation(const TimeSeries& ts, const std::string& a, const std::string& b, double t0,
                                 double t1) {
    std::vector<double> xa, xb;
    const auto& ca = ts.channel(a);
    const auto& cb = ts.channel(b);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        if (ts.t[k] >= t0 - 1e-9 && ts.t[k] <= t1 + 1e-9) {
            xa.push_back(ca[k]);
            xb.push_back(cb[k]);
        }
    }
    return pearson(xa, xb);
}

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

inline std::string join_values(const std::vector<PointOutcome>& runs, const std::function<double(const PointOutcome&)>& f) {
    std::string s;
    for (const auto& r : runs) s += (s.empty() ? "" : ", ") + r.point.label + ": " + fmt(f(r));
    return s;
}

inline bool all_finished(const std::vector<PointOutcome>& runs, std::vector<AssertionResult>& out) {
    for (const auto& r : runs) {
        if (r.result.status == RunStatus::Failed) {
            out.push_back({"all runs complete", false, r.point.label + " FAILED: " + r.result.message});
            return false;
        }
    }
    return true;
}

inline std::vector<SweepPoint> points(const std::string& key, std::initializer_list<std::pair<std::string, double>> v) {
    std::vector<SweepPoint> out;
    for (const auto& [label, value] : v) {
        std::ostringstream os;
        os.precision(17);
        os << value;
        out.push_back({label, value, {{key, os.str()}}});
    }
    return out;
}

inline json kundur_trip() {
    return json::array({json{{"t", 1.0}, {"kind", "branch_trip"}, {"from", 7}, {"to", 8}, {"circuit", 2}}});
}

inline json ieee39_fault() {
    return json::array({json{{"t", 1.0}, {"kind", "fault_apply"}, {"bus", 1}},
                        json{{"t", 1.12}, {"kind", "fault_clear"}, {"bus", 1}}});
}

}  // namespace detail

inline std::vector<ExperimentSpec> catalog() {
    using detail::join_values;
    std::vector<ExperimentSpec> out;

    {
        ExperimentSpec e;
        e.id = "EXP-CSWEEP";
        e.system = "kundur2a";
        e.description = "Coherency share sweep at G1, G2, G4 (reference G3); trip of one 7-8 circuit";
        e.axis = "C";
        e.events = detail::kundur_trip();
        e.points = detail::points("C", {{"C=0", 0.0}, {"C=0.25", 0.25}, {"C=0.5", 0.5}, {"C=0.75", 0.75}, {"C=1", 1.0}});
        e.check = [](const std::vector<PointOutcome>& runs) {
            std::vector<AssertionResult> res;
            if (!detail::all_finished(runs, res)) return res;
            auto p2p = [](const PointOutcome& o) { return channel_metrics(o).peak_to_peak; };
            bool dec = true;
            for (std::size_t k = 1; k < runs.size(); ++k) dec = dec && p2p(runs[k]) < p2p(runs[k - 1]);
            res.push_back({"peak_to_peak(coi.freq) strictly decreasing in C", dec, join_values(runs, p2p)});
            const double ratio = p2p(runs.back()) / p2p(runs.front());
            res.push_back({"peak_to_peak(C=1) <= 0.5 peak_to_peak(C=0)", ratio <= 0.5, "ratio " + detail::fmt(ratio)});
            return res;
        };
        out.push_back(std::move(e));
    }
    {
        ExperimentSpec e;
        e.id = "EXP-DELAY";
        e.system = "kundur2a";
        e.description = "First-order delay on the reference current, C = 0.25; trip of one 7-8 circuit";
        e.axis = "tau_d";
        e.events = detail::kundur_trip();
        e.settings = {{"C", "0.25"}};
        e.points = detail::points("tau_d", {{"tau_d=0.01", 0.01}, {"tau_d=0.1", 0.1}, {"tau_d=1", 1.0}});
        e.check = [](const std::vector<PointOutcome>& runs) {
            std::vector<AssertionResult> res;
            if (!detail::all_finished(runs, res)) return res;
            auto pr = [](const PointOutcome& o) { return ranked_peak_ratio(o); };
            res.push_back({"peak_ratio(coi.freq) increasing in tau_d", pr(runs[0]) < pr(runs[1]) && pr(runs[1]) < pr(runs[2]),
                           join_values(runs, pr)});
            const bool unstable = runs[2].result.status == RunStatus::Unstable;
            res.push_back({"tau_d=1 UNSTABLE or peak_ratio >= 0.9", unstable || pr(runs[2]) >= 0.9,
                           unstable ? "UNSTABLE: " + runs[2].result.message : "peak_ratio " + detail::fmt(pr(runs[2]))});
            return res;
        };
        out.push_back(std::move(e));
    }
    {
        ExperimentSpec e;
        e.id = "EXP-NOISE";
        e.system = "kundur2a";
        e.description = "Ornstein-Uhlenbeck noise on the reference current, C = 0.25; no contingency";
        e.axis = "W";
        e.settings = {{"C", "0.25"}};
        e.points = detail::points("W", {{"W=1", 1.0}, {"W=10", 10.0}, {"W=50", 50.0}});
        e.check = [](const std::vector<PointOutcome>& runs) {
            std::vector<AssertionResult> res;
            if (!detail::all_finished(runs, res)) return res;
            auto dv = [](const PointOutcome& o) { return max_deviation(o.result.series, "bus1.vmag"); };
            res.push_back({"max |dv| at bus 1 increasing in W", dv(runs[0]) < dv(runs[1]) && dv(runs[1]) < dv(runs[2]),
                           join_values(runs, dv)});
            const double w50 = dv(runs[2]);
            res.push_back({"max |dv| at bus 1 for W=50 within [0.025, 0.10] pu", w50 >= 0.025 && w50 <= 0.10,
                           detail::fmt(w50) + " pu"});
            return res;
        };
        out.push_back(std::move(e));
    }
    {
        ExperimentSpec e;
        e.id = "EXP-MODE";
        e.system = "kundur2a";
        e.description = "No coherency vs conventional vs complex coherency, C = 0.25; trip of one 7-8 circuit";
        e.axis = "mode";
        e.events = detail::kundur_trip();
        e.settings = {{"C", "0.25"}};
        e.points = {{"none", 0.0, {{"mode", "none"}}},
                    {"conventional", 1.0, {{"mode", "conventional"}}},
                    {"complex", 2.0, {{"mode", "complex"}}}};
        e.check = [](const std::vector<PointOutcome>& runs) {
            std::vector<AssertionResult> res;
            if (!detail::all_finished(runs, res)) return res;
            auto pr = [](const PointOutcome& o) { return ranked_peak_ratio(o); };
            res.push_back({"peak_ratio(complex) <= peak_ratio(conventional) < peak_ratio(none)",
                           pr(runs[2]) <= pr(runs[1]) && pr(runs[1]) < pr(runs[0]), join_values(runs, pr)});
            return res;
        };
        out.push_back(std::move(e));
    }
    {
        ExperimentSpec e;
        e.id = "EXP-39FAULT";
        e.system = "ieee39";
        e.description = "Three-phase fault at bus 1 cleared after 120 ms; G7 replaced by an inverter imitating G1";
        e.axis = "C71";
        e.events = detail::ieee39_fault();
        e.t_end = 15.0;
        e.points = detail::points("C71", {{"C71=0", 0.0}, {"C71=1", 1.0}});
        e.check = [](const std::vector<PointOutcome>& runs) {
            std::vector<AssertionResult> res;
            if (!detail::all_finished(runs, res)) return res;
            auto ts = [](const PointOutcome& o) { return channel_metrics(o).settling_time; };
            auto pr = [](const PointOutcome& o) { return ranked_peak_ratio(o); };
            res.push_back({"settling_time(coi.freq) smaller with C71=1", ts(runs[1]) < ts(runs[0]), join_values(runs, ts)});
            res.push_back({"peak_ratio(coi.freq) smaller with C71=1", pr(runs[1]) < pr(runs[0]), join_values(runs, pr)});
            return res;
        };
        out.push_back(std::move(e));
    }
    {
        ExperimentSpec e;
        e.id = "EXP-39CLUSTER";
        e.system = "ieee39";
        e.description = "Complex-frequency clustering of G1, G6, G7, G10 after the bus 1 fault";
        e.axis = "C71";
        e.events = detail::ieee39_fault();
        e.t_end = 15.0;
        e.points = detail::points("C71", {{"C71=0", 0.0}, {"C71=1", 1.0}});
        e.check = [](const std::vector<PointOutcome>& runs) {
            std::vector<AssertionResult> res;
            if (!detail::all_finished(runs, res)) return res;
            auto corr = [](const PointOutcome& o) {
                return window_correlation(o.result.series, "G6.wdev", "G1.wdev", o.event_time + 2.0, o.event_time + 10.0);
            };
            res.push_back({"corr(G6.wdev, G1.wdev) negative with C71=0", corr(runs[0]) < 0.0, join_values(runs, corr)});
            res.push_back({"corr(G6.wdev, G1.wdev) larger with C71=1", corr(runs[1]) > corr(runs[0]), join_values(runs, corr)});
            return res;
        };
        out.push_back(std::move(e));
    }
    return out;
}

inline const ExperimentSpec& find_experiment(const std::vector<ExperimentSpec>& cat, const std::string& id) {
    for (const auto& e : cat) {
        if (e.id == id) return e;
    }
    throw ConfigError("unknown experiment '" + id + "'");
}

/// Scenario JSON of one sweep point with extra user settings applied last.
inline json experiment_json(const ExperimentSpec& e, const SweepPoint& p, const std::vector<Setting>& extra = {}) {
    json root = load_scenario_json(e.system);
    root["events"] = e.events;
    root["solver"]["t_end"] = e.t_end;
    for (const auto& [k, v] : e.settings) apply_setting(root, k, v);
    for (const auto& [k, v] : p.settings) apply_setting(root, k, v);
    for (const auto& [k, v] : extra) apply_setting(root, k, v);
    return root;
}

inline Scenario experiment_scenario(const ExperimentSpec& e, const SweepPoint& p, const std::vector<Setting>& extra = {}) {
    return scenario_from_json(experiment_json(e, p, extra));
}

/// Runs one point; initialization errors come back as FAILED runs.
inline PointOutcome run_point(const ExperimentSpec& e, const SweepPoint& p, const std::vector<Setting>& extra = {}) {
    PointOutcome o;
    o.point = p;
    const Scenario sc = experiment_scenario(e, p, extra);
    o.event_time = first_event_time(sc);
    try {
        o.result = run(sc);
    } catch (const InitError& err) {
        o.result.status = RunStatus::Failed;
        o.result.message = err.what();
    } catch (const SolveError& err) {
        o.result.status = RunStatus::Failed;
        o.result.message = err.what();
    }
    return o;
}

}  // namespace cohsim
