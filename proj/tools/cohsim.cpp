// cohsim: run scenarios and catalog experiments.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 assertion failure, 5 run flagged UNSTABLE.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "cohsim/cohsim.hpp"

namespace fs = std::filesystem;
using namespace cohsim;

namespace {

constexpr int kOk = 0, kConfig = 2, kNumerical = 3, kAssertion = 4, kUnstable = 5;

int exit_code(RunStatus s) {
    switch (s) {
        case RunStatus::Stable: return kOk;
        case RunStatus::Unstable: return kUnstable;
        case RunStatus::Failed: return kNumerical;
    }
    return kNumerical;
}

std::string sanitize(std::string s) {
    for (auto& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    }
    return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Stacked line plots, one panel per channel.
void write_svg(const fs::path& path, const TimeSeries& ts, const std::vector<std::string>& channels,
               const std::string& title) {
    const double w = 720, panel = 180, left = 70, right = 20, top = 30;
    std::ofstream os(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
       << top + panel * static_cast<double>(channels.size()) + 20 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
    const double t0 = ts.t.empty() ? 0.0 : ts.t.front(), t1 = ts.t.empty() ? 1.0 : ts.t.back();
    for (std::size_t p = 0; p < channels.size(); ++p) {
        const auto& x = ts.channel(channels[p]);
        double lo = *std::min_element(x.begin(), x.end()), hi = *std::max_element(x.begin(), x.end());
        if (hi - lo < 1e-12) {
            lo -= 1e-6;
            hi += 1e-6;
        }
        const double y0 = top + panel * static_cast<double>(p), ph = panel - 40, pw = w - left - right;
        os << "<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph
           << "\" fill=\"none\" stroke=\"#999\"/>\n";
        os << "<text x=\"" << left + 4 << "\" y=\"" << y0 + 12 << "\">" << channels[p] << "</text>\n";
        os << "<text x=\"4\" y=\"" << y0 + 10 << "\">" << format_number(hi) << "</text>\n";
        os << "<text x=\"4\" y=\"" << y0 + ph << "\">" << format_number(lo) << "</text>\n";
        os << "<text x=\"" << left << "\" y=\"" << y0 + ph + 14 << "\">" << format_number(t0) << " s</text>\n";
        os << "<text x=\"" << left + pw - 40 << "\" y=\"" << y0 + ph + 14 << "\">" << format_number(t1) << " s</text>\n";
        os << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1\" points=\"";
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double px = left + pw * (ts.t[k] - t0) / (t1 - t0);
            const double py = y0 + ph * (1.0 - (x[k] - lo) / (hi - lo));
            os << format_number(px) << ',' << format_number(py) << ' ';
        }
        os << "\"/>\n";
    }
    os << "</svg>\n";
}

MetricsReport run_metrics(const Scenario& sc, const RunResult& r, double event_time) {
    MetricsReport m;
    m.set("status", to_string(r.status));
    if (!r.message.empty()) m.set("message", r.message);
    m.set("system", sc.system.name);
    m.set("solver.h", r.h);
    m.set("solver.t_end", sc.solver.t_end);
    m.set("solver.output_step", sc.solver.output_step);
    m.set("t_reached", r.t_reached);
    m.set("steps", static_cast<double>(r.steps));
    m.set("jacobian_updates", static_cast<double>(r.jacobian_updates));
    m.set("max_power_balance", r.max_power_balance);
    m.set("event_time", event_time);
    if (r.coi_from_pll) m.set("coi.source", "pll");
    for (const auto& name : r.series.names()) {
        const auto dm = damping_metrics(r.series.t, r.series.channel(name), event_time);
        m.set(name + ".peak_to_peak", dm.peak_to_peak);
        m.set(name + ".peak_ratio", dm.peak_ratio);
        m.set(name + ".settling_time", dm.settling_time);
        m.set(name + ".modal_frequency_hz", dm.modal_frequency);
    }
    return m;
}

void write_outputs(const fs::path& dir, const std::string& name, const Scenario& sc, const RunResult& r,
                   double event_time, const std::vector<std::string>& svg_channels) {
    fs::create_directories(dir);
    std::ofstream csv(dir / (name + ".csv"));
    write_csv(csv, r.series);
    std::ofstream met(dir / (name + ".metrics.txt"));
    run_metrics(sc, r, event_time).write(met);
    std::vector<std::string> plot;
    for (const auto& c : svg_channels) {
        if (r.series.has(c)) plot.push_back(c);
    }
    if (!plot.empty() && r.series.size() > 1) write_svg(dir / (name + ".svg"), r.series, plot, name);
}

struct SweepReport {
    std::vector<PointOutcome> runs;
    std::vector<AssertionResult> assertions;
};

SweepReport sweep(const ExperimentSpec& e, const std::vector<Setting>& extra, bool parallel) {
    SweepReport rep;
    std::vector<std::future<PointOutcome>> jobs;
    for (const auto& p : e.points) {
        jobs.push_back(std::async(parallel ? std::launch::async : std::launch::deferred,
                                  [&e, p, &extra] { return run_point(e, p, extra); }));
    }
    for (auto& j : jobs) rep.runs.push_back(j.get());
    rep.assertions = e.check(rep.runs);
    return rep;
}

std::vector<std::string> figure_channels(const ExperimentSpec& e) {
    if (e.id == "EXP-NOISE") return {"coi.freq", "bus1.vmag"};
    if (e.id == "EXP-39FAULT") return {"coi.freq", "bus36.vmag"};
    if (e.id == "EXP-39CLUSTER") return {"G1.wdev", "G6.wdev", "G7.wdev", "G10.wdev", "G1.rho", "G6.rho"};
    return {"coi.freq", "bus1.vmag"};
}

int print_sweep(const ExperimentSpec& e, const SweepReport& rep, const fs::path& out, const std::vector<Setting>& extra) {
    std::cout << e.id << ": " << e.description << '\n';
    bool failed = false;
    for (const auto& r : rep.runs) {
        const auto dm = damping_metrics(r.result.series.t, r.result.series.channel("coi.freq"), r.event_time);
        std::cout << "  " << r.point.label << "  " << to_string(r.result.status)
                  << "  coi.freq peak_to_peak=" << format_number(dm.peak_to_peak)
                  << " peak_ratio=" << (dm.peak_ratio ? format_number(*dm.peak_ratio) : "absent")
                  << " settling_time=" << format_number(dm.settling_time) << '\n';
        if (!r.result.message.empty()) std::cout << "    " << r.result.message << '\n';
        failed = failed || r.result.status == RunStatus::Failed;
        if (!out.empty()) {
            const Scenario sc = experiment_scenario(e, r.point, extra);
            write_outputs(out, sanitize(e.id + "_" + r.point.label), sc, r.result, r.event_time, figure_channels(e));
        }
    }
    bool all_pass = true;
    for (const auto& a : rep.assertions) {
        std::cout << (a.pass ? "  PASS  " : "  FAIL  ") << a.name << "  [" << a.detail << "]\n";
        all_pass = all_pass && a.pass;
    }
    if (failed) return kNumerical;
    return all_pass ? kOk : kAssertion;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phasor-domain transient simulator with complex-frequency coherency control"};
    app.require_subcommand(1);

    // run
    auto* run_cmd = app.add_subcommand("run", "Simulate one scenario (built-in name or file)");
    std::string source, experiment, point, out_dir = "out", name, event_opt;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<double> solver_h;
    std::string svg;
    run_cmd->add_option("source", source, "Built-in system (kundur2a, ieee39) or scenario file")->required();
    run_cmd->add_option("--experiment", experiment, "Catalog experiment supplying events and settings");
    run_cmd->add_option("--point", point, "Sweep point label of the experiment (default: first)");
    run_cmd->add_option("--set", sets, "Override key=value (dotted path or alias C, C71, mode, tau_d, W, seed)");
    run_cmd->add_option("--seed", seed, "Seed of every noise block");
    run_cmd->add_option("--solver.h", solver_h, "Integration step (s)");
    run_cmd->add_option("--event", event_opt, "'none' removes all events");
    run_cmd->add_option("--out", out_dir, "Output directory");
    run_cmd->add_option("--name", name, "Output file stem");
    run_cmd->add_option("--svg", svg, "Comma-separated channels to plot into <name>.svg");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Run every point of a catalog experiment and check its assertions");
    std::string sweep_id, sweep_out;
    std::vector<std::string> sweep_sets;
    bool serial = false;
    sweep_cmd->add_option("experiment", sweep_id, "Experiment id")->required();
    sweep_cmd->add_option("--out", sweep_out, "Write per-point CSV, metrics and SVG here");
    sweep_cmd->add_option("--set", sweep_sets, "Extra override applied to every point");
    sweep_cmd->add_flag("--serial", serial, "Run points one after another");

    // list
    auto* list_cmd = app.add_subcommand("list", "List catalog experiments");
    std::string format = "human", system_filter;
    list_cmd->add_option("--format", format, "human|machine")->check(CLI::IsMember({"human", "machine"}));
    list_cmd->add_option("--system", system_filter, "Only experiments on this system");

    // figures
    auto* fig_cmd = app.add_subcommand("figures", "Run every catalog experiment, write plots and check assertions");
    std::string fig_out = "figures";
    fig_cmd->add_option("--out", fig_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfig;
    }

    try {
        const auto cat = catalog();
        if (*list_cmd) {
            for (const auto& e : cat) {
                if (!system_filter.empty() && e.system != system_filter) continue;
                if (format == "machine") {
                    std::cout << e.id << '\n';
                } else {
                    std::cout << e.id << "  [" << e.system << "]  " << e.description << "\n    sweep " << e.axis << ":";
                    for (const auto& p : e.points) std::cout << ' ' << p.label;
                    std::cout << '\n';
                }
            }
            return kOk;
        }
        if (*run_cmd) {
            std::vector<Setting> settings;
            for (const auto& s : sets) settings.push_back(parse_setting(s));
            if (solver_h) settings.push_back({"solver.h", format_number(*solver_h)});
            if (seed) settings.push_back({"seed", std::to_string(*seed)});
            json root;
            std::string stem = name;
            if (!experiment.empty()) {
                const auto& e = find_experiment(cat, experiment);
                if (e.system != source) throw ConfigError(experiment + " runs on " + e.system + ", not " + source);
                auto it = point.empty() ? e.points.begin()
                                        : std::find_if(e.points.begin(), e.points.end(),
                                                       [&](const SweepPoint& p) { return p.label == point; });
                if (it == e.points.end()) throw ConfigError("unknown point '" + point + "' of " + experiment);
                root = experiment_json(e, *it, settings);
                if (stem.empty()) stem = sanitize(e.id + "_" + it->label);
            } else {
                root = load_scenario_json(source);
                for (const auto& [k, v] : settings) apply_setting(root, k, v);
            }
            if (!event_opt.empty()) {
                if (event_opt != "none") throw ConfigError("--event accepts only 'none'");
                root["events"] = json::array();
            }
            const Scenario sc = scenario_from_json(root);
            if (stem.empty()) stem = sanitize(sc.system.name.empty() ? fs::path(source).stem().string() : sc.system.name);
            RunResult r;
            try {
                r = run(sc);
            } catch (const InitError& e) {
                std::cerr << "initialization failed: " << e.what() << '\n';
                return kNumerical;
            }
            write_outputs(out_dir, stem, sc, r, first_event_time(sc), split(svg, ','));
            std::cout << stem << ": " << to_string(r.status) << " (t=" << format_number(r.t_reached) << " s, h="
                      << format_number(r.h) << " s) -> " << (fs::path(out_dir) / (stem + ".csv")).string() << '\n';
            if (!r.message.empty()) std::cout << "  " << r.message << '\n';
            return exit_code(r.status);
        }
        if (*sweep_cmd) {
            std::vector<Setting> settings;
            for (const auto& s : sweep_sets) settings.push_back(parse_setting(s));
            const auto& e = find_experiment(cat, sweep_id);
            const auto rep = sweep(e, settings, !serial);
            return print_sweep(e, rep, sweep_out, settings);
        }
        if (*fig_cmd) {
            int rc = kOk;
            for (const auto& e : cat) {
                const auto rep = sweep(e, {}, true);
                rc = std::max(rc, print_sweep(e, rep, fig_out, {}));
            }
            return rc;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
    return kOk;
}
