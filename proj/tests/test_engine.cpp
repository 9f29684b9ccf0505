#include "catch_amalgamated.hpp"

#include "cohsim/cohsim.hpp"

#include <vector>

using namespace cohsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// dx/dt = -x + y - 2x,  0 = y - 2x  ->  dx/dt = -x along the solution
struct DecayDae {
    std::size_t differential_size() const { return 1; }
    std::size_t algebraic_size() const { return 1; }
    std::string describe(std::size_t eq) const { return eq == 0 ? "x" : "y"; }
    void eval(const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> f, Eigen::Ref<Eigen::VectorXd> g) const {
        f(0) = -z(0) + z(1) - 2.0 * z(0);
        g(0) = z(1) - 2.0 * z(0);
    }
};

double decay_after(double h, int n) {
    DecayDae dae;
    Eigen::VectorXd z0(2);
    z0 << 1.0, 2.0;
    TrapezoidalIntegrator<DecayDae> integ(dae, z0, {1e-13, 25});
    for (int k = 0; k < n; ++k) integ.step(h);
    return integ.state()(0);
}

json kundur(double t_end) {
    json root = load_scenario_json("kundur2a");
    apply_setting(root, "solver.t_end", std::to_string(t_end));
    return root;
}

json with_trip(json root, double t = 0.5) {
    root["events"] = json::array({json{{"t", t}, {"kind", "branch_trip"}, {"from", 7}, {"to", 8}, {"circuit", 2}}});
    return root;
}

double max_drift(const TimeSeries& s) {
    double worst = 0.0;
    for (std::size_t c = 0; c < s.width(); ++c) {
        const auto& col = s.column(c);
        for (double v : col) worst = std::max(worst, std::abs(v - col.front()));
    }
    return worst;
}

}  // namespace

TEST_CASE("trapezoidal rule on a scalar decay", "[engine]") {
    const double h = 0.1;
    const int n = 25;
    CHECK_THAT(decay_after(h, n), WithinRel(std::pow((1.0 - h / 2.0) / (1.0 + h / 2.0), n), 1e-12));

    SECTION("second-order convergence") {
        const double e1 = std::abs(decay_after(0.1, 10) - std::exp(-1.0));
        const double e2 = std::abs(decay_after(0.05, 20) - std::exp(-1.0));
        CHECK_THAT(e1 / e2, WithinAbs(4.0, 0.05));
    }
}

TEST_CASE("damping metrics on analytic signals", "[engine]") {
    std::vector<double> t, x, flat, grow;
    for (int k = 0; k <= 10000; ++k) {
        const double tk = k * 1e-3;
        t.push_back(tk);
        x.push_back(std::exp(-0.5 * tk) * std::sin(2.0 * pi * tk));
        flat.push_back(0.3);
        grow.push_back(std::exp(0.2 * tk) * std::sin(2.0 * pi * tk));
    }
    const auto m = damping_metrics(t, x, 0.0);
    REQUIRE(m.peak_ratio);
    CHECK_THAT(*m.peak_ratio, WithinRel(std::exp(-0.5), 0.02));
    REQUIRE(m.modal_frequency);
    CHECK_THAT(*m.modal_frequency, WithinRel(1.0, 0.02));
    CHECK(m.peak_to_peak > 1.0);
    CHECK(m.settling_time > 6.0);
    CHECK(m.settling_time < 10.0);

    const auto mf = damping_metrics(t, flat, 0.0);
    CHECK(mf.peak_to_peak == 0.0);
    CHECK_FALSE(mf.peak_ratio);
    CHECK(mf.settling_time == 0.0);

    const auto mg = damping_metrics(t, grow, 0.0);
    REQUIRE(mg.peak_ratio);
    CHECK(*mg.peak_ratio > 1.0);

    SECTION("samples before the event are ignored") {
        std::vector<double> shifted = x;
        for (std::size_t k = 0; k < 2000; ++k) shifted[k] = 5.0;
        CHECK(damping_metrics(t, shifted, 2.0).peak_to_peak < 1.0);
    }
}

TEST_CASE("turning points skip small reversals", "[engine]") {
    const std::vector<double> x{0, 1, 0.98, 1.5, 0, 0.01, -1, 0};
    const auto tp = turning_points(x, 0.1);
    CHECK(tp == std::vector<std::size_t>{3, 6});
}

TEST_CASE("centre of inertia and correlation", "[engine]") {
    const std::vector<double> w{1.0, 1.01, 0.99}, h{6.5, 6.5, 6.175}, s{900, 900, 900};
    const double expect = (6.5 * 1.0 + 6.5 * 1.01 + 6.175 * 0.99) / (6.5 + 6.5 + 6.175);
    CHECK_THAT(coi_frequency(w, h, s), WithinRel(expect, 1e-14));
    CHECK_THROWS_AS(coi_frequency(w, h, std::vector<double>{1.0}), ConfigError);
    CHECK_THROWS_AS(coi_frequency(w, std::vector<double>(3, 0.0), s), ConfigError);

    const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1}, d{5, 5, 5, 5};
    CHECK_THAT(pearson(a, b), WithinAbs(1.0, 1e-14));
    CHECK_THAT(pearson(a, c), WithinAbs(-1.0, 1e-14));
    CHECK(pearson(a, d) == 0.0);
}

TEST_CASE("undisturbed systems stay flat", "[engine]") {
    SECTION("two-area, all machines") {
        const auto r = run(scenario_from_json(kundur(2.0)));
        REQUIRE(r.status == RunStatus::Stable);
        CHECK(max_drift(r.series) < 1e-6);
    }
    SECTION("two-area, hybrid") {
        json root = kundur(2.0);
        apply_setting(root, "C", "0.5");
        const auto r = run(scenario_from_json(root));
        REQUIRE(r.status == RunStatus::Stable);
        CHECK(max_drift(r.series) < 1e-6);
    }
    SECTION("39-bus") {
        json root = load_scenario_json("ieee39");
        apply_setting(root, "solver.t_end", "2");
        const auto r = run(scenario_from_json(root));
        REQUIRE(r.status == RunStatus::Stable);
        CHECK(max_drift(r.series) < 1e-6);
    }
}

TEST_CASE("runs are deterministic", "[engine]") {
    json root = with_trip(kundur(3.0));
    apply_setting(root, "C", "0.25");
    apply_setting(root, "W", "10");
    const Scenario sc = scenario_from_json(root);
    const auto a = run(sc), b = run(sc);
    CHECK(a.series == b.series);

    apply_setting(root, "seed", "2");
    CHECK_FALSE(run(scenario_from_json(root)).series == a.series);
}

TEST_CASE("C = 0 equals the plain machine model", "[engine]") {
    json plain = with_trip(kundur(3.0));
    for (auto& d : plain["devices"]) d.erase("coherency");
    json zero = with_trip(kundur(3.0));
    apply_setting(zero, "C", "0");
    const auto a = run(scenario_from_json(plain)), b = run(scenario_from_json(zero));
    REQUIRE(a.series.names() == b.series.names());
    for (std::size_t c = 0; c < a.series.width(); ++c) {
        for (std::size_t k = 0; k < a.series.size(); ++k) CHECK(a.series.column(c)[k] == b.series.column(c)[k]);
    }
}

TEST_CASE("coherency gain stays at its initial value", "[engine]") {
    json root = with_trip(kundur(3.0), 0.2);
    apply_setting(root, "C", "0.5");
    Simulation sim(scenario_from_json(root));
    const auto k1 = sim.device_index("G1"), k3 = sim.device_index("G3");
    const Complex gain = sim.devices()[k1].ibr->controller().gain();
    const Complex i1_0 = sim.devices()[k1].share * std::conj(sim.power_flow_result().generation(1) /
                                                             sim.power_flow_result().voltage(1));
    CHECK(std::abs(gain * sim.device_current(k3) - i1_0) < 1e-9);
    bool tripped = false;
    for (int n = 0; n < 400; ++n) {
        if (!tripped && sim.time() >= 0.2 - 1e-9) {
            sim.apply(NetworkEvent::branch_trip(0.2, 7, 8, 2));
            tripped = true;
        }
        sim.step(sim.step_size());
        CHECK(std::abs(sim.coherency_current_reference(k1) - gain * sim.device_current(k3)) < 1e-9);
        CHECK(sim.devices()[k1].ibr->controller().gain() == gain);
    }
}

TEST_CASE("network power balances during a disturbance", "[engine]") {
    for (const char* c : {"0", "0.5", "1"}) {
        CAPTURE(c);
        json root = with_trip(kundur(3.0));
        apply_setting(root, "C", c);
        const auto r = run(scenario_from_json(root));
        REQUIRE(r.status == RunStatus::Stable);
        CHECK(r.max_power_balance < 1e-6);
    }
}

TEST_CASE("algebraic equations hold after every step", "[engine]") {
    json root = load_scenario_json("ieee39");
    Simulation sim(scenario_from_json(root));
    sim.apply(NetworkEvent::fault_apply(0.0, 1));
    for (int n = 0; n < 50; ++n) {
        sim.step(sim.step_size());
        CHECK(sim.algebraic_residual() < 1e-7);
    }
    sim.apply(NetworkEvent::fault_clear(sim.time(), 1));
    CHECK(sim.algebraic_residual() < 1e-7);
}

TEST_CASE("step size selection", "[engine]") {
    SolverConfig c;
    c.h = 0.005;
    CHECK(Simulation::effective_step(c, 0.001) == 0.002);
    CHECK(Simulation::effective_step(c, 0.05) == 0.005);
    c.h = 0.001;
    CHECK(Simulation::effective_step(c, 0.001) == 0.001);
    c.h = 0.005;
    c.auto_step = false;
    CHECK(Simulation::effective_step(c, 0.001) == 0.005);

    json root = kundur(0.1);
    CHECK(Simulation(scenario_from_json(root)).step_size() == 0.005);
    apply_setting(root, "C", "0.5");
    CHECK(Simulation(scenario_from_json(root)).step_size() == 0.005);
    apply_setting(root, "tau_d", "0.005");
    CHECK(Simulation(scenario_from_json(root)).step_size() == 0.002);
}

TEST_CASE("instability guard stops the run", "[engine]") {
    json root = with_trip(kundur(5.0));
    apply_setting(root, "solver.speed_limit", "1e-5");
    const auto r = run(scenario_from_json(root));
    CHECK(r.status == RunStatus::Unstable);
    CHECK(r.message.find("speed") != std::string::npos);
    CHECK(r.t_reached < 5.0);
    CHECK(r.series.t.back() == r.t_reached);
}

TEST_CASE("events land on the step grid", "[engine]") {
    json root = with_trip(kundur(1.0), 0.503);
    const auto r = run(scenario_from_json(root));
    REQUIRE(r.status == RunStatus::Stable);
    CHECK(r.series.size() == 101);
    const auto& v7 = r.series.channel("bus7.vmag");
    CHECK(v7[50] == v7[0]);  // output at 0.50 is before the trip
    CHECK(v7[51] != v7[0]);
}

TEST_CASE("lagged reference coupling stays close to the algebraic one", "[engine]") {
    json root = with_trip(kundur(3.0));
    apply_setting(root, "C", "0.5");
    const auto a = run(scenario_from_json(root));
    apply_setting(root, "solver.lagged_reference", "true");
    const auto b = run(scenario_from_json(root));
    REQUIRE(a.status == RunStatus::Stable);
    REQUIRE(b.status == RunStatus::Stable);
    const auto& fa = a.series.channel("coi.freq");
    const auto& fb = b.series.channel("coi.freq");
    double worst = 0.0;
    for (std::size_t k = 0; k < fa.size(); ++k) worst = std::max(worst, std::abs(fa[k] - fb[k]));
    CHECK(worst < 1e-4);
}

TEST_CASE("centre of inertia uses the remaining machines", "[engine]") {
    json root = kundur(0.5);
    apply_setting(root, "C", "1");
    const auto r = run(scenario_from_json(root));
    CHECK_FALSE(r.coi_from_pll);  // G3 is still a machine
}
