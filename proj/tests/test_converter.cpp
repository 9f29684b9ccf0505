#include "catch_amalgamated.hpp"

#include "cohsim/cohsim.hpp"

#include <vector>

using namespace cohsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("coherency gain from the initial currents", "[converter]") {
    const auto g1 = init_gain({0.3, -0.7}, {0.3, -0.7});
    CHECK_THAT(g1.k_i, WithinAbs(1.0, 1e-15));
    CHECK_THAT(g1.theta_k, WithinAbs(0.0, 1e-15));

    const auto g2 = init_gain(std::polar(0.5, pi / 4.0), {1.0, 0.0});
    CHECK_THAT(g2.k_i, WithinAbs(0.5, 1e-15));
    CHECK_THAT(g2.theta_k, WithinAbs(pi / 4.0, 1e-15));

    // wrapped into (-pi, pi]
    const auto g3 = init_gain(std::polar(1.0, 3.0), std::polar(1.0, -3.0));
    CHECK_THAT(g3.theta_k, WithinAbs(6.0 - 2.0 * pi, 1e-12));

    CHECK_THROWS_AS(init_gain({1.0, 0.0}, {0.0, 1e-12}), InitError);
}

TEST_CASE("coherency reference", "[converter]") {
    CoherencyController c;
    c.k_i = 2.0;
    c.theta_k = 0.0;
    const Complex r = coherency_reference(std::polar(0.3, 0.1), c);
    CHECK(std::abs(r - std::polar(0.6, 0.1)) < 1e-15);

    c.mode = CoherencyMode::Conventional;
    c.i_mag_0 = 0.4;
    c.theta_k = pi / 6.0;
    const Complex rc = coherency_reference(std::polar(0.9, 0.2), c);
    CHECK(std::abs(rc - std::polar(0.4, 0.2 + pi / 6.0)) < 1e-15);
    // the magnitude stays frozen whatever the input
    for (double m : {0.01, 1.0, 10.0}) CHECK_THAT(std::abs(coherency_reference(std::polar(m, -1.0), c)), WithinAbs(0.4, 1e-15));
}

TEST_CASE("gain round-trip through the two-area operating point", "[converter]") {
    Simulation sim(load_scenario("kundur2a"));
    const auto& pf = sim.power_flow_result();
    const Complex i1 = std::conj(pf.generation(1) / pf.voltage(1));
    const Complex i3 = std::conj(pf.generation(3) / pf.voltage(3));
    const auto g = init_gain(i1, i3);
    CoherencyController c;
    c.k_i = g.k_i;
    c.theta_k = g.theta_k;
    CHECK(std::abs(coherency_reference(i3, c) - i1) < 1e-12);
}

TEST_CASE("power reference", "[converter]") {
    CHECK(std::abs(power_reference({1.0, 0.0}, {1.0, 0.0}) - Complex(1.0, 0.0)) < 1e-15);
    CHECK(std::abs(power_reference({1.0, 0.0}, {0.0, -1.0}) - Complex(0.0, 1.0)) < 1e-15);
}

TEST_CASE("grid-following converter", "[converter]") {
    const GflConverter conv{0.01};
    const Complex v = std::polar(1.02, 0.3);
    const Pll pll{};
    std::vector<double> xp(Pll::size);
    pll.initialize(v, xp);
    const Complex v_pll = v * std::polar(1.0, -xp[Pll::kTheta]);
    CHECK_THAT(v_pll.imag(), WithinAbs(0.0, 1e-15));

    const Complex s0{0.8, 0.2};
    const Complex i0 = conv.current_reference(s0, v_pll);
    std::vector<double> x{i0.real(), i0.imag()}, dx(2);

    SECTION("equilibrium") {
        conv.derivatives(x, s0, v_pll, dx);
        CHECK(std::abs(dx[0]) < 1e-15);
        CHECK(std::abs(dx[1]) < 1e-15);
        CHECK(std::abs(v_pll * std::conj(GflConverter::dq_current(x)) - s0) < 1e-14);
    }
    SECTION("first-order response to a power step") {
        const Complex s1 = s0 + Complex(0.1, 0.0);
        const double target = conv.current_reference(s1, v_pll).real();
        const double h = 1e-5;
        for (int k = 0; k < 1000; ++k) {
            conv.derivatives(x, s1, v_pll, dx);
            x[0] += h * dx[0];
            x[1] += h * dx[1];
        }
        CHECK_THAT((x[0] - i0.real()) / (target - i0.real()), WithinAbs(1.0 - std::exp(-1.0), 1e-3));
    }
    SECTION("low voltage holds the references") {
        conv.derivatives(x, s0 * 2.0, Complex(0.001, 0.0), dx);
        CHECK(dx[0] == 0.0);
        CHECK(dx[1] == 0.0);
    }
}

TEST_CASE("PLL recovers from a phase jump", "[converter]") {
    const Pll pll{};
    std::vector<double> x(Pll::size), dx(Pll::size);
    pll.initialize({1.0, 0.0}, x);
    const Complex v = std::polar(1.0, 0.1);
    const double h = 0.01;
    double peak_error = 0.0;
    for (int k = 0; k < 10000; ++k) {
        pll.derivatives(x, v, dx);
        x[0] += h * dx[0];
        x[1] += h * dx[1];
        peak_error = std::max(peak_error, std::abs(0.1 - x[Pll::kTheta]));
    }
    CHECK_THAT(x[Pll::kTheta], WithinAbs(0.1, 1e-6));
    CHECK_THAT(pll.frequency(x, v), WithinAbs(1.0, 1e-9));
    CHECK(peak_error <= 0.1 + 1e-12);
}

TEST_CASE("device split", "[converter]") {
    const MachineParams p;
    const SynchronousUnit unit(SynchronousMachine(p, 100.0, 2.0 * pi * 60.0), std::nullopt, std::nullopt,
                               std::nullopt);
    CoherencySettings cs;
    cs.reference_device = "G3";

    SECTION("C = 0 keeps the machine") {
        const auto d = split_device("G1", 1, unit, 0.0, cs);
        REQUIRE(d.sm);
        CHECK_FALSE(d.ibr);
        CHECK(d.sm->machine().params() == p);
    }
    SECTION("C = 1 replaces the machine") {
        const auto d = split_device("G1", 1, unit, 1.0, cs);
        CHECK_FALSE(d.sm);
        REQUIRE(d.ibr);
        CHECK_THAT(d.ibr->rating_mva(), WithinRel(p.rating_mva, 1e-15));
    }
    SECTION("C = 0.5 halves the machine and the dispatch") {
        const auto d = split_device("G1", 1, unit, 0.5, cs);
        REQUIRE(d.sm);
        REQUIRE(d.ibr);
        CHECK_THAT(d.sm->machine().base_ratio(), WithinRel(0.5 * p.rating_mva / 100.0, 1e-15));
        const Complex s0{7.0, 1.85};
        CHECK(std::abs(d.sm_dispatch(s0) - 0.5 * s0) < 1e-15);
        CHECK(std::abs(d.sm_dispatch(s0) + d.ibr_dispatch(s0) - s0) < 1e-8);
    }
    SECTION("invalid shares and self reference") {
        CHECK_THROWS_AS(split_device("G1", 1, unit, 1.5, cs), ConfigError);
        CHECK_THROWS_AS(split_device("G1", 1, unit, -0.1, cs), ConfigError);
        cs.reference_device = "G1";
        CHECK_THROWS_AS(split_device("G1", 1, unit, 0.5, cs), ConfigError);
    }
}

TEST_CASE("hybrid split reproduces the original injection at t = 0", "[converter]") {
    for (double c : {0.25, 0.5, 1.0}) {
        CAPTURE(c);
        json root = load_scenario_json("kundur2a");
        apply_setting(root, "C", std::to_string(c));
        Simulation sim(scenario_from_json(root));
        const auto& pf = sim.power_flow_result();
        for (const std::string id : {"G1", "G2", "G4"}) {
            const auto k = sim.device_index(id);
            const int bus = sim.devices()[k].bus;
            CHECK(std::abs(sim.device_power(k) - pf.generation(bus)) < 1e-8);
            if (sim.devices()[k].ibr) {
                CHECK(std::abs(sim.device_ibr_current(k) - c * std::conj(pf.generation(bus) / pf.voltage(bus))) < 1e-8);
            }
        }
        double worst = 0.0;
        for (double d : sim.derivatives()) worst = std::max(worst, std::abs(d));
        CHECK(worst < 1e-8);
    }
}
