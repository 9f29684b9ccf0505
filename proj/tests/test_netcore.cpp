#include "catch_amalgamated.hpp"

#include "cohsim/cohsim.hpp"
#include "oracles.hpp"

using namespace cohsim;
using Catch::Matchers::WithinAbs;

namespace {

Network network_of(const Scenario& sc) {
    std::vector<Bus> buses;
    for (const auto& b : sc.buses) buses.push_back({b.id, b.base_kv, {1.0, 0.0}, {b.g_shunt, b.b_shunt}});
    return Network(buses, sc.branches);
}

std::vector<BusSchedule> schedule_of(const Scenario& sc) {
    std::vector<BusSchedule> s;
    for (const auto& d : sc.devices) {
        BusSchedule b;
        b.bus = d.bus;
        b.type = d.bus == sc.system.slack_bus ? BusType::Slack : BusType::PV;
        b.p_gen = d.p;
        b.v_set = d.v;
        s.push_back(b);
    }
    for (const auto& l : sc.loads) {
        BusSchedule b;
        b.bus = l.bus;
        b.p_load = l.p;
        b.q_load = l.q;
        s.push_back(b);
    }
    return s;
}

Network two_bus(double x) { return Network({{1, 1.0}, {2, 1.0}}, {{1, 2, 0.0, x, 0.0}}); }

}  // namespace

TEST_CASE("single lossless line", "[netcore]") {
    const auto y = two_bus(0.5).ybus();
    CHECK(std::abs(y(0, 0) - Complex(0, -2)) < 1e-12);
    CHECK(std::abs(y(0, 1) - Complex(0, 2)) < 1e-12);
    CHECK(std::abs(y(1, 0) - Complex(0, 2)) < 1e-12);
    CHECK(std::abs(y(1, 1) - Complex(0, -2)) < 1e-12);
}

TEST_CASE("load admittance adds to the diagonal", "[netcore]") {
    Network net = two_bus(0.5);
    net.set_loads({{2, {1.0, 0.0}}});
    CHECK(std::abs(net.ybus()(1, 1) - Complex(1, -2)) < 1e-12);
    CHECK(std::abs(net.ybus()(0, 0) - Complex(0, -2)) < 1e-12);
}

TEST_CASE("constant impedance from the operating point", "[netcore]") {
    const auto l = LoadZ::from_power(3, {0.8, 0.6}, std::polar(0.95, 0.3));
    const Complex v = std::polar(0.95, 0.3);
    const Complex s = v * std::conj(l.y * v);
    CHECK_THAT(s.real(), WithinAbs(0.8, 1e-12));
    CHECK_THAT(s.imag(), WithinAbs(0.6, 1e-12));
}

TEST_CASE("dangling branch endpoint", "[netcore]") {
    CHECK_THROWS_AS(Network({{1, 1.0}}, {{1, 2, 0.0, 0.1, 0.0}}), ConfigError);
    CHECK_THROWS_AS(Network({{1, 1.0}, {2, 1.0}}, {{1, 2, 0.0, 0.1, 0.0, 1}, {2, 1, 0.0, 0.1, 0.0, 1}}),
                    ConfigError);
}

TEST_CASE("two-area admittance matrix against hand assembly", "[netcore]") {
    const Network net = network_of(load_scenario("kundur2a"));
    const auto y = net.ybus_without_loads();
    auto at = [&](int a, int b) { return y(net.index_of(a), net.index_of(b)); };
    using H = oracle::KundurHand;
    CHECK(std::abs(at(7, 7) - H::y77()) < 1e-6);
    CHECK(std::abs(at(7, 8) - H::y78()) < 1e-6);
    CHECK(std::abs(at(8, 7) - H::y78()) < 1e-6);
    CHECK(std::abs(at(1, 5) - H::y15()) < 1e-6);
    CHECK(std::abs(at(5, 5) - H::y55()) < 1e-6);
    CHECK(std::abs(at(8, 8) - H::y88()) < 1e-6);
    CHECK(std::abs(at(1, 9)) == 0.0);
    CHECK((y.dense() - y.dense().transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("trip of one 7-8 circuit doubles the corridor impedance", "[netcore]") {
    Network net = network_of(load_scenario("kundur2a"));
    const auto before = net.ybus();
    CHECK(net.apply(NetworkEvent::branch_trip(1.0, 7, 8, 2)) == EventOutcome::Applied);
    const auto after = net.ybus();
    const auto i7 = net.index_of(7), i8 = net.index_of(8);
    const Complex z_before = -1.0 / before(i7, i8), z_after = -1.0 / after(i7, i8);
    CHECK(std::abs(z_after - 2.0 * z_before) < 1e-12);
    // second trip of the same circuit is a no-op
    CHECK(net.apply(NetworkEvent::branch_trip(2.0, 8, 7, 2)) == EventOutcome::NoOp);
    CHECK(net.ybus() == after);
    CHECK_THROWS_AS(net.apply(NetworkEvent::branch_trip(2.0, 7, 8, 3)), ConfigError);
}

TEST_CASE("fault apply and clear restore the matrix exactly", "[netcore]") {
    Network net = network_of(load_scenario("ieee39"));
    const auto before = net.ybus();
    net.apply(NetworkEvent::fault_apply(1.0, 1));
    CHECK(net.ybus()(net.index_of(1), net.index_of(1)) != before(net.index_of(1), net.index_of(1)));
    net.apply(NetworkEvent::fault_clear(1.12, 1));
    CHECK(net.ybus() == before);
    CHECK_THROWS_AS(net.apply(NetworkEvent::fault_clear(2.0, 1)), ConfigError);
}

TEST_CASE("bolted fault collapses the faulted bus voltage", "[netcore]") {
    Simulation sim(load_scenario("ieee39"));
    sim.apply(NetworkEvent::fault_apply(0.0, 1));
    CHECK(std::abs(sim.bus_voltage(1)) < 1e-3);
}

TEST_CASE("solve_network basics", "[netcore]") {
    AdmittanceMatrix y({1});
    y(0, 0) = {1.0, -1.0};
    Eigen::VectorXcd i(1);
    i(0) = {1.0, -1.0};
    CHECK(std::abs(solve_network(y, i)(0) - Complex(1.0, 0.0)) < 1e-14);

    Network net = network_of(load_scenario("kundur2a"));
    net.set_loads({{7, {1.0, -0.1}}, {9, {1.5, -0.1}}});
    const auto yk = net.ybus();
    const auto n = static_cast<Eigen::Index>(yk.size());
    CHECK(solve_network(yk, Eigen::VectorXcd::Zero(n)).cwiseAbs().maxCoeff() == 0.0);

    // linearity
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(n), b = Eigen::VectorXcd::Zero(n);
    a(0) = {1.0, 0.5};
    b(3) = {-0.2, 2.0};
    const Complex ka{0.3, -1.2}, kb{2.0, 0.1};
    const Eigen::VectorXcd lhs = solve_network(yk, ka * a + kb * b);
    const Eigen::VectorXcd rhs = ka * solve_network(yk, a) + kb * solve_network(yk, b);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("isolated bus is reported by id", "[netcore]") {
    Network net({{1, 1.0}, {2, 1.0}, {5, 1.0}}, {{1, 2, 0.0, 0.1, 0.0}});
    net.set_loads({{1, {1.0, 0.0}}});
    try {
        solve_network(net.ybus(), Eigen::VectorXcd::Ones(3));
        FAIL("expected a solve error");
    } catch (const SolveError& e) {
        CHECK(std::string(e.what()).find("bus 5") != std::string::npos);
    }
}

TEST_CASE("two-bus power flow matches the closed form", "[netcore]") {
    const double x = 0.2, p = 0.5, q = 0.1;
    Network net = two_bus(x);
    std::vector<BusSchedule> s(2);
    s[0].bus = 1;
    s[0].type = BusType::Slack;
    s[0].v_set = 1.0;
    s[1].bus = 2;
    s[1].p_load = p;
    s[1].q_load = q;
    const auto pf = power_flow(net, s);
    // receiving end: V^4 + (2 q x - 1) V^2 + x^2 (p^2 + q^2) = 0, upper root
    const double bq = 2.0 * q * x - 1.0, c = x * x * (p * p + q * q);
    const double v2 = std::sqrt((-bq + std::sqrt(bq * bq - 4.0 * c)) / 2.0);
    CHECK_THAT(std::abs(pf.voltage(2)), WithinAbs(v2, 1e-7));
    CHECK_THAT(std::sin(-std::arg(pf.voltage(2))), WithinAbs(p * x / v2, 1e-7));
    CHECK(pf.max_mismatch < 1e-8);
}

TEST_CASE("unloaded network sits at the slack voltage", "[netcore]") {
    Network net({{1, 1.0}, {2, 1.0}, {3, 1.0}}, {{1, 2, 0.01, 0.1, 0.0}, {2, 3, 0.01, 0.1, 0.0}});
    std::vector<BusSchedule> s(1);
    s[0].bus = 1;
    s[0].type = BusType::Slack;
    s[0].v_set = 1.02;
    s[0].angle = 0.1;
    const auto pf = power_flow(net, s);
    for (int b : {1, 2, 3}) CHECK(std::abs(pf.voltage(b) - std::polar(1.02, 0.1)) < 1e-10);
    CHECK(std::abs(pf.generation(1)) < 1e-10);
}

TEST_CASE("power flow agrees with the rectangular oracle", "[netcore]") {
    for (const std::string name : {"kundur2a", "ieee39"}) {
        CAPTURE(name);
        const Scenario sc = load_scenario(name);
        const auto pf = power_flow(network_of(sc), schedule_of(sc));
        const auto c = oracle::build_case(oracle::parse_data(std::string(*builtin_text(name))));
        const auto ref = oracle::solve(c);
        for (std::size_t i = 0; i < c.ids.size(); ++i) {
            CHECK(std::abs(pf.voltage(c.ids[i]) - ref.v[i]) < 1e-6);
            CHECK(std::abs(pf.generation(c.ids[i]) - ref.s_gen[i]) < 1e-6);
        }
    }
}

TEST_CASE("injected power balances loads plus series losses", "[netcore]") {
    const Scenario sc = load_scenario("kundur2a");
    const Network net = network_of(sc);
    const auto pf = power_flow(net, schedule_of(sc));
    Complex gen{}, load{}, loss{};
    for (int id : pf.bus_ids) gen += pf.generation(id);
    for (const auto& l : sc.loads) load += Complex(l.p, l.q);
    for (const auto& b : sc.buses) load += Complex(b.g_shunt, -b.b_shunt) * std::norm(pf.voltage(b.id));
    for (const auto& br : net.branches()) {
        const Complex vi = pf.voltage(br.from), vk = pf.voltage(br.to);
        loss += oracle::branch_flow(vi, vk, br.r, br.x, br.b) + oracle::branch_flow(vk, vi, br.r, br.x, br.b);
    }
    CHECK(std::abs(gen - load - loss) < 1e-8);
}
