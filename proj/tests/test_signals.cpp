#include "catch_amalgamated.hpp"

#include "cohsim/cohsim.hpp"

#include <numeric>
#include <vector>

using namespace cohsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<Complex> sampled(double h, std::size_t n, auto&& fn) {
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = fn(static_cast<double>(k) * h);
    return out;
}

}  // namespace

TEST_CASE("complex frequency of a constant phasor is zero", "[signals]") {
    const auto x = sampled(1e-3, 2000, [](double) { return Complex(0.7, -0.4); });
    for (const auto& e : estimate_cf(x, 1e-3)) {
        CHECK(std::abs(e.rho) < 1e-12);
        CHECK(std::abs(e.omega) < 1e-9);
    }
}

TEST_CASE("complex frequency of an exponential phasor", "[signals]") {
    const double rho = -0.5, omega = 2.0 * pi * 0.5, h = 1e-4;
    const auto x = sampled(h, 20000, [&](double t) { return 1.3 * std::exp(Complex(rho, omega) * t); });
    const auto est = estimate_cf(x, h);
    // after 25 filter time constants the estimate has locked on
    for (std::size_t k = 5000; k < est.size(); k += 500) {
        CHECK_THAT(est[k].rho, WithinAbs(rho, 1e-6));
        CHECK_THAT(est[k].omega, WithinAbs(omega, 1e-5));
    }
}

TEST_CASE("complex frequency ignores constant scale and rotation", "[signals]") {
    const double h = 1e-3;
    auto fn = [](double t) { return Complex(1.0 + 0.2 * std::sin(3.0 * t), 0.3 * std::cos(t)); };
    const auto x = sampled(h, 3000, fn);
    std::vector<Complex> y(x.size());
    const Complex c = std::polar(4.2, 2.9);
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = c * x[k];
    const auto ex = estimate_cf(x, h), ey = estimate_cf(y, h);
    for (std::size_t k = 0; k < ex.size(); ++k) {
        CHECK_THAT(ey[k].rho, WithinAbs(ex[k].rho, 1e-9));
        CHECK_THAT(ey[k].omega, WithinAbs(ex[k].omega, 1e-7));
    }
}

TEST_CASE("integral of the complex frequency recovers the log ratio", "[signals]") {
    const double h = 1e-3;
    // eta(t) = (-0.3 + 0.2 sin t) + j(2 + cos 3t), integrated analytically
    auto integral = [](double t) { return Complex(-0.3 * t + 0.2 * (1.0 - std::cos(t)), 2.0 * t + std::sin(3.0 * t) / 3.0); };
    std::vector<double> t;
    std::vector<Complex> x;
    std::vector<CfEstimate> eta;
    for (int k = 0; k <= 5000; ++k) {
        const double tk = k * h;
        t.push_back(tk);
        x.push_back(0.8 * std::exp(integral(tk)));
        eta.push_back({-0.3 + 0.2 * std::sin(tk), 2.0 + std::cos(3.0 * tk), true});
    }
    const auto r = cf_integral_identity(t, x, eta, 0.5, 4.5);
    REQUIRE(r.evaluated);
    CHECK(r.residual < 1e-5);

    SECTION("estimated eta satisfies the identity once settled") {
        const auto est = estimate_cf(x, h);
        const auto re = cf_integral_identity(t, x, est, 1.0, 4.5);
        REQUIRE(re.evaluated);
        CHECK(re.residual < 0.05);
    }
    SECTION("a zero crossing in the window is not evaluated") {
        x[2500] = 0.0;
        CHECK_FALSE(cf_integral_identity(t, x, eta, 0.5, 4.5).evaluated);
    }
}

TEST_CASE("estimator flags vanishing signals", "[signals]") {
    std::vector<Complex> x(100, Complex(1.0, 0.0));
    for (std::size_t k = 50; k < 100; ++k) x[k] = 0.0;
    const auto est = estimate_cf(x, 1e-3);
    CHECK_FALSE(est.back().valid);
    CHECK(std::isfinite(est.back().rho));
}

TEST_CASE("first-order delay", "[signals]") {
    FirstOrderDelay d(0.1);
    d.reset(0.0);
    const double h = 1e-4;
    for (int k = 0; k < 1000; ++k) d.step({1.0, -2.0}, h);
    CHECK_THAT(d.value().real(), WithinAbs(1.0 - std::exp(-1.0), 1e-3));
    CHECK_THAT(d.value().imag(), WithinAbs(-2.0 * (1.0 - std::exp(-1.0)), 2e-3));
    CHECK(d.under_resolved(0.2));
    CHECK_FALSE(d.under_resolved(0.01));
    CHECK_THROWS_AS(FirstOrderDelay(0.0), ConfigError);

    SECTION("continuous form agrees with the sampled form") {
        FirstOrderDelay c(0.1);
        std::vector<double> x(2), dx(2);
        FirstOrderDelay::initialize(0.0, x);
        for (int k = 0; k < 1000; ++k) {
            c.derivatives(x, {1.0, -2.0}, dx);
            x[0] += h * dx[0];
            x[1] += h * dx[1];
        }
        CHECK(std::abs(FirstOrderDelay::output(x) - d.value()) < 1e-3);
    }
}

TEST_CASE("Ornstein-Uhlenbeck noise", "[signals]") {
    SECTION("zero sigma is silent") {
        OuNoise n({0.0, 10.0, 50.0, 7});
        for (int k = 0; k < 1000; ++k) CHECK(n.step(1e-3) == 0.0);
    }
    SECTION("same seed and channel repeat, other channels differ") {
        OuNoise a({0.01, 10.0, 1.0, 42}, 3), b({0.01, 10.0, 1.0, 42}, 3), c({0.01, 10.0, 1.0, 42}, 4);
        bool differs = false;
        for (int k = 0; k < 1000; ++k) {
            const double va = a.step(1e-3), vb = b.step(1e-3), vc = c.step(1e-3);
            CHECK(va == vb);
            differs = differs || va != vc;
        }
        CHECK(differs);
    }
    SECTION("weight scales the state") {
        OuNoise n({0.01, 10.0, 25.0, 1});
        n.step(1e-3);
        CHECK(n.value() == 25.0 * n.state());
    }
    SECTION("stationary statistics") {
        const double sigma = 0.01, alpha = 10.0, h = 1e-3;
        OuNoise n({sigma, alpha, 1.0, 5});
        const std::size_t steps = 1'000'000, lag = 100;
        std::vector<double> v(steps);
        for (auto& x : v) x = n.step(h);
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / steps;
        double var = 0.0, cov = 0.0;
        for (std::size_t k = 0; k < steps; ++k) var += (v[k] - mean) * (v[k] - mean);
        for (std::size_t k = 0; k + lag < steps; ++k) cov += (v[k] - mean) * (v[k + lag] - mean);
        var /= steps;
        cov /= (steps - lag);
        CHECK(std::abs(mean) < 0.1 * sigma);
        CHECK_THAT(std::sqrt(var), WithinRel(sigma, 0.05));
        CHECK_THAT(cov / var, WithinAbs(std::exp(-alpha * lag * h), 0.05));
    }
}
