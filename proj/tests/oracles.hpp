#pragma once

// Reference implementations used only by the tests. They read the raw data
// files themselves and share no code with the library beyond std::complex.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace oracle {

using cd = std::complex<double>;

inline nlohmann::json parse_data(const std::string& text) {
    std::istringstream in(text);
    std::string line, body;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t");
        if (first != std::string::npos && line.compare(first, 2, "//") == 0) continue;
        body += line + '\n';
    }
    return nlohmann::json::parse(body);
}

struct PfCase {
    std::vector<int> ids;
    std::map<int, int> pos;
    Eigen::MatrixXcd y;
    int slack = 0;
    std::map<int, double> p_gen, v_set;
    std::map<int, cd> load;
};

/// Bus admittance matrix straight from the JSON: pi branches, bus shunts,
/// in-service branches only, no loads.
inline PfCase build_case(const nlohmann::json& d) {
    PfCase c;
    for (const auto& b : d["buses"]) {
        c.pos[b["id"].get<int>()] = static_cast<int>(c.ids.size());
        c.ids.push_back(b["id"].get<int>());
    }
    const auto n = static_cast<Eigen::Index>(c.ids.size());
    c.y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& b : d["buses"]) {
        const int i = c.pos[b["id"].get<int>()];
        c.y(i, i) += cd(b.value("g", 0.0), b.value("b", 0.0));
    }
    for (const auto& br : d["branches"]) {
        if (!br.value("in_service", true)) continue;
        const int i = c.pos[br["from"].get<int>()], k = c.pos[br["to"].get<int>()];
        const cd ys = 1.0 / cd(br["r"].get<double>(), br["x"].get<double>());
        const cd ysh(0.0, 0.5 * br.value("b", 0.0));
        c.y(i, i) += ys + ysh;
        c.y(k, k) += ys + ysh;
        c.y(i, k) -= ys;
        c.y(k, i) -= ys;
    }
    c.slack = d["system"]["slack_bus"].get<int>();
    for (const auto& dev : d["devices"]) {
        c.p_gen[dev["bus"].get<int>()] += dev["p"].get<double>();
        c.v_set[dev["bus"].get<int>()] = dev["v"].get<double>();
    }
    for (const auto& l : d["loads"]) c.load[l["bus"].get<int>()] += cd(l["p"].get<double>(), l.value("q", 0.0));
    return c;
}

struct PfSolution {
    std::vector<cd> v;
    std::vector<cd> s_gen;
    int iterations = 0;
};

/// Newton-Raphson in rectangular coordinates with a finite-difference
/// Jacobian. Unknowns are (e, f) of every non-slack bus; PV buses use
/// |V|^2 - V_set^2 in place of the reactive mismatch.
inline PfSolution solve(const PfCase& c, double tol = 1e-12) {
    const int n = static_cast<int>(c.ids.size());
    std::vector<cd> v(n, cd(1.0, 0.0));
    for (int i = 0; i < n; ++i) {
        auto it = c.v_set.find(c.ids[i]);
        if (it != c.v_set.end()) v[i] = it->second;
    }
    std::vector<int> unk;
    for (int i = 0; i < n; ++i)
        if (c.ids[i] != c.slack) unk.push_back(i);
    const int m = 2 * static_cast<int>(unk.size());

    auto mismatch = [&](const std::vector<cd>& vv) {
        Eigen::VectorXd r(m);
        for (std::size_t u = 0; u < unk.size(); ++u) {
            const int i = unk[u];
            cd inj = 0.0;
            for (int k = 0; k < n; ++k) inj += c.y(i, k) * vv[k];
            const cd s = vv[i] * std::conj(inj);
            const int id = c.ids[i];
            const double pg = c.p_gen.count(id) ? c.p_gen.at(id) : 0.0;
            const cd ld = c.load.count(id) ? c.load.at(id) : cd{};
            r(2 * u) = s.real() - (pg - ld.real());
            if (c.v_set.count(id)) {
                r(2 * u + 1) = std::norm(vv[i]) - c.v_set.at(id) * c.v_set.at(id);
            } else {
                r(2 * u + 1) = s.imag() + ld.imag();
            }
        }
        return r;
    };

    PfSolution out;
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd r = mismatch(v);
        out.iterations = it;
        if (r.cwiseAbs().maxCoeff() < tol) break;
        Eigen::MatrixXd jac(m, m);
        for (int col = 0; col < m; ++col) {
            auto vp = v;
            const int i = unk[col / 2];
            const double dz = 1e-7;
            vp[i] += (col % 2 == 0) ? cd(dz, 0.0) : cd(0.0, dz);
            jac.col(col) = (mismatch(vp) - r) / dz;
        }
        const Eigen::VectorXd dx = jac.fullPivLu().solve(r);
        for (std::size_t u = 0; u < unk.size(); ++u) v[unk[u]] -= cd(dx(2 * u), dx(2 * u + 1));
    }
    out.v = v;
    out.s_gen.resize(n);
    for (int i = 0; i < n; ++i) {
        cd inj = 0.0;
        for (int k = 0; k < n; ++k) inj += c.y(i, k) * v[k];
        const int id = c.ids[i];
        const cd ld = c.load.count(id) ? c.load.at(id) : cd{};
        out.s_gen[i] = v[i] * std::conj(inj) + ld;
    }
    return out;
}

/// Sending-end complex power of a pi branch.
inline cd branch_flow(cd vi, cd vk, double r, double x, double b) {
    const cd ys = 1.0 / cd(r, x);
    return vi * std::conj(ys * (vi - vk) + cd(0.0, 0.5 * b) * vi);
}

/// Two-area network admittances written out by hand: 1e-4 + j1e-3 pu/km and
/// 1.75e-3 pu/km charging on 100 MVA, step-up transformers j0.15 on 900 MVA.
struct KundurHand {
    static cd line(double km) { return 1.0 / cd(1e-4 * km, 1e-3 * km); }
    static double charging(double km) { return 1.75e-3 * km; }
    static cd transformer() { return 1.0 / cd(0.0, 0.15 / 9.0); }
    static cd y77() {
        return line(10) + 2.0 * line(110) + cd(0, 0.5 * charging(10) + charging(110)) + cd(0, 2.0);
    }
    static cd y78() { return -2.0 * line(110); }
    static cd y15() { return -transformer(); }
    static cd y55() { return transformer() + line(25) + cd(0, 0.5 * charging(25)); }
    static cd y88() { return 4.0 * line(110) + cd(0, 2.0 * charging(110)); }
};

}  // namespace oracle
