#pragma once

// Simultaneous-implicit trapezoidal integration of semi-explicit DAEs
//   dx/dt = f(x, y),  0 = g(x, y)
// with a Newton iteration on the stacked vector z = [x; y]. The Jacobian is
// built by forward differences and kept across steps until convergence slows
// down, the step size changes or the caller invalidates it.
//
// A `Dae` provides:
//   std::size_t differential_size() const;
//   std::size_t algebraic_size() const;
//   void eval(const Eigen::VectorXd& z, Eigen::Ref<Eigen::VectorXd> f, Eigen::Ref<Eigen::VectorXd> g);
//   std::string describe(std::size_t equation) const;

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>

#include "cohsim/error.hpp"

namespace cohsim {

struct NewtonSettings {
    double tolerance = 1e-8;
    int max_iterations = 25;
};

struct StepStats {
    int iterations = 0;
    double residual = 0.0;
    bool jacobian_refreshed = false;
};

template <typename Dae>
class TrapezoidalIntegrator {
  public:
    TrapezoidalIntegrator(Dae& dae, Eigen::VectorXd z0, NewtonSettings settings = {})
        : dae_(dae),
          nd_(dae.differential_size()),
          na_(dae.algebraic_size()),
          z_(std::move(z0)),
          settings_(settings) {
        if (static_cast<std::size_t>(z_.size()) != nd_ + na_) throw ConfigError("integrator: state size mismatch");
        f_n_.resize(static_cast<Eigen::Index>(nd_));
        g_.resize(static_cast<Eigen::Index>(na_));
        f_.resize(static_cast<Eigen::Index>(nd_));
        refresh_derivatives();
    }

    const Eigen::VectorXd& state() const { return z_; }
    const Eigen::VectorXd& derivatives() const { return f_n_; }
    std::size_t differential_size() const { return nd_; }
    int jacobian_updates() const { return jacobian_updates_; }
    void invalidate_jacobian() { jac_valid_ = false; }

    /// Re-evaluates f at the current point (after a change of exogenous inputs).
    void refresh_derivatives() { dae_.eval(z_, f_n_, g_); }

    /// Advances by h. On failure the state is left untouched and SolveError is thrown.
    StepStats step(double h) {
        if (!(h > 0.0)) throw SolveError("integrator: non-positive step");
        if (std::abs(h - jac_h_) > 1e-6 * h) jac_valid_ = false;
        Eigen::VectorXd z = z_;
        const Eigen::VectorXd x_n = z_.head(static_cast<Eigen::Index>(nd_));
        auto residual = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& r) {
            dae_.eval(zz, f_, g_);
            r.head(static_cast<Eigen::Index>(nd_)) =
                zz.head(static_cast<Eigen::Index>(nd_)) - x_n - 0.5 * h * (f_ + f_n_);
            r.tail(static_cast<Eigen::Index>(na_)) = g_;
        };
        StepStats stats = newton(z, residual, h, true);
        z_ = std::move(z);
        dae_.eval(z_, f_n_, g_);
        return stats;
    }

    /// Solves g(x, y) = 0 for y with x frozen, e.g. after a network event.
    StepStats solve_algebraic() {
        const auto nd = static_cast<Eigen::Index>(nd_), na = static_cast<Eigen::Index>(na_);
        Eigen::VectorXd z = z_;
        Eigen::VectorXd f(nd), g(na);
        const std::size_t n = na_;
        auto residual = [&](const Eigen::VectorXd& yy, Eigen::VectorXd& r) {
            z.tail(na) = yy;
            dae_.eval(z, f, g);
            r = g;
        };
        Eigen::VectorXd y = z_.tail(na);
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        Eigen::VectorXd r(na), r_pert(na);
        StepStats stats;
        for (int it = 0;; ++it) {
            residual(y, r);
            stats.residual = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
            stats.iterations = it;
            if (stats.residual < settings_.tolerance) break;
            if (it >= settings_.max_iterations || !std::isfinite(stats.residual)) {
                throw SolveError("algebraic re-solve did not converge (residual " + std::to_string(stats.residual) +
                                 ")");
            }
            for (Eigen::Index c = 0; c < na; ++c) {
                const double dz = 1e-7 * std::max(1.0, std::abs(y(c)));
                Eigen::VectorXd yp = y;
                yp(c) += dz;
                residual(yp, r_pert);
                jac.col(c) = (r_pert - r) / dz;
            }
            residual(y, r);
            y -= jac.partialPivLu().solve(r);
        }
        z_.tail(na) = y;
        jac_valid_ = false;
        dae_.eval(z_, f_n_, g_);
        return stats;
    }

  private:
    template <typename Residual>
    StepStats newton(Eigen::VectorXd& z, Residual&& residual, double h, bool allow_refresh) {
        const auto n = static_cast<Eigen::Index>(nd_ + na_);
        Eigen::VectorXd r(n);
        StepStats stats;
        double previous = 0.0;
        int since_refresh = 0;
        for (int it = 0;; ++it) {
            residual(z, r);
            const double norm = r.cwiseAbs().maxCoeff();
            stats.iterations = it;
            stats.residual = norm;
            if (norm < settings_.tolerance) return stats;
            if (it >= settings_.max_iterations || !std::isfinite(norm)) {
                Eigen::Index worst = 0;
                r.cwiseAbs().maxCoeff(&worst);
                std::ostringstream msg;
                msg << "Newton did not converge: residual " << norm << " in " << dae_.describe(static_cast<std::size_t>(worst));
                throw SolveError(msg.str());
            }
            const bool slow = it > 0 && norm > 0.25 * previous;
            if (allow_refresh && (!jac_valid_ || (slow && since_refresh > 0))) {
                build_jacobian(z, r, residual);
                jac_h_ = h;
                since_refresh = 0;
                stats.jacobian_refreshed = true;
            }
            previous = norm;
            z -= lu_.solve(r);
            ++since_refresh;
        }
    }

    template <typename Residual>
    void build_jacobian(const Eigen::VectorXd& z, const Eigen::VectorXd& r0, Residual& residual) {
        const auto n = z.size();
        Eigen::MatrixXd jac(n, n);
        Eigen::VectorXd zp = z, rp(n);
        for (Eigen::Index c = 0; c < n; ++c) {
            const double dz = 1e-7 * std::max(1.0, std::abs(z(c)));
            zp(c) = z(c) + dz;
            residual(zp, rp);
            jac.col(c) = (rp - r0) / dz;
            zp(c) = z(c);
        }
        lu_.compute(jac);
        jac_valid_ = true;
        ++jacobian_updates_;
    }

    Dae& dae_;
    std::size_t nd_, na_;
    Eigen::VectorXd z_;
    NewtonSettings settings_;
    Eigen::VectorXd f_n_, f_, g_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    bool jac_valid_ = false;
    double jac_h_ = 0.0;
    int jacobian_updates_ = 0;
};

}  // namespace cohsim
