#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) least squares for small models.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>

namespace afcsim::fit {

struct LmOptions
{
    int max_iterations = 500;
    double initial_lambda = 1e-3;
    /// Stop when the relative parameter step falls below this.
    double step_tolerance = 1e-14;
    /// Stop when the relative cost decrease falls below this.
    double cost_tolerance = 1e-20;
};

struct LmResult
{
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;
    double cost = 0.0;
    double residual_rms = 0.0;
    int iterations = 0;
    bool converged = false;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// Central-difference Jacobian of `f` at `p`.
inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& p)
{
    const Eigen::VectorXd r0 = f(p);
    Eigen::MatrixXd j(r0.size(), p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(p[k]));
        Eigen::VectorXd a = p;
        Eigen::VectorXd b = p;
        a[k] += h;
        b[k] -= h;
        j.col(k) = (f(a) - f(b)) / (2.0 * h);
    }
    return j;
}

/// Minimizes |r(p)|^2. The covariance is s^2 (J^T J)^-1 with s^2 the residual
/// variance per degree of freedom.
inline LmResult levenberg_marquardt(const ResidualFn& residual, Eigen::VectorXd p, const JacobianFn& jacobian = {},
                                    const LmOptions& opt = {})
{
    auto jac = [&](const Eigen::VectorXd& x) { return jacobian ? jacobian(x) : numeric_jacobian(residual, x); };

    LmResult out;
    Eigen::VectorXd r = residual(p);
    double cost = r.squaredNorm();
    double lambda = opt.initial_lambda;
    const Eigen::Index n = p.size();

    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        const Eigen::MatrixXd j = jac(p);
        const Eigen::MatrixXd jtj = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() <= std::numeric_limits<double>::min() || cost == 0.0) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        for (int tries = 0; tries < 60; ++tries) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index k = 0; k < n; ++k) {
                a(k, k) += lambda * std::max(jtj(k, k), 1e-300);
            }
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd trial = p + step;
            const Eigen::VectorXd rt = residual(trial);
            const double ct = rt.allFinite() ? rt.squaredNorm() : std::numeric_limits<double>::infinity();
            if (ct <= cost) {
                const double rel_step = step.norm() / (p.norm() + 1e-300);
                const double rel_cost = (cost - ct) / (cost + 1e-300);
                p = trial;
                r = rt;
                cost = ct;
                lambda = std::max(lambda / 10.0, 1e-15);
                accepted = true;
                if (rel_step < opt.step_tolerance || rel_cost < opt.cost_tolerance) {
                    out.converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // no descent direction left: at a minimum to machine precision
            out.converged = true;
            break;
        }
        if (out.converged) {
            break;
        }
    }

    out.params = p;
    out.cost = cost;
    out.iterations = it;
    const auto m = static_cast<double>(r.size());
    out.residual_rms = m > 0 ? std::sqrt(cost / m) : 0.0;
    const Eigen::MatrixXd j = jac(p);
    const double dof = std::max(1.0, m - static_cast<double>(n));
    const Eigen::MatrixXd jtj = j.transpose() * j;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (lu.isInvertible()) {
        out.covariance = lu.inverse() * (cost / dof);
    } else {
        out.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
    }
    return out;
}

} // namespace afcsim::fit
