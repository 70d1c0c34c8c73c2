#include "sawspe/levmar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sawspe/error.hpp"

namespace sawspe::fit {

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

Eigen::MatrixXd numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& params,
                                 Eigen::Index n_residuals, double rel_step) {
    Eigen::MatrixXd jac(n_residuals, params.size());
    Eigen::VectorXd plus(n_residuals), minus(n_residuals);
    Eigen::VectorXd p = params;
    for (Eigen::Index j = 0; j < params.size(); ++j) {
        const double h = rel_step * std::max(std::abs(params[j]), 1.0);
        p[j] = params[j] + h;
        residuals(p, plus);
        p[j] = params[j] - h;
        residuals(p, minus);
        p[j] = params[j];
        jac.col(j) = (plus - minus) / (2.0 * h);
    }
    return jac;
}

Eigen::MatrixXd covariance_from_jacobian(const Eigen::MatrixXd& jacobian, double sigma2) {
    const Eigen::Index np = jacobian.cols();
    const Eigen::MatrixXd normal = jacobian.transpose() * jacobian;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    const Eigen::VectorXd& vals = eig.eigenvalues();
    const Eigen::MatrixXd& vecs = eig.eigenvectors();
    const double vmax = np > 0 ? vals.cwiseAbs().maxCoeff() : 0.0;
    const double cutoff = 1e-12 * vmax;

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(np, np);
    std::vector<bool> unconstrained(static_cast<std::size_t>(np), false);
    for (Eigen::Index k = 0; k < np; ++k) {
        if (vals[k] > cutoff && vals[k] > 0.0) {
            cov += vecs.col(k) * vecs.col(k).transpose() / vals[k];
        } else {
            for (Eigen::Index i = 0; i < np; ++i)
                if (std::abs(vecs(i, k)) > 1e-8) unconstrained[static_cast<std::size_t>(i)] = true;
        }
    }
    cov *= sigma2;
    for (Eigen::Index i = 0; i < np; ++i) {
        if (unconstrained[static_cast<std::size_t>(i)]) cov(i, i) = std::numeric_limits<double>::infinity();
    }
    return cov;
}

LmResult levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd initial, Eigen::Index n_residuals,
                             const LmOptions& options, const JacobianFn& jacobian) {
    const Eigen::Index np = initial.size();
    LmResult out;
    out.params = std::move(initial);
    out.residuals.resize(n_residuals);

    auto jac_at = [&](const Eigen::VectorXd& p) {
        if (jacobian) {
            Eigen::MatrixXd j(n_residuals, np);
            jacobian(p, j);
            return j;
        }
        out.evaluations += static_cast<int>(2 * np);
        return numeric_jacobian(residuals, p, n_residuals, options.fd_step);
    };

    residuals(out.params, out.residuals);
    ++out.evaluations;
    double cost = out.residuals.squaredNorm();
    if (!std::isfinite(cost)) throw DataError("fit: residuals are not finite at the initial guess");

    Eigen::MatrixXd jac = jac_at(out.params);
    double lambda = options.initial_lambda;
    double nu = 2.0;
    Eigen::VectorXd trial(np);
    Eigen::VectorXd trial_res(n_residuals);

    while (true) {
        if (cost == 0.0) {
            out.converged = true;
            out.reason = "zero residual";
            break;
        }
        const Eigen::VectorXd grad = jac.transpose() * out.residuals;
        {
            double gmax = 0.0;
            const double rnorm = std::sqrt(cost);
            for (Eigen::Index j = 0; j < np; ++j) {
                const double cn = jac.col(j).norm();
                if (cn > 0.0) gmax = std::max(gmax, std::abs(grad[j]) / (cn * rnorm));
            }
            if (gmax <= options.gtol) {
                out.converged = true;
                out.reason = "gradient orthogonal to residuals";
                break;
            }
        }
        if (out.iterations >= options.max_iterations) {
            throw ConvergenceError("fit did not converge within " + std::to_string(options.max_iterations) +
                                       " iterations",
                                   to_std(out.params), out.iterations);
        }
        ++out.iterations;

        const Eigen::MatrixXd normal = jac.transpose() * jac;
        Eigen::VectorXd diag = normal.diagonal();
        const double dmax = diag.size() > 0 ? diag.maxCoeff() : 0.0;
        for (Eigen::Index j = 0; j < np; ++j) diag[j] = std::max(diag[j], 1e-12 * dmax + 1e-300);

        Eigen::MatrixXd damped = normal;
        damped.diagonal() += lambda * diag;
        const Eigen::VectorXd step = damped.ldlt().solve(-grad);

        trial = out.params + step;
        residuals(trial, trial_res);
        ++out.evaluations;
        const double trial_cost = trial_res.squaredNorm();

        // Predicted reduction of the local quadratic model.
        const double predicted = -(2.0 * step.dot(grad) + step.dot(normal * step));
        const double actual = cost - trial_cost;
        const bool small_step = step.norm() <= options.xtol * (out.params.norm() + options.xtol);

        if (std::isfinite(trial_cost) && actual > 0.0) {
            const double rho = predicted > 0.0 ? actual / predicted : 1.0;
            out.params = trial;
            out.residuals = trial_res;
            const double old_cost = cost;
            cost = trial_cost;
            jac = jac_at(out.params);
            lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
            nu = 2.0;
            if (small_step) {
                out.converged = true;
                out.reason = "parameter change below xtol";
                break;
            }
            if (actual / old_cost <= options.ftol && predicted / old_cost <= options.ftol) {
                out.converged = true;
                out.reason = "cost reduction below ftol";
                break;
            }
        } else {
            if (small_step) {
                out.converged = true;
                out.reason = "no further reduction possible";
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if (lambda > 1e20) {
                out.converged = true;
                out.reason = "damping saturated at a minimum";
                break;
            }
        }
    }

    out.ssr = cost;
    const double dof = static_cast<double>(std::max<Eigen::Index>(n_residuals - np, 1));
    const double sigma2 = options.absolute_sigma ? 1.0 : cost / dof;
    out.covariance = covariance_from_jacobian(jac, sigma2);
    out.stderr_ = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

}  // namespace sawspe::fit
