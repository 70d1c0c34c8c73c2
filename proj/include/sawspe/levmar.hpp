#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace sawspe::fit {

/// Residual callback: fill `residuals` (already sized to the number of data
/// points) for parameter vector `params`.
using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

/// Optional analytic Jacobian; rows = residuals, cols = parameters.
using JacobianFn = std::function<void(const Eigen::VectorXd& params, Eigen::MatrixXd& jacobian)>;

struct LmOptions {
    int max_iterations = 200;
    /// Converged once the step is below xtol relative to the parameter norm.
    double xtol = 1e-8;
    /// Converged once actual and predicted relative cost reductions are both below ftol.
    double ftol = 1e-15;
    /// Converged once max |J^T r| / (|J| |r|) is below gtol.
    double gtol = 1e-13;
    double initial_lambda = 1e-3;
    /// Finite-difference step relative to max(|p|, 1) for the central-difference Jacobian.
    double fd_step = 1e-6;
    /// When true the covariance is (J^T J)^-1, i.e. residuals are already
    /// divided by known absolute sigmas. Otherwise it is scaled by SSR/(n-p).
    bool absolute_sigma = false;
};

struct LmResult {
    Eigen::VectorXd params;
    /// Infinite diagonal entries mark parameters the data do not constrain.
    Eigen::MatrixXd covariance;
    Eigen::VectorXd stderr_;
    Eigen::VectorXd residuals;
    double ssr = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string reason;

    double residual_norm() const { return std::sqrt(ssr); }
};

/// Levenberg-Marquardt with Marquardt diagonal scaling.
///
/// Throws ConvergenceError (carrying the last iterate) when the iteration cap
/// is reached without meeting any of the xtol/ftol/gtol tests.
LmResult levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd initial, Eigen::Index n_residuals,
                             const LmOptions& options = {}, const JacobianFn& jacobian = {});

/// Covariance from a Jacobian at the optimum, scaled by `sigma2`. Directions
/// with eigenvalue below 1e-12 of the largest are treated as unconstrained.
Eigen::MatrixXd covariance_from_jacobian(const Eigen::MatrixXd& jacobian, double sigma2);

/// Central-difference Jacobian.
Eigen::MatrixXd numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& params,
                                 Eigen::Index n_residuals, double rel_step);

}  // namespace sawspe::fit
