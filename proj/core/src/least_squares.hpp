#pragma once

// Weighted nonlinear least squares on top of Eigen's MINPACK port.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qdsim::detail {

struct LsqProblem {
    int parameters = 0;
    int residuals = 0;
    /// Weighted residuals r_i = (y_i - f_i(x)) / sigma_i.
    std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> residual;
    /// d r / d x; central differences when empty.
    std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)> jacobian;
};

struct LsqOptions {
    int max_evaluations = 4000;
    double xtol = 1e-12;
    double ftol = 1e-14;
    double gradient_tolerance = 1e-6;
};

struct LsqResult {
    Eigen::VectorXd x;
    Eigen::MatrixXd covariance;  // (J^T J)^-1, NaN rows for unidentifiable directions
    double chi2 = 0.0;
    int dof = 0;
    int status = 0;
    int evaluations = 0;
    double gradient_cosine = 0.0;
    bool converged = false;
};

void central_difference_jacobian(const LsqProblem& p, const Eigen::VectorXd& x, Eigen::MatrixXd& J);

LsqResult solve_least_squares(const LsqProblem& problem, Eigen::VectorXd x0, const LsqOptions& opts = {});

}  // namespace qdsim::detail
