#include "least_squares.hpp"

#include <cmath>
#include <limits>

#include <unsupported/Eigen/NonLinearOptimization>

namespace qdsim::detail {

void central_difference_jacobian(const LsqProblem& p, const Eigen::VectorXd& x, Eigen::MatrixXd& J) {
    J.resize(p.residuals, p.parameters);
    Eigen::VectorXd xp = x, rp(p.residuals), rm(p.residuals);
    for (int j = 0; j < p.parameters; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
        xp(j) = x(j) + h;
        p.residual(xp, rp);
        xp(j) = x(j) - h;
        p.residual(xp, rm);
        xp(j) = x(j);
        J.col(j) = (rp - rm) / (2.0 * h);
    }
}

namespace {

// Eigen's LM minimises |f|^2 and expects df = d f / d x.
struct Functor {
    const LsqProblem& p;
    int inputs() const { return p.parameters; }
    int values() const { return p.residuals; }
    int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
        p.residual(x, f);
        return f.allFinite() ? 0 : -1;
    }
    int df(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
        if (p.jacobian) p.jacobian(x, J);
        else central_difference_jacobian(p, x, J);
        return 0;
    }
};

}  // namespace

LsqResult solve_least_squares(const LsqProblem& problem, Eigen::VectorXd x0, const LsqOptions& opts) {
    LsqResult out;
    out.dof = problem.residuals - problem.parameters;
    Functor f{problem};
    Eigen::LevenbergMarquardt<Functor> lm(f);
    lm.parameters.maxfev = opts.max_evaluations;
    lm.parameters.xtol = opts.xtol;
    lm.parameters.ftol = opts.ftol;
    lm.parameters.gtol = 0.0;
    const auto status = lm.minimize(x0);
    out.status = static_cast<int>(status);
    out.evaluations = static_cast<int>(lm.nfev);
    out.x = x0;

    Eigen::VectorXd r(problem.residuals);
    problem.residual(out.x, r);
    Eigen::MatrixXd J;
    f.df(out.x, J);
    out.chi2 = r.squaredNorm();

    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    double cosine = 0.0;
    for (int j = 0; j < problem.parameters; ++j) {
        const double s = std::sqrt(JtJ(j, j) * out.chi2);
        if (s > 0.0) cosine = std::max(cosine, std::abs(g(j)) / s);
    }
    out.gradient_cosine = cosine;

    // Pseudo-inverse; directions with vanishing curvature are unidentifiable.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() ? sv(0) * 1e-12 : 0.0;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(problem.parameters, problem.parameters);
    std::vector<int> singular;
    for (int k = 0; k < sv.size(); ++k) {
        if (sv(k) > cutoff) {
            cov += svd.matrixV().col(k) * svd.matrixV().col(k).transpose() / (sv(k) * sv(k));
        } else {
            singular.push_back(k);
        }
    }
    for (int k : singular) {
        for (int j = 0; j < problem.parameters; ++j) {
            if (std::abs(svd.matrixV()(j, k)) > 1e-8) {
                cov.row(j).setConstant(std::numeric_limits<double>::quiet_NaN());
                cov.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
            }
        }
    }
    out.covariance = cov;

    using namespace Eigen::LevenbergMarquardtSpace;
    const bool stopped_ok = status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                            status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall ||
                            status == FtolTooSmall || status == XtolTooSmall || status == GtolTooSmall;
    out.converged = stopped_ok && x0.allFinite() && std::isfinite(out.chi2) &&
                    (cosine <= opts.gradient_tolerance || out.chi2 <= 1e-16 * problem.residuals);
    return out;
}

}  // namespace qdsim::detail
