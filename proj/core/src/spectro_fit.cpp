#include "qdsim/spectro_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <fmt/format.h>

#include "least_squares.hpp"
#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"

namespace qdsim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_grid(const std::vector<double>& x, const std::vector<double>& y, const char* what) {
    if (x.size() != y.size()) throw DomainError(std::string(what) + ": grid and values differ in length");
    if (x.empty()) throw DomainError(std::string(what) + ": empty data");
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (!(x[i] > x[i - 1])) throw DomainError(std::string(what) + ": grid must increase strictly");
    }
    for (double v : y) {
        if (!(v >= 0.0)) throw DomainError(std::string(what) + ": counts must be non-negative");
    }
}

FitResult make_fit_result(const detail::LsqResult& r, std::vector<std::string> names) {
    FitResult f;
    f.names = std::move(names);
    f.values.assign(r.x.data(), r.x.data() + r.x.size());
    const auto n = static_cast<std::size_t>(r.x.size());
    f.covariance.assign(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) f.covariance[i][j] = r.covariance(i, j);
    }
    f.chi2 = r.chi2;
    f.dof = r.dof;
    f.reduced_chi2 = r.dof > 0 ? r.chi2 / r.dof : kNaN;
    f.evaluations = r.evaluations;
    f.gradient_norm = r.gradient_cosine;
    f.converged = r.converged;
    return f;
}

double poisson_sigma(double counts) { return std::sqrt(std::max(counts, 1.0)); }

double sqrt_or_nan(double v) { return v >= 0.0 ? std::sqrt(v) : kNaN; }

// Data-derived weights pull fits low where counts are few. Refitting with
// sigma^2 = model converges to the Poisson maximum-likelihood point, and the
// LM covariance there is the inverse Fisher information. `sigma` is the
// array the problem's residual reads, seeded from the data.
detail::LsqResult solve_poisson(const detail::LsqProblem& prob, const std::vector<double>& y,
                                std::vector<double>& sigma, const Eigen::VectorXd& x0,
                                const detail::LsqOptions& lo = {}) {
    for (std::size_t i = 0; i < y.size(); ++i) sigma[i] = poisson_sigma(y[i]);
    detail::LsqResult res = detail::solve_least_squares(prob, x0, lo);
    int evaluations = res.evaluations;
    Eigen::VectorXd r;
    for (int pass = 0; pass < 8 && res.x.allFinite(); ++pass) {
        prob.residual(res.x, r);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double mu = y[i] - r(static_cast<Eigen::Index>(i)) * sigma[i];
            sigma[i] = std::sqrt(std::max(mu, 1e-3));
        }
        detail::LsqResult next = detail::solve_least_squares(prob, res.x, lo);
        evaluations += next.evaluations;
        if (!next.x.allFinite()) break;
        const double change =
            ((next.x - res.x).cwiseAbs().array() / (res.x.cwiseAbs().array() + 1e-300)).maxCoeff();
        res = std::move(next);
        if (change < 1e-9) break;
    }
    res.evaluations = evaluations;
    return res;
}

}  // namespace

void Spectrum::validate() const { check_grid(wavelengths, counts, "spectrum"); }

void G2Trace::validate() const {
    check_grid(delays, coincidences, "g2 trace");
    if (delays.size() > 2) {
        const double step = (delays.back() - delays.front()) / static_cast<double>(delays.size() - 1);
        for (std::size_t i = 1; i < delays.size(); ++i) {
            if (std::abs(delays[i] - delays[i - 1] - step) > 1e-6 * step) {
                throw DomainError("g2 trace: delay grid must be uniform");
            }
        }
    }
    if (!(bin_width >= 0.0)) throw DomainError("g2 trace: bin width must be non-negative");
    if (!(irf_sigma >= 0.0)) throw DomainError("g2 trace: IRF sigma must be non-negative");
}

void DecayTrace::validate() const { check_grid(times, counts, "decay trace"); }

double FitResult::value(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return values[i];
    }
    throw LookupError("no fit parameter '" + name + "'", name);
}

double FitResult::error(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return sqrt_or_nan(covariance[i][i]);
    }
    throw LookupError("no fit parameter '" + name + "'", name);
}

ProfileValue peak_profile(PeakShape shape, double x, double c, double w, double eta) {
    ProfileValue out;
    auto lorentz = [&](ProfileValue& p) {
        const double u = 2.0 * (x - c) / w;
        const double den = 1.0 + u * u;
        p.value = 1.0 / den;
        p.d[0] = 4.0 * u / (w * den * den);
        p.d[1] = 2.0 * u * u / (w * den * den);
    };
    auto gauss = [&](ProfileValue& p) {
        const double a = 4.0 * std::log(2.0);
        const double z = (x - c) / w;
        p.value = std::exp(-a * z * z);
        p.d[0] = p.value * 2.0 * a * z / w;
        p.d[1] = p.value * 2.0 * a * z * z / w;
    };
    switch (shape) {
        case PeakShape::Lorentzian: lorentz(out); break;
        case PeakShape::Gaussian: gauss(out); break;
        case PeakShape::PseudoVoigt: {
            ProfileValue l, g;
            lorentz(l);
            gauss(g);
            out.value = eta * l.value + (1.0 - eta) * g.value;
            out.d[0] = eta * l.d[0] + (1.0 - eta) * g.d[0];
            out.d[1] = eta * l.d[1] + (1.0 - eta) * g.d[1];
            out.d[2] = l.value - g.value;
            break;
        }
    }
    return out;
}

PeakFitReport fit_peaks(const Spectrum& spectrum, int n_peaks, const PeakFitOptions& opts) {
    spectrum.validate();
    if (n_peaks < 1) throw DomainError("fit_peaks: need at least one peak");
    const auto& x = spectrum.wavelengths;
    const auto& y = spectrum.counts;
    const std::size_t m = x.size();
    const bool voigt = opts.shape == PeakShape::PseudoVoigt;
    const int per = voigt ? 4 : 3;
    const int np = 1 + per * n_peaks;
    if (static_cast<int>(m) <= np) throw InsufficientDataError("fit_peaks: fewer points than parameters");

    // Background from the lower decile, peaks from residual maxima.
    std::vector<double> sorted = y;
    std::sort(sorted.begin(), sorted.end());
    const double bg0 = sorted[sorted.size() / 10];
    std::vector<double> resid(m);
    for (std::size_t i = 0; i < m; ++i) resid[i] = y[i] - bg0;
    const double dx_min = (x.back() - x.front()) / static_cast<double>(m - 1);
    Eigen::VectorXd x0(np);
    x0(0) = bg0;
    for (int k = 0; k < n_peaks; ++k) {
        const std::size_t i = static_cast<std::size_t>(std::max_element(resid.begin(), resid.end()) - resid.begin());
        const double amp = std::max(resid[i], 1.0);
        std::size_t lo = i, hi = i;
        while (lo > 0 && resid[lo] > 0.5 * amp) --lo;
        while (hi + 1 < m && resid[hi] > 0.5 * amp) ++hi;
        const double w = std::max(x[hi] - x[lo], 2.0 * dx_min);
        x0(1 + per * k) = x[i];
        x0(2 + per * k) = w;
        x0(3 + per * k) = amp;
        if (voigt) x0(4 + per * k) = 0.5;
        for (std::size_t j = 0; j < m; ++j) {
            resid[j] -= amp * peak_profile(PeakShape::Lorentzian, x[j], x[i], w).value;
        }
    }

    std::vector<double> sigma(m);
    detail::LsqProblem prob;
    prob.parameters = np;
    prob.residuals = static_cast<int>(m);
    prob.residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        r.resize(static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            double f = p(0);
            for (int k = 0; k < n_peaks; ++k) {
                const double eta = voigt ? p(4 + per * k) : 0.5;
                f += p(3 + per * k) * peak_profile(opts.shape, x[i], p(1 + per * k), p(2 + per * k), eta).value;
            }
            r(static_cast<Eigen::Index>(i)) = (y[i] - f) / sigma[i];
        }
    };
    prob.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& J) {
        J.setZero(static_cast<Eigen::Index>(m), np);
        for (std::size_t i = 0; i < m; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            J(row, 0) = -1.0 / sigma[i];
            for (int k = 0; k < n_peaks; ++k) {
                const double eta = voigt ? p(4 + per * k) : 0.5;
                const double A = p(3 + per * k);
                const ProfileValue pv = peak_profile(opts.shape, x[i], p(1 + per * k), p(2 + per * k), eta);
                J(row, 1 + per * k) = -A * pv.d[0] / sigma[i];
                J(row, 2 + per * k) = -A * pv.d[1] / sigma[i];
                J(row, 3 + per * k) = -pv.value / sigma[i];
                if (voigt) J(row, 4 + per * k) = -A * pv.d[2] / sigma[i];
            }
        }
    };
    detail::LsqOptions lo;
    lo.max_evaluations = opts.max_evaluations;
    const detail::LsqResult res = solve_poisson(prob, y, sigma, x0, lo);

    std::vector<std::string> names{"background"};
    for (int k = 0; k < n_peaks; ++k) {
        for (const char* n : {"center", "width", "amplitude"}) names.push_back(fmt::format("{}{}", n, k));
        if (voigt) names.push_back(fmt::format("eta{}", k));
    }
    PeakFitReport report;
    report.fit = make_fit_result(res, names);

    const double bg = res.x(0);
    const double bg_err = sqrt_or_nan(res.covariance(0, 0));
    std::vector<PeakFit> all;
    for (int k = 0; k < n_peaks; ++k) {
        PeakFit p;
        const int o = per * k;
        p.center = res.x(1 + o);
        p.width = std::abs(res.x(2 + o));
        p.amplitude = res.x(3 + o);
        p.eta = voigt ? res.x(4 + o) : (opts.shape == PeakShape::Lorentzian ? 1.0 : 0.0);
        p.background = bg;
        p.center_err = sqrt_or_nan(res.covariance(1 + o, 1 + o));
        p.width_err = sqrt_or_nan(res.covariance(2 + o, 2 + o));
        p.amplitude_err = sqrt_or_nan(res.covariance(3 + o, 3 + o));
        p.background_err = bg_err;
        p.snr = bg > 0.0 ? p.amplitude / bg : (p.amplitude > 0.0 ? INFINITY : 0.0);
        all.push_back(p);
    }
    std::sort(all.begin(), all.end(), [](const PeakFit& a, const PeakFit& b) { return a.center < b.center; });
    for (const auto& p : all) {
        if (!(p.amplitude > 0.0)) {
            report.discarded.push_back({p, "non-positive amplitude"});
        } else if (!(p.snr >= opts.snr_gate)) {
            report.discarded.push_back({p, fmt::format("snr {:.3f} below gate {:.3f}", p.snr, opts.snr_gate)});
        } else {
            report.peaks.push_back(p);
        }
    }
    return report;
}

FssResult extract_fss(const std::vector<Spectrum>& series, const FssOptions& opts) {
    if (series.size() < 8) throw InsufficientDataError("extract_fss: need at least 8 polarizer angles");
    std::vector<double> angles;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!series[i].polarizer_deg) {
            throw InsufficientDataError(fmt::format("extract_fss: spectrum {} has no polarizer angle", i));
        }
        angles.push_back(*series[i].polarizer_deg);
    }
    const auto [amin, amax] = std::minmax_element(angles.begin(), angles.end());
    if (*amax - *amin < 180.0 - 1e-9) throw InsufficientDataError("extract_fss: angles must span at least 180 deg");

    const double hc = constants::hc_eV_nm;
    std::vector<double> E, sE, th;
    std::vector<double> missing;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const PeakFitReport rep = fit_peaks(series[i], opts.peaks_per_spectrum, opts.peak);
        if (rep.peaks.empty() || !rep.fit.converged) {
            missing.push_back(angles[i]);
            continue;
        }
        const PeakFit* best = &rep.peaks.front();
        for (const auto& p : rep.peaks) {
            if (opts.target_nm ? std::abs(p.center - *opts.target_nm) < std::abs(best->center - *opts.target_nm)
                               : p.amplitude > best->amplitude) {
                best = &p;
            }
        }
        E.push_back(hc / best->center);
        sE.push_back(hc / (best->center * best->center) * best->center_err * 1e6);
        th.push_back(angles[i]);
    }
    if (!missing.empty()) {
        std::string list;
        for (double a : missing) list += fmt::format("{}{:g}", list.empty() ? "" : ", ", a);
        throw MissingPeakError("extract_fss: no peak at angles " + list + " deg", missing);
    }

    FssResult out;
    out.angles_deg = th;
    out.mean_energy_eV = std::accumulate(E.begin(), E.end(), 0.0) / static_cast<double>(E.size());
    const std::size_t n = E.size();
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double rel = (E[i] - out.mean_energy_eV) * 1e6;
        const double s = std::max(sE[i], 1e-9);
        const double t = 2.0 * th[i] * constants::pi / 180.0;
        out.energies_ueV.push_back(rel);
        out.energy_err_ueV.push_back(sE[i]);
        A(i, 0) = 1.0 / s;
        A(i, 1) = std::cos(t) / s;
        A(i, 2) = std::sin(t) / s;
        b(i) = rel / s;
    }
    const Eigen::Matrix3d cov = (A.transpose() * A).inverse();
    const Eigen::Vector3d coef = cov * (A.transpose() * b);
    out.reduced_chi2 = n > 3 ? (A * coef - b).squaredNorm() / static_cast<double>(n - 3) : kNaN;
    const double bc = coef(1), sc = coef(2);
    const double r = std::hypot(bc, sc);
    out.delta_ueV = 2.0 * r;
    if (r > 0.0) {
        out.delta_err_ueV =
            2.0 * std::sqrt(std::max(0.0, bc * bc * cov(1, 1) + sc * sc * cov(2, 2) + 2.0 * bc * sc * cov(1, 2))) / r;
    } else {
        out.delta_err_ueV = 2.0 * std::sqrt(0.5 * (cov(1, 1) + cov(2, 2)));
    }
    // Under delta = 0 the fitted amplitude is Rayleigh distributed; compare
    // with its 99.73% quantile, sqrt(-2 ln 0.0027).
    const double sigma0 = 2.0 * std::sqrt(0.5 * (cov(1, 1) + cov(2, 2)));
    out.consistent_with_zero = out.delta_ueV < 3.4393 * sigma0;
    out.theta_undefined = out.consistent_with_zero || r == 0.0;
    double theta = 0.5 * std::atan2(sc, bc) * 180.0 / constants::pi;
    if (theta < 0.0) theta += 180.0;
    out.theta0_deg = out.theta_undefined ? kNaN : theta;

    const auto [imin, imax] = std::minmax_element(out.energies_ueV.begin(), out.energies_ueV.end());
    out.minmax_ueV = *imax - *imin;
    const double smin = out.energy_err_ueV[static_cast<std::size_t>(imin - out.energies_ueV.begin())];
    const double smax = out.energy_err_ueV[static_cast<std::size_t>(imax - out.energies_ueV.begin())];
    out.minmax_err_ueV = std::hypot(smin, smax);
    return out;
}

namespace {

struct Regression {
    double slope = 0.0, intercept = 0.0, slope_err = 0.0;
};

Regression ols(const std::vector<double>& x, const std::vector<double>& y, std::size_t begin, std::size_t end) {
    const double n = static_cast<double>(end - begin);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    Regression r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        const double e = y[i] - r.intercept - r.slope * x[i];
        ssr += e * e;
    }
    r.slope_err = n > 2 ? std::sqrt(ssr / (n - 2.0) / sxx) : kNaN;
    return r;
}

void sorted_logs(const std::vector<double>& P, const std::vector<double>& I, std::vector<double>& lp,
                 std::vector<double>& li) {
    if (P.size() != I.size()) throw DomainError("power law: powers and intensities differ in length");
    std::vector<std::size_t> idx(P.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i : idx) {
        if (!(P[i] > 0.0)) throw DomainError("power law: powers must be positive");
        if (!(I[i] > 0.0)) throw DomainError("power law: intensities must be positive");
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return P[a] < P[b]; });
    lp.clear();
    li.clear();
    for (std::size_t i : idx) {
        lp.push_back(std::log(P[i]));
        li.push_back(std::log(I[i]));
    }
}

}  // namespace

double default_saturation_cutoff(const std::vector<double>& P, const std::vector<double>& I) {
    std::vector<double> lp, li;
    sorted_logs(P, I, lp, li);
    if (lp.size() < 3) return lp.empty() ? 0.0 : std::exp(lp.back());
    const double m0 = ols(lp, li, 0, 3).slope;
    for (std::size_t k = 1; k + 3 <= lp.size(); ++k) {
        if (ols(lp, li, k, k + 3).slope < 0.5 * m0) return std::exp(lp[k + 1]);
    }
    return std::exp(lp.back());
}

PowerLawResult fit_power_law(const std::vector<double>& P, const std::vector<double>& I,
                             std::optional<double> cutoff) {
    std::vector<double> lp, li;
    sorted_logs(P, I, lp, li);
    const double c = cutoff ? *cutoff : default_saturation_cutoff(P, I);
    const double lc = std::log(c) + 1e-12;
    std::size_t n = 0;
    while (n < lp.size() && lp[n] <= lc) ++n;
    if (n < 3) throw InsufficientDataError(fmt::format("power law: {} usable points below cutoff {:g} uW", n, c));
    const Regression r = ols(lp, li, 0, n);
    PowerLawResult out;
    out.slope = r.slope;
    out.slope_err = r.slope_err;
    out.log_prefactor = r.intercept;
    out.cutoff_uW = c;
    out.points_used = static_cast<int>(n);
    return out;
}

namespace {

// exp(x^2) erfc(x) without overflow.
double erfcx(double x) {
    if (x < 26.0) return std::exp(x * x) * std::erfc(x);
    const double inv = 1.0 / (x * x);
    return (1.0 - 0.5 * inv + 0.75 * inv * inv - 1.875 * inv * inv * inv) / (x * std::sqrt(constants::pi));
}

// exp(-|t|/tau) convolved with a unit-area Gaussian of width sigma.
double convolved_exponential(double t, double tau, double sigma) {
    if (sigma <= 0.0) return std::exp(-std::abs(t) / tau);
    const double rt2 = std::sqrt(2.0);
    const double g = std::exp(-t * t / (2.0 * sigma * sigma));
    const double um = (sigma / tau - t / sigma) / rt2;
    const double up = (sigma / tau + t / sigma) / rt2;
    // exp(s^2/2tau^2 -+ t/tau) erfc(u) = exp(u^2 - t^2/2s^2) erfc(u).
    auto term = [&](double u, double sign) {
        if (u >= 0.0) return g * erfcx(u);
        return std::exp(sigma * sigma / (2.0 * tau * tau) - sign * t / tau) * std::erfc(u);
    };
    return 0.5 * (term(um, 1.0) + term(up, -1.0));
}

}  // namespace

double g2_model(double tau_ns, double g0, double tau_c, double sigma, double bin) {
    const double tc = std::abs(tau_c);
    if (!(tc > 0.0)) return 1.0;
    auto f = [&](double t) { return convolved_exponential(t, tc, sigma); };
    double shape;
    if (bin <= 0.0) {
        shape = f(tau_ns);
    } else {
        using Q = boost::math::quadrature::gauss_kronrod<double, 21>;
        const double a = tau_ns - 0.5 * bin, b = tau_ns + 0.5 * bin;
        double integral;
        if (a < 0.0 && b > 0.0) integral = Q::integrate(f, a, 0.0, 8, 1e-12) + Q::integrate(f, 0.0, b, 8, 1e-12);
        else integral = Q::integrate(f, a, b, 8, 1e-12);
        shape = integral / bin;
    }
    return 1.0 - (1.0 - g0) * shape;
}

double calibrate_irf_for_raw_minimum(double g0, double tau_c, double bin, double target) {
    if (!(tau_c > 0.0)) throw DomainError("IRF calibration: tau_c must be positive");
    auto r = [&](double s) { return g2_model(0.0, g0, tau_c, s, bin) - target; };
    if (r(0.0) > 0.0) throw DomainError("IRF calibration: target minimum below the zero-IRF value");
    double hi = tau_c;
    while (r(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e3 * tau_c) throw DomainError("IRF calibration: target minimum not reachable");
    }
    boost::uintmax_t it = 200;
    const auto root = boost::math::tools::toms748_solve(
        r, 0.0, hi, [](double a, double b) { return std::abs(a - b) < 1e-14; }, it);
    return 0.5 * (root.first + root.second);
}

G2Result fit_g2(const G2Trace& trace) {
    trace.validate();
    const auto& t = trace.delays;
    const auto& y = trace.coincidences;
    const std::size_t m = t.size();
    if (m < 8) throw InsufficientDataError("fit_g2: need at least 8 delay bins");
    const double tmax = std::max(std::abs(t.front()), std::abs(t.back()));

    // Outer 10% of |tau| as a provisional plateau, half-depth for tau_c.
    std::vector<double> absd(m);
    for (std::size_t i = 0; i < m; ++i) absd[i] = std::abs(t[i]);
    auto mean_beyond = [&](double cut, std::size_t* count) {
        double s = 0.0;
        std::size_t c = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if (absd[i] >= cut) {
                s += y[i];
                ++c;
            }
        }
        if (count) *count = c;
        return c ? s / static_cast<double>(c) : kNaN;
    };
    const double outer = mean_beyond(0.9 * tmax, nullptr);
    if (!(outer > 0.0)) throw NormalizationError("fit_g2: no coincidences at long delay");
    const std::size_t imin = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
    const double depth = 1.0 - y[imin] / outer;
    const double step = (t.back() - t.front()) / static_cast<double>(m - 1);

    G2Result out;
    if (!(depth > 0.0)) {
        // Flat trace: no antibunching dip, correlation time cannot be fitted.
        out.plateau = mean_beyond(0.0, nullptr);
        out.g0_raw = y[imin] / out.plateau;
        out.g0_deconvolved = 1.0;
        out.g0_err = kNaN;
        out.tau_c = kNaN;
        out.tau_c_err = kNaN;
        out.tau_unidentifiable = true;
        return out;
    }
    // Walk out from the dip on a 3-bin average until it recovers half the depth.
    auto smooth = [&](std::size_t i) {
        const std::size_t a = i == 0 ? 0 : i - 1, b = std::min(i + 1, m - 1);
        double s = 0.0;
        for (std::size_t k = a; k <= b; ++k) s += y[k];
        return s / static_cast<double>(b - a + 1) / outer;
    };
    const double half_level = 1.0 - 0.5 * depth;
    std::size_t right = imin, left = imin;
    while (right + 1 < m && smooth(right) < half_level) ++right;
    while (left > 0 && smooth(left) < half_level) --left;
    const double tau_half = std::max(0.5 * (t[right] - t[left]), step);
    const double tau_guess = std::max(tau_half / std::log(2.0), step);
    std::size_t n_plateau = 0;
    double plateau = mean_beyond(5.0 * tau_guess, &n_plateau);
    if (n_plateau == 0) {
        throw NormalizationError(fmt::format("fit_g2: no delay bins beyond 5 tau_c ~ {:.3g} ns", 5.0 * tau_guess));
    }

    std::vector<double> sigma(m);
    detail::LsqProblem prob;
    prob.parameters = 3;
    prob.residuals = static_cast<int>(m);
    prob.residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        r.resize(static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            const double f = p(2) * g2_model(t[i], p(0), p(1), trace.irf_sigma, trace.bin_width);
            r(static_cast<Eigen::Index>(i)) = (y[i] - f) / sigma[i];
        }
    };
    Eigen::VectorXd x0(3);
    x0 << std::clamp(y[imin] / plateau, 0.0, 1.0), tau_guess, plateau;
    const detail::LsqResult res = solve_poisson(prob, y, sigma, x0);
    out.fit = make_fit_result(res, {"g0", "tau_c", "plateau"});
    out.g0_deconvolved = res.x(0);
    out.g0_err = sqrt_or_nan(res.covariance(0, 0));
    out.tau_c = std::abs(res.x(1));
    out.tau_c_err = sqrt_or_nan(res.covariance(1, 1));
    out.tau_unidentifiable = !(1.0 - out.g0_deconvolved > 3.0 * out.g0_err) || !std::isfinite(out.tau_c_err) ||
                             out.tau_c_err > out.tau_c;
    if (!out.tau_unidentifiable) {
        plateau = mean_beyond(5.0 * out.tau_c, &n_plateau);
        if (n_plateau == 0) {
            throw NormalizationError(
                fmt::format("fit_g2: no delay bins beyond 5 tau_c = {:.3g} ns for normalisation", 5.0 * out.tau_c));
        }
    }
    out.plateau = plateau;
    out.g0_raw = y[imin] / plateau;
    return out;
}

namespace {

struct ExpFit {
    detail::LsqResult res;
    bool ok = false;
};

ExpFit fit_exponentials(const std::vector<double>& t, const std::vector<double>& y, const Eigen::VectorXd& x0) {
    const std::size_t m = t.size();
    const int terms = static_cast<int>(x0.size() / 2);
    std::vector<double> sigma(m);
    detail::LsqProblem prob;
    prob.parameters = static_cast<int>(x0.size());
    prob.residuals = static_cast<int>(m);
    prob.residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        r.resize(static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) {
            double f = 0.0;
            for (int k = 0; k < terms; ++k) f += p(2 * k) * std::exp(-t[i] / p(2 * k + 1));
            r(static_cast<Eigen::Index>(i)) = (y[i] - f) / sigma[i];
        }
    };
    prob.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& J) {
        J.resize(static_cast<Eigen::Index>(m), p.size());
        for (std::size_t i = 0; i < m; ++i) {
            for (int k = 0; k < terms; ++k) {
                const double tau = p(2 * k + 1);
                const double e = std::exp(-t[i] / tau);
                J(static_cast<Eigen::Index>(i), 2 * k) = -e / sigma[i];
                J(static_cast<Eigen::Index>(i), 2 * k + 1) = -p(2 * k) * e * t[i] / (tau * tau) / sigma[i];
            }
        }
    };
    ExpFit f;
    f.res = solve_poisson(prob, y, sigma, x0);
    f.ok = f.res.x.allFinite();
    for (int k = 0; k < terms && f.ok; ++k) f.ok = f.res.x(2 * k + 1) > 0.0;
    return f;
}

}  // namespace

LifetimeResult fit_lifetime(const DecayTrace& trace) {
    trace.validate();
    const std::size_t i0 = static_cast<std::size_t>(std::max_element(trace.counts.begin(), trace.counts.end()) -
                                                    trace.counts.begin());
    std::vector<double> t, y;
    for (std::size_t i = i0; i < trace.times.size(); ++i) {
        t.push_back(trace.times[i] - trace.times[i0]);
        y.push_back(trace.counts[i]);
    }
    if (t.size() < 8) throw InsufficientDataError("fit_lifetime: fewer than 8 points after the peak");
    const std::size_t tail = std::max<std::size_t>(1, t.size() / 10);
    double tail_mean = 0.0;
    for (std::size_t i = t.size() - tail; i < t.size(); ++i) tail_mean += y[i];
    tail_mean /= static_cast<double>(tail);
    if (!(y.front() > 10.0 * std::max(tail_mean, 1.0))) {
        throw InsufficientDataError("fit_lifetime: trace does not decay (peak/tail ratio below 10)");
    }

    // Single exponential from a log-linear fit of the part above 10% of peak.
    std::vector<double> lt, ly;
    for (std::size_t i = 0; i < t.size() && y[i] > 0.1 * y.front(); ++i) {
        lt.push_back(t[i]);
        ly.push_back(std::log(y[i]));
    }
    double tau_s = t.back() / 5.0;
    if (lt.size() >= 3) {
        const Regression r = ols(lt, ly, 0, lt.size());
        if (r.slope < 0.0) tau_s = -1.0 / r.slope;
    }
    Eigen::VectorXd s0(2);
    s0 << y.front(), tau_s;
    const ExpFit single = fit_exponentials(t, y, s0);
    if (!single.ok) throw InsufficientDataError("fit_lifetime: single-exponential fit failed");
    const double A = single.res.x(0), tau = single.res.x(1);
    if (!(t.back() >= 5.0 * tau || y.front() >= 1e3 * std::max(y.back(), 1.0))) {
        throw InsufficientDataError("fit_lifetime: trace shorter than 5 lifetimes and under 3 decades");
    }

    LifetimeResult out;
    out.t0 = trace.times[i0];
    out.single_A = A;
    out.single_tau = tau;
    out.single_tau_err = sqrt_or_nan(single.res.covariance(1, 1));
    out.reduced_chi2_single = single.res.dof > 0 ? single.res.chi2 / single.res.dof : kNaN;

    std::optional<ExpFit> best;
    for (double ratio : {0.1, 0.2, 0.4}) {
        for (double frac : {0.3, 0.5, 0.7}) {
            Eigen::VectorXd x0(4);
            x0 << frac * A, ratio * tau, (1.0 - frac) * A, 1.1 * tau;
            ExpFit f = fit_exponentials(t, y, x0);
            if (!f.ok) continue;
            if (!best || (f.res.converged && !best->res.converged) ||
                (f.res.converged == best->res.converged && f.res.chi2 < best->res.chi2)) {
                best = std::move(f);
            }
        }
    }

    auto collapse = [&] {
        out.degenerate = true;
        out.A1 = A;
        out.tau1 = out.tau2 = tau;
        out.A2 = 0.0;
        out.tau1_err = out.tau2_err = out.single_tau_err;
        out.A1_err = sqrt_or_nan(single.res.covariance(0, 0));
        out.A2_err = 0.0;
        out.principal_tau = tau;
        out.principal_tau_err = out.single_tau_err;
        out.fit = make_fit_result(single.res, {"A", "tau"});
    };
    if (!best) {
        collapse();
        return out;
    }
    Eigen::VectorXd x = best->res.x;
    Eigen::MatrixXd cov = best->res.covariance;
    if (x(1) > x(3)) {
        std::swap(x(0), x(2));
        std::swap(x(1), x(3));
        Eigen::PermutationMatrix<4> perm;
        perm.indices() << 2, 3, 0, 1;
        cov = perm * cov * perm.transpose();
    }
    out.reduced_chi2_double = best->res.dof > 0 ? best->res.chi2 / best->res.dof : kNaN;
    out.A1 = x(0);
    out.tau1 = x(1);
    out.A2 = x(2);
    out.tau2 = x(3);
    out.A1_err = sqrt_or_nan(cov(0, 0));
    out.tau1_err = sqrt_or_nan(cov(1, 1));
    out.A2_err = sqrt_or_nan(cov(2, 2));
    out.tau2_err = sqrt_or_nan(cov(3, 3));
    const bool finite = std::isfinite(out.A1_err) && std::isfinite(out.tau1_err) && std::isfinite(out.A2_err) &&
                        std::isfinite(out.tau2_err);
    const bool same_tau = std::abs(out.tau2 - out.tau1) < std::hypot(out.tau1_err, out.tau2_err);
    const bool empty_term = out.A1 < 2.0 * out.A1_err || out.A2 < 2.0 * out.A2_err;
    if (!best->res.converged || !finite || same_tau || empty_term) {
        collapse();
        out.reduced_chi2_double = best->res.dof > 0 ? best->res.chi2 / best->res.dof : kNaN;
        return out;
    }
    out.fit = make_fit_result(best->res, {"A1", "tau1", "A2", "tau2"});
    if (best->res.x(1) > best->res.x(3)) {
        out.fit.values = {out.A1, out.tau1, out.A2, out.tau2};
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) out.fit.covariance[i][j] = cov(i, j);
        }
    }
    const bool second = out.A2 * out.tau2 >= out.A1 * out.tau1;
    out.principal_tau = second ? out.tau2 : out.tau1;
    out.principal_tau_err = second ? out.tau2_err : out.tau1_err;
    return out;
}

}  // namespace qdsim
