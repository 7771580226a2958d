#include "qdsim/transport.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "qdsim/bernoulli.hpp"
#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/fermi.hpp"
#include "qdsim/tridiagonal.hpp"

namespace qdsim {

void DriftDiffusionOptions::validate() const {
    poisson.validate();
    if (!(gummel_tolerance > 0.0)) throw DomainError("gummel tolerance must be positive");
    if (max_gummel_iterations < 1) throw DomainError("max_gummel_iterations must be >= 1");
    if (!(generation_rate >= 0.0)) throw DomainError("generation rate must be non-negative");
}

namespace {

// Extended precision keeps the Slotboom flux differences accurate when the
// net current is many orders below the drift and diffusion components.
using Real = long double;

enum class Carrier { Electron, Hole };

// log of the carrier density prefactor: n = exp(w + ef/kT), p = exp(w - ef/kT).
// Degeneracy enters through log(F(eta)/exp(eta)), lagged on the current ef.
Real log_prefactor(const ElementMaterial& m, double phi, double ef, double vt, Carrier c,
                   CarrierStatistics stats) {
    const double ec = m.Ec_ref - phi;
    if (c == Carrier::Electron) {
        const double eta = (ef - ec) / vt;
        const double log_gamma = stats == CarrierStatistics::FermiDirac ? log_fermi_half(eta) - eta : 0.0;
        return static_cast<Real>(std::log(m.Nc) + log_gamma - ec / vt);
    }
    const double ev = ec - m.Eg;
    const double eta = (ev - ef) / vt;
    const double log_gamma = stats == CarrierStatistics::FermiDirac ? log_fermi_half(eta) - eta : 0.0;
    return static_cast<Real>(std::log(m.Nv) + log_gamma + ev / vt);
}

struct ContinuitySystem {
    std::vector<Real> slotboom;     // X per node
    std::vector<Real> conductance;  // mu * vt * g / h per element (cm^-2 s^-1 per unit X)
};

struct State {
    std::vector<double> phi, efn, efp;
};

// Solves div(mu vt g grad X) = R - G for one carrier with the other frozen.
ContinuitySystem solve_continuity(const DeviceModel& model, const State& s, Carrier c,
                                  const DriftDiffusionOptions& opts, const std::vector<char>& generating,
                                  Real x_bottom, Real x_top) {
    const std::size_t n = model.size();
    const double vt = model.thermal_voltage();
    const auto stats = opts.poisson.statistics;
    const Carrier other = c == Carrier::Electron ? Carrier::Hole : Carrier::Electron;
    const auto& own_ef = c == Carrier::Electron ? s.efn : s.efp;
    const auto& other_ef = c == Carrier::Electron ? s.efp : s.efn;
    // Slotboom variable of the other carrier: exp(+efn/kT) or exp(-efp/kT).
    auto other_x = [&](std::size_t i) {
        return other == Carrier::Electron ? std::exp(static_cast<Real>(other_ef[i] / vt))
                                          : std::exp(static_cast<Real>(-other_ef[i] / vt));
    };

    ContinuitySystem sys;
    sys.conductance.resize(model.mesh().elements());
    std::vector<Real> x_old(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Real arg = static_cast<Real>(own_ef[i] / vt);
        x_old[i] = std::exp(c == Carrier::Electron ? arg : -arg);
    }

    // Newton-like defect correction around the current iterate. The defect is
    // assembled from fluxes and (X X_other - 1) directly so an equilibrium
    // state gives exactly zero rather than rounding of the conductances.
    std::vector<Real> lower(n, 0), diag(n, 0), upper(n, 0), defect(n, 0), rhs(n, 0);
    for (std::size_t e = 0; e + 1 < n; ++e) {
        const ElementMaterial& m = model.element(e);
        const Real w0 = log_prefactor(m, s.phi[e], own_ef[e], vt, c, stats);
        const Real w1 = log_prefactor(m, s.phi[e + 1], own_ef[e + 1], vt, c, stats);
        const Real g = std::exp(w0) * bernoulli<Real>(-(w1 - w0));
        const double mu = c == Carrier::Electron ? m.mu_n : m.mu_p;
        const Real k = static_cast<Real>(mu * vt / model.h_cm(e)) * g;
        sys.conductance[e] = k;
        diag[e] += k;
        upper[e] -= k;
        diag[e + 1] += k;
        lower[e + 1] -= k;
        const Real flux = k * (x_old[e + 1] - x_old[e]);
        defect[e] += flux;
        defect[e + 1] -= flux;

        // Half-cell sources: radiative recombination B (np - n_eq p_eq), linear in
        // the unknown with the other carrier frozen, and uniform generation.
        for (std::size_t node : {e, e + 1}) {
            const Real half = static_cast<Real>(0.5 * model.h_cm(e));
            if (opts.radiative_recombination && m.radiative_B > 0.0) {
                const Real wn = log_prefactor(m, s.phi[node], s.efn[node], vt, Carrier::Electron, stats);
                const Real wp = log_prefactor(m, s.phi[node], s.efp[node], vt, Carrier::Hole, stats);
                const Real b = half * static_cast<Real>(m.radiative_B) * std::exp(wn + wp);
                const Real xo = other_x(node);
                diag[node] += b * xo;
                defect[node] -= b * (x_old[node] * xo - 1);
                rhs[node] += b;
            }
            if (generating[e]) {
                defect[node] += half * static_cast<Real>(opts.generation_rate);
                rhs[node] += half * static_cast<Real>(opts.generation_rate);
            }
        }
    }
    // Dirichlet contacts.
    diag[0] = 1;
    upper[0] = 0;
    defect[0] = x_bottom - x_old[0];
    diag[n - 1] = 1;
    lower[n - 1] = 0;
    defect[n - 1] = x_top - x_old[n - 1];

    const std::vector<Real> delta = solve_tridiagonal(lower, diag, upper, defect);
    sys.slotboom.resize(n);
    bool small = true;
    for (std::size_t i = 0; i < n; ++i) {
        sys.slotboom[i] = x_old[i] + delta[i];
        if (!(std::abs(delta[i]) < 0.5L * x_old[i])) small = false;
    }
    if (small) return sys;

    // Far from the solution the correction carries absolute rounding of the
    // largest X into the smallest; the direct M-matrix solve keeps positivity.
    rhs.front() = x_bottom;
    rhs.back() = x_top;
    sys.slotboom = solve_tridiagonal(lower, diag, upper, rhs);
    return sys;
}

// Element particle-flux based current densities in A/cm^2 along +x.
std::vector<double> element_currents(const ContinuitySystem& sys, Carrier c) {
    std::vector<double> j(sys.conductance.size());
    const Real q = static_cast<Real>(constants::elementary_charge);
    const Real sign = c == Carrier::Electron ? 1 : -1;
    for (std::size_t e = 0; e < j.size(); ++e) {
        j[e] = static_cast<double>(sign * q * sys.conductance[e] * (sys.slotboom[e + 1] - sys.slotboom[e]));
    }
    return j;
}

std::vector<char> generation_mask(const LayerStack& stack, const Mesh1D& mesh) {
    const double x0 = stack.intrinsic_start();
    const double x1 = stack.intrinsic_end();
    std::vector<char> mask(mesh.elements(), 0);
    for (std::size_t e = 0; e < mesh.elements(); ++e) {
        const double mid = 0.5 * (mesh.nodes[e] + mesh.nodes[e + 1]);
        mask[e] = (mid > x0 && mid < x1) ? 1 : 0;
    }
    return mask;
}

double continuity_error(const std::vector<double>& j) {
    if (j.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : j) mean += v;
    mean /= static_cast<double>(j.size());
    double worst = 0.0;
    for (std::size_t e = 1; e < j.size(); ++e) worst = std::max(worst, std::abs(j[e] - j[e - 1]));
    return mean == 0.0 ? (worst == 0.0 ? 0.0 : INFINITY) : worst / std::abs(mean);
}

}  // namespace

DriftDiffusionResult solve_drift_diffusion(const LayerStack& stack, const Mesh1D& mesh, double bias,
                                           const DriftDiffusionOptions& opts,
                                           const DriftDiffusionResult* warm_start) {
    opts.validate();
    const DeviceModel model(stack, mesh);
    const std::size_t n = model.size();
    const double vt = model.thermal_voltage();
    const auto stats = opts.poisson.statistics;

    State s;
    if (warm_start) {
        if (warm_start->diagram.phi.size() != n) throw ConsistencyError("warm start mesh mismatch");
        const double dv = bias - warm_start->diagram.bias;
        const double x0 = stack.intrinsic_start(), x1 = stack.intrinsic_end();
        s.phi = warm_start->diagram.phi;
        s.efn = warm_start->diagram.efn;
        s.efp = warm_start->diagram.efp;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = mesh.nodes[i];
            const double r = x1 > x0 ? std::clamp((x - x0) / (x1 - x0), 0.0, 1.0) : (x > x0 ? 1.0 : 0.0);
            s.phi[i] += dv * r;
            s.efn[i] -= dv * r;
            s.efp[i] -= dv * r;
        }
    } else {
        BandDiagram start = solve_bias(stack, mesh, bias, opts.poisson);
        s.phi = start.phi;
        s.efn = start.efn;
        s.efp = start.efp;
    }
    const auto [phi_bottom, phi_top] = contact_potentials(model, bias, stats);
    s.phi.front() = phi_bottom;
    s.phi.back() = phi_top;
    s.efn.front() = s.efp.front() = 0.0;
    s.efn.back() = s.efp.back() = -bias;

    const Real xn_bottom = 1, xn_top = std::exp(static_cast<Real>(-bias / vt));
    const Real xp_bottom = 1, xp_top = std::exp(static_cast<Real>(bias / vt));
    const auto generating = generation_mask(stack, mesh);

    DriftDiffusionResult result;
    PoissonSolution poisson;
    bool converged = false;
    int iterations = 0;
    for (int it = 1; it <= opts.max_gummel_iterations; ++it) {
        iterations = it;
        double update = 0.0;
        const auto electrons = solve_continuity(model, s, Carrier::Electron, opts, generating, xn_bottom, xn_top);
        for (std::size_t i = 0; i < n; ++i) {
            const double ef = static_cast<double>(static_cast<Real>(vt) * std::log(electrons.slotboom[i]));
            update = std::max(update, std::abs(ef - s.efn[i]) / vt);
            s.efn[i] = ef;
        }
        const auto holes = solve_continuity(model, s, Carrier::Hole, opts, generating, xp_bottom, xp_top);
        for (std::size_t i = 0; i < n; ++i) {
            const double ef = static_cast<double>(-static_cast<Real>(vt) * std::log(holes.slotboom[i]));
            update = std::max(update, std::abs(ef - s.efp[i]) / vt);
            s.efp[i] = ef;
        }
        poisson = solve_poisson(model, s.phi, s.efn, s.efp, opts.poisson);
        double dphi = 0.0;
        for (std::size_t i = 0; i < n; ++i) dphi = std::max(dphi, std::abs(poisson.phi[i] - s.phi[i]) / vt);
        s.phi = poisson.phi;
        result.gummel_trace.push_back(std::max(update, dphi));
        if (!poisson.converged || !std::isfinite(update)) break;
        if (update < opts.gummel_tolerance && dphi < opts.gummel_tolerance) {
            converged = true;
            break;
        }
    }

    // Final continuity solves on the converged potential give a current that
    // satisfies the discrete conservation law to solver precision.
    const auto electrons = solve_continuity(model, s, Carrier::Electron, opts, generating, xn_bottom, xn_top);
    const auto holes = solve_continuity(model, s, Carrier::Hole, opts, generating, xp_bottom, xp_top);
    result.electron_current = element_currents(electrons, Carrier::Electron);
    result.hole_current = element_currents(holes, Carrier::Hole);
    result.element_current.resize(result.electron_current.size());
    for (std::size_t e = 0; e < result.element_current.size(); ++e) {
        result.element_current[e] = result.electron_current[e] + result.hole_current[e];
    }

    result.diagram = make_band_diagram(model, poisson, s.efn, s.efp, bias, stats);
    result.diagram.converged = converged;
    result.diagram.iterations = iterations;

    double mean = 0.0;
    for (double j : result.element_current) mean += j;
    mean /= static_cast<double>(std::max<std::size_t>(1, result.element_current.size()));
    result.point.bias = bias;
    // Conventional current flowing from the top contact to the bottom contact.
    result.point.current_density = -mean;
    result.point.gummel_iterations = iterations;
    result.point.converged = converged;
    result.point.continuity_error = continuity_error(result.element_current);

    if (!converged) {
        throw ConvergenceError(fmt::format("Gummel iteration did not converge at {:.4f} V after {} iterations "
                                           "(last update {:.3e} kT)",
                                           bias, iterations,
                                           result.gummel_trace.empty() ? NAN : result.gummel_trace.back()),
                               result.gummel_trace);
    }
    return result;
}

IVCurve iv_sweep(const LayerStack& stack, const Mesh1D& mesh, const std::vector<double>& biases,
                 const DriftDiffusionOptions& opts, double device_area_cm2) {
    IVCurve curve;
    curve.device_area_cm2 = device_area_cm2;
    curve.temperature_K = stack.temperature_K;
    std::optional<DriftDiffusionResult> last;
    for (double v : biases) {
        if (!std::isfinite(v)) throw DomainError("iv_sweep: biases must be finite");
        try {
            DriftDiffusionResult r = solve_drift_diffusion(stack, mesh, v, opts, last ? &*last : nullptr);
            curve.points.push_back(r.point);
            last = std::move(r);
        } catch (const ConvergenceError& e) {
            IVPoint p;
            p.bias = v;
            p.converged = false;
            p.current_density = NAN;
            p.gummel_iterations = static_cast<int>(e.history().size());
            curve.points.push_back(p);
        }
    }
    return curve;
}

IVCurve iv_sweep_outward(const LayerStack& stack, const Mesh1D& mesh, std::vector<double> biases,
                         const DriftDiffusionOptions& opts, double device_area_cm2) {
    std::sort(biases.begin(), biases.end());
    const auto split = std::lower_bound(biases.begin(), biases.end(), 0.0);
    std::vector<double> up(split, biases.end());
    std::vector<double> down(biases.begin(), split);
    std::reverse(down.begin(), down.end());
    IVCurve lower = iv_sweep(stack, mesh, down, opts, device_area_cm2);
    IVCurve upper = iv_sweep(stack, mesh, up, opts, device_area_cm2);
    IVCurve out;
    out.device_area_cm2 = device_area_cm2;
    out.temperature_K = stack.temperature_K;
    out.points.assign(lower.points.rbegin(), lower.points.rend());
    out.points.insert(out.points.end(), upper.points.begin(), upper.points.end());
    return out;
}

void write_iv_csv(std::ostream& out, const IVCurve& curve) {
    fmt::print(out, "# qdsim IV curve\n");
    fmt::print(out, "# temperature_K = {:.3f}\n", curve.temperature_K);
    fmt::print(out, "# device_area_cm2 = {:.6e}\n", curve.device_area_cm2);
    fmt::print(out, "bias_V,J_Acm2,I_A,abs_I_A,converged,gummel_iterations\n");
    for (const auto& p : curve.points) {
        const double current = p.current_density * curve.device_area_cm2;
        fmt::print(out, "{:.6f},{:.9e},{:.9e},{:.9e},{},{}\n", p.bias, p.current_density, current, std::abs(current),
                   p.converged ? 1 : 0, p.gummel_iterations);
    }
}

}  // namespace qdsim
