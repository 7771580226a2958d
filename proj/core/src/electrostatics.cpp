#include "qdsim/electrostatics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/materials.hpp"
#include "qdsim/tridiagonal.hpp"

namespace qdsim {

void SolverOptions::validate() const {
    if (!(tolerance > 0.0)) throw DomainError("solver tolerance must be positive");
    if (max_iterations < 1) throw DomainError("solver max_iterations must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw DomainError("solver damping must lie in (0, 1]");
    if (!(max_bias_step > 0.0)) throw DomainError("continuation step must be positive");
}

namespace {

struct Linearization {
    std::vector<double> lower, diag, upper, residual;
    double scaled_norm = 0.0;  // max |R_i / J_ii| / vt over interior nodes
    double merit = 0.0;        // sum R_i^2
};

Linearization linearize(const DeviceModel& model, const std::vector<double>& phi, const std::vector<double>& efn,
                        const std::vector<double>& efp, CarrierStatistics stats) {
    const std::size_t n = model.size();
    Linearization lin;
    lin.lower.assign(n, 0.0);
    lin.diag.assign(n, 1.0);
    lin.upper.assign(n, 0.0);
    lin.residual.assign(n, 0.0);
    const double vt = model.thermal_voltage();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double cl = model.element(i - 1).eps_r / model.h_cm(i - 1);
        const double cr = model.element(i).eps_r / model.h_cm(i);
        const auto q = model.node_charge(i, phi[i], efn[i], efp[i], stats);
        lin.residual[i] = cr * (phi[i + 1] - phi[i]) - cl * (phi[i] - phi[i - 1]) + q.value;
        lin.lower[i] = cl;
        lin.upper[i] = cr;
        lin.diag[i] = -cl - cr + q.derivative;
        lin.scaled_norm = std::max(lin.scaled_norm, std::abs(lin.residual[i] / lin.diag[i]) / vt);
        lin.merit += lin.residual[i] * lin.residual[i];
    }
    return lin;
}

}  // namespace

PoissonSolution solve_poisson(const DeviceModel& model, std::vector<double> phi, const std::vector<double>& efn,
                              const std::vector<double>& efp, const SolverOptions& opts) {
    opts.validate();
    const std::size_t n = model.size();
    if (phi.size() != n || efn.size() != n || efp.size() != n) {
        throw ConsistencyError("solve_poisson: array sizes do not match the mesh");
    }
    const double vt = model.thermal_voltage();
    PoissonSolution sol;

    Linearization lin = linearize(model, phi, efn, efp, opts.statistics);
    sol.history.push_back(lin.scaled_norm);
    for (int it = 1; it <= opts.max_iterations; ++it) {
        std::vector<double> rhs(n);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = -lin.residual[i];
        std::vector<double> delta = solve_tridiagonal(lin.lower, lin.diag, lin.upper, rhs);

        // Logarithmic cap on the largest component, applied as a uniform scale so
        // the step stays a descent direction for the residual norm.
        double max_update = 0.0;
        for (double d : delta) max_update = std::max(max_update, std::abs(d));
        if (max_update > 0.0) {
            const double scale = vt * std::log1p(max_update / vt) / max_update;
            for (double& d : delta) d *= scale;
            max_update *= scale;
        }

        double t = opts.damping;
        std::vector<double> trial(n);
        Linearization next;
        bool accepted = false;
        for (int halving = 0; halving <= 40; ++halving) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = phi[i] + t * delta[i];
            next = linearize(model, trial, efn, efp, opts.statistics);
            if (next.merit <= lin.merit || next.scaled_norm <= lin.scaled_norm) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            sol.iterations = it;
            break;
        }
        phi.swap(trial);
        lin = std::move(next);
        sol.history.push_back(lin.scaled_norm);
        sol.iterations = it;
        if (!std::isfinite(lin.scaled_norm)) break;
        if (t * max_update / vt < opts.tolerance && lin.scaled_norm < opts.tolerance) {
            sol.converged = true;
            break;
        }
    }
    sol.residual_norm = lin.scaled_norm;
    sol.phi = std::move(phi);
    return sol;
}

BandDiagram make_band_diagram(const DeviceModel& model, const PoissonSolution& sol, const std::vector<double>& efn,
                              const std::vector<double>& efp, double bias, CarrierStatistics stats) {
    const std::size_t n = model.size();
    const Mesh1D& mesh = model.mesh();
    BandDiagram d;
    d.mesh = mesh;
    d.phi = sol.phi;
    d.efn = efn;
    d.efp = efp;
    d.bias = bias;
    d.temperature_K = model.temperature();
    d.converged = sol.converged;
    d.residual_norm = sol.residual_norm;
    d.iterations = sol.iterations;
    d.residual_history = sol.history;
    d.Ec.resize(n);
    d.Ev.resize(n);
    d.n.resize(n);
    d.p.resize(n);
    d.field.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ElementMaterial& m = model.node_material(i);
        d.Ec[i] = m.Ec_ref - sol.phi[i];
        d.Ev[i] = d.Ec[i] - m.Eg;
        d.n[i] = model.electron_density(m, sol.phi[i], efn[i], stats);
        d.p[i] = model.hole_density(m, sol.phi[i], efp[i], stats);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = i == 0 ? 0 : i - 1;
        const std::size_t b = i + 1 == n ? n - 1 : i + 1;
        d.field[i] = -(sol.phi[b] - sol.phi[a]) / ((mesh.nodes[b] - mesh.nodes[a]) * constants::nm_to_cm);
    }
    return d;
}

double quasi_fermi_split_position(const LayerStack& stack) {
    const double mid = 0.5 * (stack.intrinsic_start() + stack.intrinsic_end());
    const auto ifaces = stack.interface_positions();
    if (ifaces.empty()) return mid;
    double best = ifaces.front();
    for (double x : ifaces) {
        if (std::abs(x - mid) < std::abs(best - mid)) best = x;
    }
    return best;
}

std::vector<double> split_quasi_fermi(const LayerStack& stack, const Mesh1D& mesh, double bias) {
    const double split = quasi_fermi_split_position(stack);
    std::vector<double> ef(mesh.size());
    for (std::size_t i = 0; i < mesh.size(); ++i) ef[i] = mesh.nodes[i] <= split ? 0.0 : -bias;
    return ef;
}

std::pair<double, double> contact_potentials(const DeviceModel& model, double bias, CarrierStatistics stats) {
    const std::size_t last = model.size() - 1;
    const double bottom = model.neutral_potential(0, 0.0, 0.0, stats);
    const double top = model.neutral_potential(last, 0.0, 0.0, stats);
    return {bottom, top + bias};
}

namespace {

void check_bias(double bias) {
    if (!std::isfinite(bias) || std::abs(bias) > 5.0) {
        throw DomainError("applied bias must be finite with |V| <= 5 V");
    }
}

}  // namespace

BandDiagram solve_equilibrium(const LayerStack& stack, const Mesh1D& mesh, const SolverOptions& opts) {
    opts.validate();
    const DeviceModel model(stack, mesh);
    const std::size_t n = model.size();
    const std::vector<double> zero(n, 0.0);
    std::vector<double> phi(n);
    for (std::size_t i = 0; i < n; ++i) phi[i] = model.neutral_potential(i, 0.0, 0.0, opts.statistics);
    const auto [bottom, top] = contact_potentials(model, 0.0, opts.statistics);
    phi.front() = bottom;
    phi.back() = top;
    PoissonSolution sol = solve_poisson(model, std::move(phi), zero, zero, opts);
    if (!sol.converged) {
        throw ConvergenceError(fmt::format("equilibrium Poisson solve did not converge in {} iterations "
                                           "(scaled residual {:.3e})",
                                           sol.iterations, sol.residual_norm),
                               sol.history);
    }
    return make_band_diagram(model, sol, zero, zero, 0.0, opts.statistics);
}

BandDiagram solve_bias(const LayerStack& stack, const Mesh1D& mesh, double bias, const SolverOptions& opts,
                       const BandDiagram* start) {
    check_bias(bias);
    opts.validate();
    BandDiagram current = start ? *start : solve_equilibrium(stack, mesh, opts);
    if (current.phi.size() != mesh.size()) throw ConsistencyError("solve_bias: start diagram mesh mismatch");
    if (current.bias == bias) return current;

    const DeviceModel model(stack, mesh);
    const std::size_t n = model.size();
    const double x0 = stack.intrinsic_start();
    const double x1 = stack.intrinsic_end();
    auto ramp = [&](double x) {
        if (x1 <= x0) return x > x0 ? 1.0 : 0.0;
        return std::clamp((x - x0) / (x1 - x0), 0.0, 1.0);
    };
    const auto [bottom0, top0] = contact_potentials(model, 0.0, opts.statistics);

    double step = opts.max_bias_step;
    std::vector<double> history;
    while (current.bias != bias) {
        const double remaining = bias - current.bias;
        const double v_try = std::abs(remaining) <= step ? bias : current.bias + std::copysign(step, remaining);
        const double dv = v_try - current.bias;
        std::vector<double> phi(n);
        for (std::size_t i = 0; i < n; ++i) phi[i] = current.phi[i] + dv * ramp(mesh.nodes[i]);
        phi.front() = bottom0;
        phi.back() = top0 + v_try;
        const auto ef = split_quasi_fermi(stack, mesh, v_try);
        PoissonSolution sol = solve_poisson(model, std::move(phi), ef, ef, opts);
        history.push_back(sol.residual_norm);
        if (sol.converged) {
            current = make_band_diagram(model, sol, ef, ef, v_try, opts.statistics);
            step = std::min(opts.max_bias_step, step * 1.5);
        } else {
            step *= 0.5;
            if (step < 1e-4) {
                throw ConvergenceError(fmt::format("bias continuation failed near {:.4f} V; last converged at "
                                                   "{:.4f} V",
                                                   v_try, current.bias),
                                       history, current.bias);
            }
        }
    }
    return current;
}

double field_lever_arm(double bias_V, double intrinsic_thickness_nm) {
    if (!(intrinsic_thickness_nm > 0.0)) throw DomainError("intrinsic thickness must be positive");
    // V/nm -> kV/cm
    return bias_V / intrinsic_thickness_nm * 1e4;
}

ChargeBalance charge_balance(const DeviceModel& model, const BandDiagram& d, CarrierStatistics stats) {
    const std::size_t n = model.size();
    ChargeBalance cb;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double q = model.node_charge(i, d.phi[i], d.efn[i], d.efp[i], stats).value;
        cb.enclosed_charge += q;
        cb.charge_scale += std::abs(q);
    }
    const std::size_t last = n - 2;
    const double d_right = -model.element(last).eps_r * (d.phi[n - 1] - d.phi[n - 2]) / model.h_cm(last);
    const double d_left = -model.element(0).eps_r * (d.phi[1] - d.phi[0]) / model.h_cm(0);
    cb.boundary_flux = d_right - d_left;
    return cb;
}

double potential_drop(const BandDiagram& d, double x0, double x1) {
    auto interp = [&](double x) {
        const auto& xs = d.mesh.nodes;
        if (x <= xs.front()) return d.phi.front();
        if (x >= xs.back()) return d.phi.back();
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
        const double w = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
        return (1.0 - w) * d.phi[hi - 1] + w * d.phi[hi];
    };
    return interp(x1) - interp(x0);
}

double mean_field(const BandDiagram& d, double x0, double x1) {
    return -potential_drop(d, x0, x1) / ((x1 - x0) * constants::nm_to_cm);
}

std::vector<LayerExtremum> barrier_maxima(const LayerStack& stack, const BandDiagram& d) {
    const auto& db = MaterialDatabase::builtin();
    const double T = stack.temperature_K;
    const double ref = db.lookup(stack.layers.front().material, T).Ec();
    std::vector<LayerExtremum> out;
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        if (!(db.lookup(stack.layers[l].material, T).Ec() > ref)) continue;
        LayerExtremum ext;
        ext.layer = l;
        ext.Ec_max = -std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < d.mesh.elements(); ++e) {
            if (d.mesh.element_layer[e] != l) continue;
            for (std::size_t i : {e, e + 1}) {
                if (d.Ec[i] > ext.Ec_max) {
                    ext.Ec_max = d.Ec[i];
                    ext.position_nm = d.mesh.nodes[i];
                }
            }
        }
        out.push_back(ext);
    }
    return out;
}

void write_band_csv(std::ostream& out, const BandDiagram& d) {
    fmt::print(out, "# qdsim band diagram\n");
    fmt::print(out, "# bias_V = {:.6f}\n", d.bias);
    fmt::print(out, "# temperature_K = {:.3f}\n", d.temperature_K);
    fmt::print(out, "# converged = {}\n", d.converged ? "true" : "false");
    fmt::print(out, "# residual_norm = {:.3e}\n", d.residual_norm);
    fmt::print(out, "# iterations = {}\n", d.iterations);
    fmt::print(out, "position_nm,Ec_eV,Ev_eV,phi_V,n_cm3,p_cm3,F_Vcm\n");
    for (std::size_t i = 0; i < d.mesh.size(); ++i) {
        fmt::print(out, "{:.6f},{:.12e},{:.12e},{:.12e},{:.9e},{:.9e},{:.9e}\n", d.mesh.nodes[i], d.Ec[i], d.Ev[i],
                   d.phi[i], d.n[i], d.p[i], d.field[i]);
    }
}

}  // namespace qdsim
