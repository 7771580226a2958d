#pragma once

#include <iosfwd>
#include <vector>

#include "qdsim/device.hpp"
#include "qdsim/device_model.hpp"

namespace qdsim {

struct SolverOptions {
    double tolerance = 1e-10;  // max Newton update in units of kT/q
    int max_iterations = 200;
    double damping = 1.0;      // initial Newton step fraction, (0, 1]
    CarrierStatistics statistics = CarrierStatistics::FermiDirac;
    double max_bias_step = 0.1;  // V, continuation step

    void validate() const;
};

struct BandDiagram {
    Mesh1D mesh;
    std::vector<double> phi;    // V
    std::vector<double> Ec;     // eV
    std::vector<double> Ev;     // eV
    std::vector<double> n;      // cm^-3
    std::vector<double> p;      // cm^-3
    std::vector<double> field;  // V/cm
    std::vector<double> efn;    // eV, electron quasi-Fermi level
    std::vector<double> efp;    // eV, hole quasi-Fermi level
    double bias = 0.0;          // V
    double temperature_K = 0.0;
    bool converged = false;
    double residual_norm = 0.0;
    int iterations = 0;
    std::vector<double> residual_history;
};

/// Result of a single nonlinear Poisson solve with fixed quasi-Fermi levels.
struct PoissonSolution {
    std::vector<double> phi;
    bool converged = false;
    double residual_norm = 0.0;  // Jacobi-scaled residual in units of kT/q
    int iterations = 0;
    std::vector<double> history;
};

/// Solves d/dx(eps dphi/dx) = -q (p - n + N_D - N_A) by damped Newton.
/// `phi` supplies the initial guess and the Dirichlet values at both ends.
/// Never throws on non-convergence; inspect `converged`.
PoissonSolution solve_poisson(const DeviceModel& model, std::vector<double> phi,
                              const std::vector<double>& efn, const std::vector<double>& efp,
                              const SolverOptions& opts);

/// Builds the band diagram (band edges, carriers, field) for a potential.
BandDiagram make_band_diagram(const DeviceModel& model, const PoissonSolution& sol,
                              const std::vector<double>& efn, const std::vector<double>& efp,
                              double bias, CarrierStatistics stats);

/// Equilibrium (zero bias, flat Fermi level at 0 eV). Throws
/// ConvergenceError carrying the residual history on failure.
BandDiagram solve_equilibrium(const LayerStack& stack, const Mesh1D& mesh, const SolverOptions& opts = {});

/// Applied gate voltage V lowers the top-contact Fermi level to -V eV.
/// Carriers on each side of the split position use the quasi-Fermi level of
/// their own contact. Solved by continuation from 0 V (or from `start`).
/// Throws ConvergenceError whose last_converged() is the last good bias.
BandDiagram solve_bias(const LayerStack& stack, const Mesh1D& mesh, double bias, const SolverOptions& opts = {},
                       const BandDiagram* start = nullptr);

/// Position (nm) where the quasi-Fermi level switches from the bottom to the
/// top contact: the layer boundary nearest to the centre of the intrinsic
/// region (lower boundary on ties).
double quasi_fermi_split_position(const LayerStack& stack);

/// Step quasi-Fermi profile used by solve_bias.
std::vector<double> split_quasi_fermi(const LayerStack& stack, const Mesh1D& mesh, double bias);

/// Dirichlet potentials for the two contacts at the given bias.
std::pair<double, double> contact_potentials(const DeviceModel& model, double bias, CarrierStatistics stats);

/// Applied-voltage to field conversion F = V / d_i, in kV/cm.
double field_lever_arm(double bias_V, double intrinsic_thickness_nm);

/// Discrete Gauss law bookkeeping: the electric displacement difference
/// between the two contact faces and the total enclosed charge, both
/// divided by eps0 (V/cm). They cancel at convergence.
struct ChargeBalance {
    double enclosed_charge = 0.0;
    double boundary_flux = 0.0;
    double charge_scale = 0.0;  // sum of |box charge|, for relative checks
};
ChargeBalance charge_balance(const DeviceModel& model, const BandDiagram& diagram, CarrierStatistics stats);

/// Mean field (V/cm) over [x0, x1] from the potential drop.
double mean_field(const BandDiagram& diagram, double x0_nm, double x1_nm);
/// phi(x1) - phi(x0), with linear interpolation between nodes.
double potential_drop(const BandDiagram& diagram, double x0_nm, double x1_nm);

/// Conduction band maximum inside every layer whose material sits above the
/// bottom contact material in Ec.
struct LayerExtremum {
    std::size_t layer = 0;
    double position_nm = 0.0;
    double Ec_max = 0.0;
};
std::vector<LayerExtremum> barrier_maxima(const LayerStack& stack, const BandDiagram& diagram);

/// CSV: header comments, then position_nm,Ec_eV,Ev_eV,phi_V,n_cm3,p_cm3,F_Vcm.
void write_band_csv(std::ostream& out, const BandDiagram& diagram);

}  // namespace qdsim
