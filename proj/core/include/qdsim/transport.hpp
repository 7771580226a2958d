#pragma once

#include <iosfwd>
#include <vector>

#include "qdsim/electrostatics.hpp"

namespace qdsim {

struct DriftDiffusionOptions {
    SolverOptions poisson;
    double gummel_tolerance = 1e-9;  // max quasi-Fermi update per iteration, units of kT
    int max_gummel_iterations = 2000;
    /// Uniform optical generation in the intrinsic region, cm^-3 s^-1.
    double generation_rate = 0.0;
    bool radiative_recombination = true;

    void validate() const;
};

struct IVPoint {
    double bias = 0.0;             // V
    double current_density = 0.0;  // A/cm^2, positive for V > 0 in a symmetric device
    int gummel_iterations = 0;
    bool converged = false;
    /// max_i |J_{i+1/2} - J_{i-1/2}| / |J| over interior nodes.
    double continuity_error = 0.0;
};

struct IVCurve {
    std::vector<IVPoint> points;
    double device_area_cm2 = 0.0;
    double temperature_K = 0.0;
};

/// Mesa area of the reference device, 0.14 mm^2.
inline constexpr double kReferenceMesaArea_cm2 = 0.14e-2;

struct DriftDiffusionResult {
    BandDiagram diagram;
    IVPoint point;
    /// Total conduction current density J_x per element (A/cm^2, +x direction),
    /// and its electron / hole parts.
    std::vector<double> element_current;
    std::vector<double> electron_current;
    std::vector<double> hole_current;
    /// Max quasi-Fermi update (kT units) per Gummel iteration.
    std::vector<double> gummel_trace;
};

/// Gummel iteration: nonlinear Poisson with frozen quasi-Fermi levels,
/// then electron and hole continuity with Scharfetter-Gummel fluxes
/// written in Slotboom variables. Starts from `warm_start` when given
/// (continuation), otherwise from solve_bias at the same voltage.
/// Throws ConvergenceError (history = gummel trace) when the iteration
/// fails to reach the tolerance.
DriftDiffusionResult solve_drift_diffusion(const LayerStack& stack, const Mesh1D& mesh, double bias,
                                           const DriftDiffusionOptions& opts = {},
                                           const DriftDiffusionResult* warm_start = nullptr);

/// Sequential sweep with warm-start continuation in the given order.
/// Non-converged points are kept with converged = false; the next point
/// restarts from the last converged solution.
IVCurve iv_sweep(const LayerStack& stack, const Mesh1D& mesh, const std::vector<double>& biases,
                 const DriftDiffusionOptions& opts = {}, double device_area_cm2 = kReferenceMesaArea_cm2);

/// Same points, swept outward from the one nearest 0 V in each direction so
/// every warm start is a small step. Returned in ascending bias order.
IVCurve iv_sweep_outward(const LayerStack& stack, const Mesh1D& mesh, std::vector<double> biases,
                         const DriftDiffusionOptions& opts = {}, double device_area_cm2 = kReferenceMesaArea_cm2);

/// CSV: header comments, then bias_V,J_Acm2,I_A,abs_I_A,converged,gummel_iterations.
void write_iv_csv(std::ostream& out, const IVCurve& curve);

}  // namespace qdsim
