#pragma once

#include <cstddef>
#include <vector>

#include "qdsim/device.hpp"

namespace qdsim {

enum class CarrierStatistics { FermiDirac, Boltzmann };

/// Material data of one mesh element, evaluated at the stack temperature.
struct ElementMaterial {
    double Ec_ref = 0.0;  // eV, conduction edge at phi = 0 (database VBO scale)
    double Eg = 0.0;      // eV
    double Nc = 0.0;      // cm^-3
    double Nv = 0.0;
    double eps_r = 1.0;
    double donors = 0.0;     // cm^-3
    double acceptors = 0.0;
    double mu_n = 0.0;  // cm^2/(V s)
    double mu_p = 0.0;
    double radiative_B = 0.0;  // cm^3/s
};

/// Discretized device shared by the Poisson and drift-diffusion solvers.
///
/// Band edges are Ec = Ec_ref - phi and Ev = Ec - Eg, with energies in eV and
/// phi in V. Node i owns the control volume made of the right half of element
/// i-1 and the left half of element i; each half is evaluated with the
/// material of its own element, so carrier densities are two-valued at
/// heterointerface nodes while phi and the quasi-Fermi levels are single
/// valued.
class DeviceModel {
public:
    DeviceModel(const LayerStack& stack, const Mesh1D& mesh);

    const LayerStack& stack() const { return stack_; }
    const Mesh1D& mesh() const { return mesh_; }
    std::size_t size() const { return mesh_.size(); }
    double temperature() const { return stack_.temperature_K; }
    double thermal_voltage() const { return vt_; }

    const ElementMaterial& element(std::size_t e) const { return elements_[e]; }
    /// Material of the layer owning node i (substrate side at interfaces).
    const ElementMaterial& node_material(std::size_t i) const { return node_materials_[i]; }
    /// Element length in cm.
    double h_cm(std::size_t e) const { return h_cm_[e]; }

    double electron_density(const ElementMaterial& m, double phi, double efn,
                            CarrierStatistics stats) const;
    double hole_density(const ElementMaterial& m, double phi, double efp,
                        CarrierStatistics stats) const;

    /// Box-integrated space charge of node i divided by eps0, in V/cm, and its
    /// derivative with respect to phi_i.
    struct Charge {
        double value;
        double derivative;
    };
    Charge node_charge(std::size_t i, double phi, double efn, double efp, CarrierStatistics stats) const;

    /// Potential that makes node i locally charge neutral.
    double neutral_potential(std::size_t i, double efn, double efp, CarrierStatistics stats) const;

private:
    LayerStack stack_;
    Mesh1D mesh_;
    double vt_ = 0.0;
    std::vector<ElementMaterial> elements_;
    std::vector<ElementMaterial> node_materials_;
    std::vector<double> h_cm_;
};

}  // namespace qdsim
