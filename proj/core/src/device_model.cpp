#include "qdsim/device_model.hpp"

#include <algorithm>
#include <cmath>

#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/fermi.hpp"
#include "qdsim/materials.hpp"

namespace qdsim {

namespace {

double occupancy(double eta, CarrierStatistics stats) {
    return stats == CarrierStatistics::FermiDirac ? fermi_half(eta) : std::exp(eta);
}

double occupancy_derivative(double eta, CarrierStatistics stats) {
    return stats == CarrierStatistics::FermiDirac ? fermi_half_derivative(eta) : std::exp(eta);
}

ElementMaterial make_material(const MaterialDatabase& db, const Layer& layer, double T) {
    const MaterialParams mp = db.lookup(layer.material, T);
    ElementMaterial m;
    m.Ec_ref = mp.Ec();
    m.Eg = mp.Eg;
    m.Nc = mp.Nc();
    m.Nv = mp.Nv();
    m.eps_r = mp.eps_r;
    m.donors = layer.donor_density;
    m.acceptors = layer.acceptor_density;
    const double total = layer.donor_density + layer.acceptor_density;
    m.mu_n = mobility(mp.electron_mobility, total, T);
    m.mu_p = mobility(mp.hole_mobility, total, T);
    m.radiative_B = mp.radiative_B;
    return m;
}

}  // namespace

DeviceModel::DeviceModel(const LayerStack& stack, const Mesh1D& mesh) : stack_(stack), mesh_(mesh) {
    if (!(stack.temperature_K > 0.0)) throw DomainError("device temperature must be positive");
    // doping_profile performs the mesh/stack consistency checks.
    (void)doping_profile(stack, mesh);
    vt_ = constants::thermal_voltage(stack.temperature_K);

    const auto& db = MaterialDatabase::builtin();
    std::vector<ElementMaterial> per_layer;
    per_layer.reserve(stack.layers.size());
    for (const auto& l : stack.layers) per_layer.push_back(make_material(db, l, stack.temperature_K));

    elements_.reserve(mesh.elements());
    h_cm_.reserve(mesh.elements());
    for (std::size_t e = 0; e < mesh.elements(); ++e) {
        elements_.push_back(per_layer[mesh.element_layer[e]]);
        h_cm_.push_back(mesh.spacing(e) * constants::nm_to_cm);
    }
    node_materials_.reserve(mesh.size());
    for (std::size_t i = 0; i < mesh.size(); ++i) node_materials_.push_back(per_layer[mesh.node_layer[i]]);
}

double DeviceModel::electron_density(const ElementMaterial& m, double phi, double efn,
                                     CarrierStatistics stats) const {
    return m.Nc * occupancy((efn - m.Ec_ref + phi) / vt_, stats);
}

double DeviceModel::hole_density(const ElementMaterial& m, double phi, double efp,
                                 CarrierStatistics stats) const {
    return m.Nv * occupancy((m.Ec_ref - m.Eg - phi - efp) / vt_, stats);
}

DeviceModel::Charge DeviceModel::node_charge(std::size_t i, double phi, double efn, double efp,
                                             CarrierStatistics stats) const {
    const double scale = constants::elementary_charge / constants::vacuum_permittivity_cm;
    Charge q{0.0, 0.0};
    auto add = [&](std::size_t e) {
        const ElementMaterial& m = elements_[e];
        const double half = 0.5 * h_cm_[e];
        const double eta_n = (efn - m.Ec_ref + phi) / vt_;
        const double eta_p = (m.Ec_ref - m.Eg - phi - efp) / vt_;
        const double n = m.Nc * occupancy(eta_n, stats);
        const double p = m.Nv * occupancy(eta_p, stats);
        const double dn = m.Nc * occupancy_derivative(eta_n, stats) / vt_;
        const double dp = -m.Nv * occupancy_derivative(eta_p, stats) / vt_;
        q.value += half * scale * (p - n + m.donors - m.acceptors);
        q.derivative += half * scale * (dp - dn);
    };
    if (i > 0) add(i - 1);
    if (i + 1 < mesh_.size()) add(i);
    return q;
}

double DeviceModel::neutral_potential(std::size_t i, double efn, double efp, CarrierStatistics stats) const {
    // node_charge is strictly decreasing in phi; bracket then use safeguarded Newton.
    const ElementMaterial& m = node_materials_[i];
    double guess = m.Ec_ref - efn;
    double lo = guess - 0.5, hi = guess + 0.5;
    for (int k = 0; node_charge(i, lo, efn, efp, stats).value < 0.0; ++k) {
        lo -= 1.0;
        if (k > 100) throw ConvergenceError("neutral_potential: cannot bracket root", {});
    }
    for (int k = 0; node_charge(i, hi, efn, efp, stats).value > 0.0; ++k) {
        hi += 1.0;
        if (k > 100) throw ConvergenceError("neutral_potential: cannot bracket root", {});
    }
    double x = std::clamp(guess, lo, hi);
    for (int it = 0; it < 400; ++it) {
        const Charge q = node_charge(i, x, efn, efp, stats);
        if (q.value == 0.0) return x;
        if (q.value > 0.0) lo = x; else hi = x;
        double next = x - q.value / q.derivative;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) < 1e-15 * std::max(1.0, std::abs(x)) || hi - lo < 1e-15) return next;
        x = next;
    }
    return x;
}

}  // namespace qdsim
