#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "process.hpp"
#include "qdsim/constants.hpp"
#include "qdsim/electrostatics.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/fermi.hpp"
#include "qdsim/materials.hpp"

using namespace qdsim;

namespace {

LayerStack reference() { return load_stack(test::data_path("device_fig1a.json").string()); }

LayerStack slab(double nd, double thickness_nm) {
    LayerStack s;
    s.name = "slab";
    s.layers.push_back({"InP", thickness_nm, nd, 0.0, "slab"});
    return s;
}

LayerStack junction(double n1, double n2, double each_nm) {
    LayerStack s;
    s.name = "junction";
    s.layers.push_back({"InP", each_nm, n1, 0.0, "n+"});
    s.layers.push_back({"InP", each_nm, n2, 0.0, "n"});
    return s;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("fermi_half against adaptive quadrature on [-30, 30]") {
    double worst = 0.0;
    for (int k = 0; k <= 600; ++k) {
        const double eta = -30.0 + 0.1 * k;
        const double ref = test::fermi_half_quadrature(eta);
        worst = std::max(worst, std::abs(fermi_half(eta) - ref) / ref);
    }
    MESSAGE("max relative error " << worst);
    CHECK(worst < 5e-3);
}

TEST_CASE("fermi_half spot values") {
    CHECK(std::abs(fermi_half(-30.0) / std::exp(-30.0) - 1.0) < 1e-3);
    // quadrature oracle at eta = 0 is 0.765147...
    const double q0 = test::fermi_half_quadrature(0.0);
    CHECK(q0 == doctest::Approx(0.7651470).epsilon(1e-6));
    CHECK(std::abs(fermi_half(0.0) / q0 - 1.0) < 5e-3);
    const double q10 = test::fermi_half_quadrature(10.0);
    CHECK(std::abs(fermi_half(10.0) / q10 - 1.0) < 5e-3);
    const double asym = 4.0 / (3.0 * std::sqrt(constants::pi)) * std::pow(10.0, 1.5);
    CHECK(std::abs(q10 / asym - 1.0) < 0.05);
}

TEST_CASE("fermi_half is increasing with a consistent derivative") {
    double last = fermi_half(-40.0);
    for (int k = 1; k <= 8000; ++k) {
        const double eta = -40.0 + 0.01 * k;
        const double f = fermi_half(eta);
        CHECK(f > last);
        last = f;
        if (k % 50 == 0) {
            const double h = 1e-5;
            const double fd = (fermi_half(eta + h) - fermi_half(eta - h)) / (2 * h);
            CHECK(fd > 0.0);
            CHECK(fermi_half_derivative(eta) == doctest::Approx(fd).epsilon(1e-6));
            CHECK(log_fermi_half(eta) == doctest::Approx(std::log(f)).epsilon(1e-12));
            CHECK(inverse_fermi_half(f) == doctest::Approx(eta).epsilon(1e-9));
        }
    }
    CHECK(fermi_half_degeneracy(-60.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("uniform n slab has flat bands") {
    const LayerStack s = slab(1e17, 200.0);
    const Mesh1D m = build_mesh(s);
    const BandDiagram d = solve_equilibrium(s, m);
    REQUIRE(d.converged);
    const auto [lo, hi] = std::minmax_element(d.Ec.begin(), d.Ec.end());
    CHECK(*hi - *lo < 1e-5);
    for (double n : d.n) CHECK(n == doctest::Approx(1e17).epsilon(1e-6));
}

TEST_CASE("n+/n junction built-in potential") {
    const LayerStack s = junction(1e18, 1e16, 1500.0);
    SolverOptions o;
    o.statistics = CarrierStatistics::Boltzmann;
    const Mesh1D m = build_mesh(s);
    const BandDiagram d = solve_equilibrium(s, m, o);
    REQUIRE(d.converged);
    const double vt = constants::thermal_voltage(300.0);
    const double vbi = potential_drop(d, 2900.0, 100.0);
    MESSAGE("built-in " << vbi << " V, analytic " << vt * std::log(100.0));
    CHECK(std::abs(vbi - vt * std::log(100.0)) < 2e-3);
}

TEST_CASE("reference device at equilibrium") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    const SolverOptions o;
    const BandDiagram d = solve_equilibrium(s, m, o);
    REQUIRE(d.converged);
    CHECK(d.residual_norm < o.tolerance);
    CHECK(d.temperature_K == 300.0);

    const auto bars = barrier_maxima(s, d);
    REQUIRE(bars.size() == 2);
    CHECK(bars[0].position_nm > 320.0);
    CHECK(bars[0].position_nm < 390.0 + 1e-9);
    CHECK(bars[1].position_nm > 436.0);
    CHECK(bars[1].position_nm < 506.0 + 1e-9);
    const double qd = d.Ec[m.nearest_node(420.5)];
    CHECK(bars[0].Ec_max > qd);
    CHECK(bars[1].Ec_max > qd);

    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto mat = lookup_material(s.layers[m.node_layer[i]].material, 300.0);
        CHECK(d.Ec[i] - d.Ev[i] == doctest::Approx(mat.Eg).epsilon(1e-12));
    }

    // field is -dphi/dx (V/cm) up to discretisation error
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 1; i + 1 < m.size(); ++i) {
        const double g = -(d.phi[i + 1] - d.phi[i - 1]) / ((m.nodes[i + 1] - m.nodes[i - 1]) * 1e-7);
        worst = std::max(worst, std::abs(g - d.field[i]));
        scale = std::max(scale, std::abs(g));
    }
    CHECK(worst < 0.05 * scale);

    const DeviceModel model(s, m);
    const ChargeBalance cb = charge_balance(model, d, o.statistics);
    // Gauss: net outward displacement equals the enclosed charge
    MESSAGE("enclosed " << cb.enclosed_charge << " flux " << cb.boundary_flux << " scale " << cb.charge_scale);
    CHECK(std::abs(cb.enclosed_charge - cb.boundary_flux) < 1e-8 * cb.charge_scale);
}

TEST_CASE("zero bias equals equilibrium") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    const BandDiagram eq = solve_equilibrium(s, m);
    const BandDiagram b0 = solve_bias(s, m, 0.0);
    CHECK(max_abs_diff(eq.phi, b0.phi) < 1e-12);
    CHECK(max_abs_diff(eq.Ec, b0.Ec) < 1e-12);
}

TEST_CASE("contact potential difference follows the applied bias exactly") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    const BandDiagram eq = solve_equilibrium(s, m);
    const double ref = eq.Ec.back() - eq.Ec.front();
    for (double V : {-0.5, 0.5, 1.0, 1.7}) {
        const BandDiagram d = solve_bias(s, m, V);
        REQUIRE(d.converged);
        // the top contact Fermi level sits at -V, so its band edge drops by V
        CHECK(ref - (d.Ec.back() - d.Ec.front()) == doctest::Approx(V).epsilon(1e-12));
        CHECK(d.efn.front() == 0.0);
        CHECK(d.efn.back() == doctest::Approx(-V).epsilon(1e-15));
    }
}

TEST_CASE("intrinsic potential drop grows with bias") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    double last = -1e300;
    const BandDiagram* prev = nullptr;
    BandDiagram keep;
    for (int k = 0; k <= 10; ++k) {
        const BandDiagram d = solve_bias(s, m, 0.1 * k, {}, prev);
        REQUIRE(d.converged);
        const double drop = potential_drop(d, s.intrinsic_start(), s.intrinsic_end());
        CHECK(drop > last);
        last = drop;
        keep = d;
        prev = &keep;
    }
}

TEST_CASE("mean intrinsic field compared with the lever-arm estimate") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    const BandDiagram d = solve_bias(s, m, 1.2);
    const double solver = mean_field(d, s.intrinsic_start(), s.intrinsic_end()) * 1e-3;
    const double lever = field_lever_arm(1.2, 240.0);
    MESSAGE("solver mean field " << solver << " kV/cm, lever arm " << lever << " kV/cm");
    CHECK(std::abs(solver) / lever > 0.3);
    CHECK(std::abs(solver) / lever < 3.0);
}

TEST_CASE("field lever arm") {
    CHECK(field_lever_arm(1.2, 240.0) == doctest::Approx(50.0).epsilon(1e-14));
    CHECK(field_lever_arm(0.0, 240.0) == 0.0);
    CHECK(field_lever_arm(1.7, 240.0) == doctest::Approx(70.8333333333).epsilon(1e-10));
    CHECK_THROWS_AS((void)field_lever_arm(1.0, 0.0), DomainError);
}

TEST_CASE("quasi-Fermi split sits at the boundary nearest the intrinsic centre") {
    const LayerStack s = reference();
    CHECK(quasi_fermi_split_position(s) == doctest::Approx(420.0));
    const Mesh1D m = build_mesh(s);
    const auto ef = split_quasi_fermi(s, m, 0.8);
    CHECK(ef[m.nearest_node(419.0)] == 0.0);
    CHECK(ef[m.nearest_node(421.0)] == doctest::Approx(-0.8));
}

TEST_CASE("mesh halving changes equilibrium Ec by less than 1 meV") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    const Mesh1D f = refine_mesh(m);
    const BandDiagram a = solve_equilibrium(s, m), b = solve_equilibrium(s, f);
    double worst = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) worst = std::max(worst, std::abs(a.Ec[i] - b.Ec[2 * i]));
    MESSAGE("max |dEc| " << worst * 1e3 << " meV");
    CHECK(worst < 1e-3);
}

TEST_CASE("solver options and non-convergence") {
    SolverOptions bad;
    bad.tolerance = 0.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = {};
    bad.max_iterations = 0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = {};
    bad.damping = 1.5;
    CHECK_THROWS_AS(bad.validate(), DomainError);

    const LayerStack s = reference();
    SolverOptions tight;
    tight.max_iterations = 1;
    try {
        (void)solve_equilibrium(s, build_mesh(s), tight);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(!e.history().empty());
    }
}

TEST_CASE("band CSV carries bias and residual") {
    const LayerStack s = reference();
    const BandDiagram d = solve_bias(s, build_mesh(s), 0.5);
    std::ostringstream out;
    write_band_csv(out, d);
    const std::string text = out.str();
    CHECK(text.find("# bias_V = 0.500000") != std::string::npos);
    CHECK(text.find("# residual_norm") != std::string::npos);
    CHECK(text.find("position_nm,Ec_eV,Ev_eV,phi_V,n_cm3,p_cm3,F_Vcm") != std::string::npos);
}

TEST_CASE("repeated solves are bitwise identical") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    const BandDiagram a = solve_bias(s, m, 0.7), b = solve_bias(s, m, 0.7);
    CHECK(a.phi == b.phi);
}
