#include <doctest.h>

#include <cmath>
#include <random>

#include "process.hpp"
#include "qdsim/device.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/materials.hpp"

using namespace qdsim;

namespace {

LayerStack reference() { return load_stack(test::data_path("device_fig1a.json").string()); }

std::string layer_json(const char* material, double t, double nd) {
    return std::string("{\"material\": \"") + material + "\", \"thickness_nm\": " + std::to_string(t) +
           ", \"donor_density_cm3\": " + std::to_string(nd) + "}";
}

std::string stack_json(const std::string& layers) {
    return "{\"name\": \"t\", \"temperature_K\": 300, \"layers\": [" + layers + "]}";
}

std::string schema_location(const std::string& json) {
    try {
        (void)parse_stack(json);
    } catch (const SchemaError& e) {
        return e.location();
    }
    return "<no error>";
}

}  // namespace

TEST_CASE("reference device stack") {
    const LayerStack s = reference();
    REQUIRE(s.layers.size() == 10);
    CHECK(s.total_thickness() == doctest::Approx(611.0));
    CHECK(s.layers.front().donor_density == 2.0e18);
    CHECK(s.layers.back().donor_density == 1.0e19);
    CHECK(s.layers[2].material == "AlInAs_lattice_matched");
    CHECK(s.layers[2].donor_density == 7.0e14);
    CHECK(s.layers[1].donor_density == 2.0e15);
    CHECK(s.bottom_contact_layers() == 1);
    CHECK(s.top_contact_layers() == 2);
    CHECK(s.intrinsic_start() == doctest::Approx(300.0));
    CHECK(s.intrinsic_end() == doctest::Approx(541.0));
    CHECK(std::abs(s.intrinsic_thickness() - 240.0) <= 1.0);
}

TEST_CASE("schema errors name the offending element") {
    CHECK(schema_location(stack_json("")) == "layers");
    CHECK(schema_location(stack_json(layer_json("InP", 10, 1e18) + "," + layer_json("InP", -5, 0))) ==
          "layers[1]");
    CHECK(schema_location(stack_json(layer_json("InP", 10, 1e18) + "," + layer_json("Unobtainium", 5, 0))) ==
          "layers[1]");
    CHECK(schema_location(stack_json("{\"thickness_nm\": 10}")) == "layers[0]");
    CHECK(schema_location("{\"name\": \"t\", \"temperature_K\": 300, \"layers\": 3}") == "layers");
    CHECK(schema_location("not json") == "document");
    CHECK_THROWS_AS((void)load_stack("/nonexistent/device.json"), SchemaError);
}

TEST_CASE("two-layer stack thickness is additive") {
    const LayerStack s = parse_stack(stack_json(layer_json("InP", 123.5, 1e18) + "," + layer_json("InP", 76.25, 1e18)));
    CHECK(s.total_thickness() == doctest::Approx(199.75).epsilon(1e-15));
    REQUIRE(s.interface_positions().size() == 1);
    CHECK(s.interface_positions()[0] == 123.5);
}

TEST_CASE("uniform single-layer mesh") {
    const LayerStack s = parse_stack(stack_json(layer_json("InP", 100, 1e17)));
    MeshOptions o;
    o.max_spacing_nm = 1.0;
    o.fine_spacing_nm = 0.25;
    const Mesh1D m = build_mesh(s, o);
    REQUIRE(m.size() == 101);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.nodes[i] == doctest::Approx(static_cast<double>(i)));
}

TEST_CASE("interface appears exactly once") {
    const LayerStack s = parse_stack(stack_json(layer_json("InP", 50, 1e18) + "," + layer_json("InAs", 30, 0)));
    const Mesh1D m = build_mesh(s);
    std::size_t hits = 0;
    for (double x : m.nodes) hits += (x == 50.0);
    CHECK(hits == 1);
    REQUIRE(m.interface_ids.size() == 1);
    CHECK(m.nodes[m.interface_ids[0]] == 50.0);
    CHECK(m.node_layer[m.interface_ids[0]] == 0);
}

TEST_CASE("reference mesh is deterministic and honours the spacing contract") {
    const LayerStack s = reference();
    const MeshOptions o;
    const Mesh1D a = build_mesh(s, o), b = build_mesh(s, o);
    CHECK(a.nodes == b.nodes);
    CHECK(a.interface_ids == b.interface_ids);
    CHECK(a.size() == 854);
    CHECK(a.nodes.front() == 0.0);
    CHECK(a.nodes.back() == doctest::Approx(s.total_thickness()).epsilon(1e-15));
    const auto ifaces = s.interface_positions();
    REQUIRE(a.interface_ids.size() == ifaces.size());
    for (std::size_t k = 0; k < ifaces.size(); ++k) CHECK(a.nodes[a.interface_ids[k]] == ifaces[k]);
    for (std::size_t e = 0; e < a.elements(); ++e) {
        const double h = a.spacing(e);
        CHECK(h > 0.0);
        CHECK(h <= o.max_spacing_nm * (1 + 1e-12));
        double dist = 1e300;
        for (double x : ifaces) dist = std::min(dist, std::max(std::abs(a.nodes[e] - x), std::abs(a.nodes[e + 1] - x)));
        if (dist <= o.refine_width_nm) CHECK(h <= o.fine_spacing_nm * (1 + 1e-12));
    }
}

TEST_CASE("halving max spacing keeps the interface nodes") {
    const LayerStack s = reference();
    MeshOptions o;
    const Mesh1D coarse = build_mesh(s, o);
    o.max_spacing_nm /= 2;
    o.fine_spacing_nm /= 2;
    const Mesh1D fine = build_mesh(s, o);
    REQUIRE(coarse.interface_ids.size() == fine.interface_ids.size());
    for (std::size_t k = 0; k < coarse.interface_ids.size(); ++k) {
        CHECK(coarse.nodes[coarse.interface_ids[k]] == fine.nodes[fine.interface_ids[k]]);
    }
    const Mesh1D r = refine_mesh(coarse);
    CHECK(r.size() == 2 * coarse.size() - 1);
    for (std::size_t i = 0; i < coarse.size(); ++i) CHECK(r.nodes[2 * i] == coarse.nodes[i]);
}

TEST_CASE("mesh options are validated") {
    const LayerStack s = reference();
    CHECK_THROWS_AS((void)build_mesh(s, {0.0, 0.25, 10.0}), DomainError);
    CHECK_THROWS_AS((void)build_mesh(s, {1.0, 2.0, 10.0}), DomainError);
    CHECK_THROWS_AS((void)build_mesh(s, {2.0, 0.25, -1.0}), DomainError);
}

TEST_CASE("doping profile of the reference device") {
    const LayerStack s = reference();
    const Mesh1D m = build_mesh(s);
    const DopingProfile d = doping_profile(s, m);
    CHECK(d.donors[m.nearest_node(150.0)] == 2.0e18);
    CHECK(d.donors[m.nearest_node(355.0)] == 7.0e14);
    CHECK(d.donors[m.nearest_node(310.0)] == 2.0e15);
    CHECK(d.donors[m.nearest_node(405.0)] == 2.0e15);
    CHECK(d.donors[m.nearest_node(600.0)] == 1.0e19);
    for (double x : d.acceptors) CHECK(x == 0.0);

    // Interface at 320 nm: InP spacer below, AlInAs above.
    const std::size_t k = m.interface_ids[1];
    CHECK(m.nodes[k] == 320.0);
    CHECK(d.donors[k] == 2.0e15);
    const double eps_inp = lookup_material("InP", 300).eps_r, eps_al = lookup_material("AlInAs_lattice_matched", 300).eps_r;
    CHECK(d.eps_r[k] == doctest::Approx(0.5 * (eps_inp + eps_al)));

    const double sheet = sheet_donor_density(s);
    CHECK(std::abs(d.integrated_donors(m) - sheet) / sheet < 1e-12);
}

TEST_CASE("undoped layer carries its declared background only") {
    const LayerStack s = parse_stack(stack_json(layer_json("InP", 40, 0)));
    const DopingProfile d = doping_profile(s, build_mesh(s));
    for (std::size_t i = 0; i < d.donors.size(); ++i) {
        CHECK(d.donors[i] == 0.0);
        CHECK(d.acceptors[i] == 0.0);
    }
}

TEST_CASE("mesh and stack mismatch") {
    const LayerStack s = reference();
    const LayerStack other = parse_stack(stack_json(layer_json("InP", 100, 1e18)));
    CHECK_THROWS_AS((void)doping_profile(other, build_mesh(s)), ConsistencyError);
}

TEST_CASE("serialize then parse is the identity (100 random stacks)") {
    const char* materials[] = {"InP", "InAs", "AlInAs_lattice_matched"};
    std::mt19937_64 rng(20240917);
    std::uniform_real_distribution<double> thick(0.1, 500.0), lg(13.0, 19.5), temp(1.0, 400.0);
    std::uniform_int_distribution<int> nlayers(1, 12), mat(0, 2), coin(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        LayerStack s;
        s.name = "random_" + std::to_string(trial);
        s.temperature_K = temp(rng);
        const int n = nlayers(rng);
        for (int i = 0; i < n; ++i) {
            Layer l;
            l.material = materials[mat(rng)];
            l.thickness_nm = thick(rng);
            l.donor_density = coin(rng) ? std::pow(10.0, lg(rng)) : 0.0;
            l.acceptor_density = coin(rng) ? std::pow(10.0, lg(rng)) : 0.0;
            l.label = "layer " + std::to_string(i);
            s.layers.push_back(l);
        }
        const LayerStack r = parse_stack(serialize_stack(s));
        CHECK(r.name == s.name);
        CHECK(r.temperature_K == s.temperature_K);
        REQUIRE(r.layers.size() == s.layers.size());
        for (int i = 0; i < n; ++i) {
            CHECK(r.layers[i].material == s.layers[i].material);
            CHECK(r.layers[i].thickness_nm == s.layers[i].thickness_nm);
            CHECK(r.layers[i].donor_density == s.layers[i].donor_density);
            CHECK(r.layers[i].acceptor_density == s.layers[i].acceptor_density);
            CHECK(r.layers[i].label == s.layers[i].label);
        }
        CHECK(serialize_stack(r) == serialize_stack(s));
    }
}
