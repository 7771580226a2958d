#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "process.hpp"
#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/qd_model.hpp"

using namespace qdsim;

namespace {

ReferenceModel reference_lines() { return load_reference_lines(test::data_path("reference_lines.json").string()); }
ChargeLadder reference_ladder() { return load_charge_ladder(test::data_path("reference_ladder.json").string()); }

const ExcitonLine& find(const ReferenceModel& m, Species s) {
    for (const auto& l : m.lines) {
        if (l.species == s) return l;
    }
    throw std::runtime_error("species missing from reference lines");
}

// brute force max - min of lambda(V)
double dense_range(const ExcitonLine& l, double v0, double v1, double d, int n = 10000) {
    double lo = 1e300, hi = -1e300;
    for (int k = 0; k <= n; ++k) {
        const double lam = line_wavelength_nm(l, v0 + (v1 - v0) * k / n, d);
        lo = std::min(lo, lam);
        hi = std::max(hi, lam);
    }
    return hi - lo;
}

ExcitonLine simple_line(double E0, double p, double beta) {
    ExcitonLine l;
    l.E0 = E0;
    l.dipole = p;
    l.polarizability = beta;
    return l;
}

}  // namespace

TEST_CASE("species names round-trip") {
    for (Species s : {Species::X0, Species::Xminus, Species::XX, Species::X2minus}) {
        CHECK(parse_species(species_name(s)) == s);
    }
    CHECK_THROWS_AS((void)parse_species("X3minus"), LookupError);
}

TEST_CASE("Stark energy is a parabola in the field") {
    const ExcitonLine l = simple_line(0.81, 0.3, -0.1);
    CHECK(stark_energy(l, 0.0) == l.E0);
    const double h = 2.5;
    const double expect = 2.0 * l.polarizability * 1e-6 * h * h;
    for (double F = -190.0; F <= 190.0; F += 7.3) {
        const double d2 = stark_energy(l, F + h) - 2 * stark_energy(l, F) + stark_energy(l, F - h);
        CHECK(d2 == doctest::Approx(expect).epsilon(1e-6));
    }
    CHECK_NOTHROW((void)stark_energy(l, 200.0));
    CHECK_THROWS_AS((void)stark_energy(l, 200.01), DomainError);
    CHECK_THROWS_AS((void)stark_energy(l, -250.0), DomainError);
    CHECK_THROWS_AS((void)stark_energy(l, std::nan("")), DomainError);
    CHECK(stark_wavelength_nm(l, 0.0) == doctest::Approx(constants::wavelength_nm_from_energy_eV(0.81)));
}

TEST_CASE("calibrated tuning ranges") {
    const ReferenceModel m = reference_lines();
    REQUIRE(m.lines.size() == 4);
    CHECK(m.intrinsic_nm == 240.0);
    const struct {
        Species s;
        double range;
    } targets[] = {{Species::X0, 2.40}, {Species::XX, 0.82}, {Species::Xminus, 1.73}, {Species::X2minus, 1.73}};
    for (const auto& t : targets) {
        const ExcitonLine& l = find(m, t.s);
        const double r = tuning_range(l, 0.59, 1.96, m.intrinsic_nm);
        const double oracle = dense_range(l, 0.59, 1.96, m.intrinsic_nm);
        MESSAGE(species_name(t.s) << ": range " << r << " nm, dense scan " << oracle);
        CHECK(std::abs(r - t.range) < 0.01);
        CHECK(std::abs(oracle - t.range) < 0.01);
        CHECK(r >= oracle - 1e-9);
        // redshift with bias across the calibration window
        CHECK(line_wavelength_nm(l, 1.96, m.intrinsic_nm) > line_wavelength_nm(l, 0.59, m.intrinsic_nm));
    }
    for (const auto& c : m.calibrations) {
        const ExcitonLine& l = find(m, c.species);
        CHECK(line_wavelength_nm(l, c.V_center, c.intrinsic_nm) == doctest::Approx(c.center_nm).epsilon(1e-10));
        CHECK(l.polarizability == c.polarizability);
    }
}

TEST_CASE("calibration rejects an unreachable or malformed target") {
    StarkCalibration c;
    c.tuning_range_nm = 1.0;
    c.center_nm = 1530.0;
    c.V_center = 1.0;
    c.polarizability = -0.1;
    c.V_min = 0.59;
    c.V_max = 1.96;
    c.direction = 0;
    CHECK_THROWS_AS((void)calibrate_line(c), DomainError);
    c.direction = 1;
    c.tuning_range_nm = -1.0;
    CHECK_THROWS_AS((void)calibrate_line(c), DomainError);
    c.tuning_range_nm = 1.0;
    const ExcitonLine l = calibrate_line(c);
    CHECK(std::abs(tuning_range(l, c.V_min, c.V_max, c.intrinsic_nm) - 1.0) < 1e-6);
    c.direction = -1;
    const ExcitonLine b = calibrate_line(c);
    CHECK(line_wavelength_nm(b, 1.96, 240.0) < line_wavelength_nm(b, 0.59, 240.0));
}

TEST_CASE("tuning range edge cases") {
    const ExcitonLine flat = simple_line(0.81, 0.0, 0.0);
    CHECK(tuning_range(flat, 0.5, 1.5, 240.0) == 0.0);
    const ExcitonLine l = simple_line(0.81, 0.3, -0.1);
    CHECK(tuning_range(l, 1.0, 1.0, 240.0) == 0.0);
    CHECK_THROWS_AS((void)tuning_range(l, 1.5, 1.0, 240.0), DomainError);
    CHECK_THROWS_AS((void)tuning_range(l, 0.5, 1.0, 0.0), DomainError);

    // vertex at F = -50 p / beta kV/cm, here 100 kV/cm = 2.4 V
    const ExcitonLine v = simple_line(0.81, 0.2, -0.1);
    const double end_points = std::abs(line_wavelength_nm(v, 1.4, 240.0) - line_wavelength_nm(v, 3.4, 240.0));
    const double r = tuning_range(v, 1.4, 3.4, 240.0);
    CHECK(r > end_points + 1e-3);
    CHECK(r == doctest::Approx(dense_range(v, 1.4, 3.4, 240.0, 200000)).epsilon(1e-6));
}

TEST_CASE("three-point Stark parabola is recovered exactly") {
    const ExcitonLine l = simple_line(0.8123, -0.42, -0.137);
    std::vector<StarkPoint> pts;
    for (double F : {-40.0, 15.0, 90.0}) pts.push_back({F, stark_energy(l, F)});
    const StarkParabola p = fit_stark_parabola(pts);
    CHECK(p.E0 == doctest::Approx(l.E0).epsilon(1e-12));
    CHECK(p.dipole == doctest::Approx(l.dipole).epsilon(1e-8));
    CHECK(p.polarizability == doctest::Approx(l.polarizability).epsilon(1e-8));
    CHECK(p.rms_residual_eV < 1e-14);
    pts.pop_back();
    CHECK_THROWS_AS((void)fit_stark_parabola(pts), InsufficientDataError);
    CHECK_THROWS_AS((void)fit_stark_parabola({{1.0, 0.8}, {1.0, 0.8}, {1.0, 0.8}}), InsufficientDataError);
}

TEST_CASE("FSS anchors and clamp") {
    const ReferenceModel m = reference_lines();
    const ExcitonLine& x0 = find(m, Species::X0);
    REQUIRE(x0.fss.has_value());
    const FssModel& f = *x0.fss;
    CHECK(fss_at(f, 1.7) == 41.0);
    CHECK(std::abs(fss_at(f, 1.15) - 16.0) < 1e-12);
    CHECK(fss_at(f, 1.425) == doctest::Approx(28.5).epsilon(1e-12));
    CHECK(fss_at(f, 0.0) == f.floor);
    CHECK(fss_at(f, -5.0) == 0.0);
    for (double V = 0.0; V < 2.0; V += 0.01) CHECK(fss_at(f, V + 0.01) >= fss_at(f, V));

    const FssModel g = FssModel::from_anchors(1.7, 41.0, 1.15, 16.0, 3.0);
    CHECK(fss_at(g, 1.7) == 41.0);
    CHECK(fss_at(g, 1.15) == doctest::Approx(16.0).epsilon(1e-14));
    CHECK(fss_at(g, 0.5) == 3.0);
    CHECK_THROWS_AS((void)FssModel::from_anchors(1.0, 1.0, 1.0, 2.0), DomainError);
    CHECK_THROWS_AS((void)FssModel::from_anchors(1.0, 1.0, 2.0, 2.0, -1.0), DomainError);
    CHECK(!find(m, Species::Xminus).fss.has_value());

    ExcitonLine charged = find(m, Species::Xminus);
    charged.fss = f;
    CHECK_THROWS_AS(charged.validate(), DomainError);
}

TEST_CASE("charge ladder probes") {
    const ChargeLadder lad = reference_ladder();
    REQUIRE(lad.regions() == 4);
    const struct {
        double V;
        int electrons;
        std::set<Species> species;
    } probes[] = {{0.9, 2, {Species::X2minus}},
                  {0.97, 1, {Species::Xminus}},
                  {1.1, 1, {Species::X0, Species::Xminus}},
                  {1.35, 0, {Species::X0}}};
    for (const auto& p : probes) {
        const Occupancy o = occupancy_at(lad, p.V);
        CHECK(o.electrons == p.electrons);
        CHECK(o.species == p.species);
    }
    // right-continuous at interior edges, closed at the top
    CHECK(occupancy_at(lad, 0.8).region == 0);
    CHECK(occupancy_at(lad, 0.945).region == 1);
    CHECK(occupancy_at(lad, std::nextafter(0.945, 0.0)).region == 0);
    CHECK(occupancy_at(lad, 1.0).region == 2);
    CHECK(occupancy_at(lad, 1.295).region == 3);
    CHECK(occupancy_at(lad, 1.4).region == 3);
    CHECK_THROWS_AS((void)occupancy_at(lad, 0.79), DomainError);
    CHECK_THROWS_AS((void)occupancy_at(lad, 1.41), DomainError);
    // electron count never increases with gate voltage
    int last = 99;
    for (double V = 0.8; V <= 1.4; V += 0.005) {
        const int e = occupancy_at(lad, V).electrons;
        CHECK(e <= last);
        last = e;
    }
}

TEST_CASE("malformed ladders and line files") {
    ChargeLadder bad;
    bad.region_edges = {1.0, 0.9};
    bad.occupancy_per_region = {1};
    bad.active_lines_per_region = {{Species::X0}};
    CHECK_THROWS(bad.validate());
    bad.region_edges = {0.9, 1.0, 1.1};
    CHECK_THROWS(bad.validate());

    CHECK_THROWS_AS((void)parse_charge_ladder("{}"), SchemaError);
    CHECK_THROWS_AS((void)parse_charge_ladder("[1,2"), SchemaError);
    CHECK_THROWS_AS(
        (void)parse_charge_ladder(R"({"region_edges_V": [0.8, 0.9], "regions": [{"electrons": 1, "species": ["Q"]}]})"),
        SchemaError);
    CHECK_THROWS_AS((void)parse_reference_lines(R"({"lines": [{"species": "X0"}]})"), SchemaError);
    CHECK_THROWS_AS((void)parse_reference_lines("not json"), SchemaError);
    CHECK_THROWS_AS((void)load_reference_lines("/nonexistent/lines.json"), SchemaError);

    const ReferenceModel direct = parse_reference_lines(
        R"({"intrinsic_nm": 200, "lines": [{"species": "XX", "E0_eV": 0.81, "dipole_e_nm": 0.1,
            "polarizability_ueV_per_kVcm2": -0.2}]})");
    REQUIRE(direct.lines.size() == 1);
    CHECK(direct.lines[0].species == Species::XX);
    CHECK(direct.lines[0].polarizability == -0.2);
    CHECK(direct.intrinsic_nm == 200.0);
}

TEST_CASE("background model is non-increasing in V") {
    BackgroundModel b{500.0, 5.0, 1.0, 0.05};
    double last = b.at(0.0);
    for (double V = 0.0; V <= 2.0; V += 0.01) {
        CHECK(b.at(V) <= last);
        last = b.at(V);
    }
    CHECK(b.at(1.0) == doctest::Approx(252.5));
    BackgroundModel inverted{5.0, 500.0, 1.0, 0.05};
    CHECK_THROWS(inverted.validate());
}

TEST_CASE("emission map columns carry exactly the region species") {
    const ReferenceModel m = reference_lines();
    const ChargeLadder lad = reference_ladder();
    std::vector<double> V, L;
    for (int k = 0; k <= 70; ++k) V.push_back(0.7 + 0.01 * k);
    for (int k = 0; k <= 200; ++k) L.push_back(1527.0 + 0.04 * k);
    MapOptions o;
    o.seed = 7;
    const EmissionMap map = synth_emission_map(m.lines, lad, V, L, o);
    REQUIRE(map.counts.size() == V.size() * L.size());
    REQUIRE(map.column_species.size() == V.size());
    for (std::size_t i = 0; i < V.size(); ++i) {
        if (V[i] < 0.8 || V[i] > 1.4) {
            CHECK(map.column_species[i].empty());
            continue;
        }
        CHECK(map.column_species[i] == occupancy_at(lad, V[i]).species);
    }

    // the strongest noiseless pixel follows the active line's Stark position
    const std::size_t iv = 60;  // V = 1.3, region 4: X0 only
    REQUIRE(map.column_species[iv] == std::set<Species>{Species::X0});
    std::size_t best = 0;
    for (std::size_t il = 0; il < L.size(); ++il) {
        if (map.expected[iv * L.size() + il] > map.expected[iv * L.size() + best]) best = il;
    }
    CHECK(std::abs(L[best] - line_wavelength_nm(find(m, Species::X0), V[iv], m.intrinsic_nm)) <= 0.04);

    // Poisson counts scatter around the expected map with chi^2 ~ N
    double chi2 = 0.0;
    std::size_t N = 0;
    for (std::size_t k = 0; k < map.counts.size(); ++k) {
        if (map.expected[k] < 5.0) continue;
        chi2 += (map.counts[k] - map.expected[k]) * (map.counts[k] - map.expected[k]) / map.expected[k];
        ++N;
    }
    MESSAGE("chi2 " << chi2 << " over " << N << " pixels");
    CHECK(std::abs(chi2 - N) < 5.0 * std::sqrt(2.0 * N));
}

TEST_CASE("emission map is deterministic and seed-sensitive") {
    const ReferenceModel m = reference_lines();
    const ChargeLadder lad = reference_ladder();
    std::vector<double> V{0.9, 1.1, 1.35}, L;
    for (int k = 0; k <= 100; ++k) L.push_back(1528.0 + 0.05 * k);
    MapOptions o;
    o.seed = 42;
    const auto a = synth_emission_map(m.lines, lad, V, L, o);
    o.threads = 3;
    const auto b = synth_emission_map(m.lines, lad, V, L, o);
    CHECK(a.counts == b.counts);
    o.seed = 43;
    const auto c = synth_emission_map(m.lines, lad, V, L, o);
    CHECK(a.counts != c.counts);
    CHECK(a.expected == c.expected);
    std::ostringstream sa, sb;
    write_map_csv(sa, a);
    write_map_csv(sb, b);
    CHECK(sa.str() == sb.str());

    o.poisson_noise = false;
    const auto quiet = synth_emission_map(m.lines, lad, V, L, o);
    CHECK(quiet.counts == quiet.expected);
}

TEST_CASE("noiseless column totals match line strengths plus background") {
    const ReferenceModel m = reference_lines();
    const ChargeLadder lad = reference_ladder();
    // wide window so the Lorentzian tails lost at the edges stay small
    std::vector<double> L;
    for (int k = 0; k <= 4000; ++k) L.push_back(1510.0 + 0.01 * k);
    MapOptions o;
    o.poisson_noise = false;
    o.background = {0.0, 0.0, 1.0, 0.1};
    const double V = 1.35;
    const auto map = synth_emission_map(m.lines, lad, {V}, L, o);
    double total = 0.0;
    for (double c : map.counts) total += c;
    const double expect = o.line_counts * find(m, Species::X0).relative_brightness;
    MESSAGE("column total " << total << " expected " << expect);
    CHECK(total <= expect);
    CHECK(total > 0.99 * expect);
}

TEST_CASE("map inputs are validated") {
    const ReferenceModel m = reference_lines();
    const ChargeLadder lad = reference_ladder();
    CHECK_THROWS((void)synth_emission_map(m.lines, lad, {1.0}, {1530.0, 1529.0}));
    CHECK_THROWS((void)synth_emission_map(m.lines, lad, {}, {1530.0, 1531.0}));
    MapOptions o;
    o.linewidth_ueV = 0.0;
    CHECK_THROWS((void)synth_emission_map(m.lines, lad, {1.0}, {1530.0, 1531.0}, o));
}
