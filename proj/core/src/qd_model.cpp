#include "qdsim/qd_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Dense>
#include <boost/math/tools/toms748_solve.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"

namespace qdsim {

using nlohmann::json;

std::string_view species_name(Species s) {
    switch (s) {
        case Species::X0: return "X0";
        case Species::Xminus: return "Xminus";
        case Species::XX: return "XX";
        case Species::X2minus: return "X2minus";
    }
    return "?";
}

Species parse_species(std::string_view name) {
    for (Species s : {Species::X0, Species::Xminus, Species::XX, Species::X2minus}) {
        if (species_name(s) == name) return s;
    }
    throw LookupError("unknown species '" + std::string(name) + "'", std::string(name));
}

FssModel FssModel::from_anchors(double V1, double delta1, double V2, double delta2, double floor) {
    if (V1 == V2) throw DomainError("FSS anchors need distinct voltages");
    FssModel m;
    m.V_ref = V1;
    m.delta_ref = delta1;
    m.slope = (delta2 - delta1) / (V2 - V1);
    m.floor = floor;
    m.validate();
    return m;
}

void FssModel::validate() const {
    if (!std::isfinite(delta_ref) || !std::isfinite(slope) || !std::isfinite(V_ref)) {
        throw DomainError("FSS model parameters must be finite");
    }
    if (!(floor >= 0.0)) throw DomainError("FSS floor must be non-negative");
}

double fss_at(const FssModel& model, double V) {
    return std::max(model.floor, model.delta_ref + model.slope * (V - model.V_ref));
}

void ExcitonLine::validate() const {
    if (!(E0 > 0.0) || !std::isfinite(E0)) throw DomainError("line energy must be positive");
    if (!std::isfinite(dipole) || !std::isfinite(polarizability)) throw DomainError("Stark parameters must be finite");
    if (!(relative_brightness >= 0.0)) throw DomainError("relative brightness must be non-negative");
    if (fss) {
        if (species == Species::Xminus || species == Species::X2minus) {
            throw DomainError("charged line " + std::string(species_name(species)) + " cannot carry a fine structure");
        }
        fss->validate();
    }
}

double stark_energy(const ExcitonLine& line, double F) {
    if (!(std::abs(F) <= kMaxStarkField_kVcm)) {
        throw DomainError(fmt::format("field {:.3f} kV/cm outside +-{} kV/cm", F, kMaxStarkField_kVcm));
    }
    // p [e nm] * F [kV/cm] = p F 1e-4 eV; beta [ueV/(kV/cm)^2] F^2 = beta F^2 1e-6 eV.
    return line.E0 + line.dipole * F * 1e-4 + line.polarizability * F * F * 1e-6;
}

double stark_wavelength_nm(const ExcitonLine& line, double F) {
    return constants::wavelength_nm_from_energy_eV(stark_energy(line, F));
}

double line_wavelength_nm(const ExcitonLine& line, double V, double intrinsic_nm) {
    return stark_wavelength_nm(line, V / intrinsic_nm * 1e4);
}

double tuning_range(const ExcitonLine& line, double V_min, double V_max, double intrinsic_nm) {
    if (V_min > V_max) throw DomainError("tuning_range: V_min must not exceed V_max");
    if (!(intrinsic_nm > 0.0)) throw DomainError("tuning_range: intrinsic thickness must be positive");
    const double F1 = V_min / intrinsic_nm * 1e4;
    const double F2 = V_max / intrinsic_nm * 1e4;
    std::vector<double> fields{F1, F2};
    if (line.polarizability != 0.0) {
        const double vertex = -line.dipole * 1e-4 / (2.0 * line.polarizability * 1e-6);
        if (vertex > F1 && vertex < F2) fields.push_back(vertex);
    }
    double lo = INFINITY, hi = -INFINITY;
    for (double F : fields) {
        const double l = stark_wavelength_nm(line, F);
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    return hi - lo;
}

StarkParabola fit_stark_parabola(const std::vector<StarkPoint>& points) {
    if (points.size() < 3) throw InsufficientDataError("Stark parabola needs at least three points");
    Eigen::MatrixXd A(points.size(), 3);
    Eigen::VectorXd b(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double F = points[i].field_kVcm;
        A(i, 0) = 1.0;
        A(i, 1) = F * 1e-4;
        A(i, 2) = F * F * 1e-6;
        b(i) = points[i].energy_eV;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < 3) throw InsufficientDataError("Stark parabola needs three distinct fields");
    const Eigen::Vector3d x = qr.solve(b);
    StarkParabola out;
    out.E0 = x(0);
    out.dipole = x(1);
    out.polarizability = x(2);
    out.rms_residual_eV = std::sqrt((A * x - b).squaredNorm() / static_cast<double>(points.size()));
    return out;
}

ExcitonLine calibrate_line(const StarkCalibration& cal) {
    if (!(cal.V_min < cal.V_max)) throw DomainError("calibration needs V_min < V_max");
    if (!(cal.tuning_range_nm > 0.0)) throw DomainError("calibration target range must be positive");
    if (!(cal.center_nm > 0.0) || !(cal.intrinsic_nm > 0.0)) throw DomainError("calibration needs positive lengths");
    if (cal.direction != 1 && cal.direction != -1) throw DomainError("calibration direction must be +1 or -1");

    const double F1 = cal.V_min / cal.intrinsic_nm * 1e4;
    const double F2 = cal.V_max / cal.intrinsic_nm * 1e4;
    const double Fc = cal.V_center / cal.intrinsic_nm * 1e4;
    const double beta = cal.polarizability;
    const double E_center = constants::energy_eV_from_wavelength_nm(cal.center_nm);

    auto make = [&](double p) {
        ExcitonLine l;
        l.species = cal.species;
        l.dipole = p;
        l.polarizability = beta;
        l.E0 = E_center - p * Fc * 1e-4 - beta * Fc * Fc * 1e-6;
        return l;
    };
    // Redshift (+1) means dE/dF = p + 2 beta F <= 0 on the whole interval; the
    // range is then monotone in p away from the edge value where the vertex
    // touches the interval.
    const double d1 = 2.0 * beta * F1 * 1e-2, d2 = 2.0 * beta * F2 * 1e-2;  // in e nm
    const double edge = cal.direction > 0 ? -std::max(d1, d2) : -std::min(d1, d2);
    auto residual = [&](double p) { return tuning_range(make(p), cal.V_min, cal.V_max, cal.intrinsic_nm) - cal.tuning_range_nm; };
    const double r_edge = residual(edge);
    if (r_edge > 0.0) {
        throw DomainError(fmt::format("{}: tuning range {:.4f} nm unattainable with polarizability {}",
                                      species_name(cal.species), cal.tuning_range_nm, beta));
    }
    double far = edge - cal.direction * 1.0;
    while (residual(far) < 0.0) {
        far = edge + 2.0 * (far - edge);
        if (std::abs(far - edge) > 1e4) throw DomainError("calibration: dipole bracket failed");
    }
    double a = std::min(edge, far), b = std::max(edge, far);
    boost::uintmax_t iters = 200;
    const auto root = boost::math::tools::toms748_solve(
        residual, a, b, [](double x, double y) { return std::abs(x - y) < 1e-15; }, iters);
    ExcitonLine line = make(0.5 * (root.first + root.second));
    line.validate();
    return line;
}

void ChargeLadder::validate() const {
    if (region_edges.size() < 2) throw DomainError("charge ladder needs at least two edges");
    if (occupancy_per_region.size() + 1 != region_edges.size() ||
        active_lines_per_region.size() != occupancy_per_region.size()) {
        throw DomainError("charge ladder: regions, occupancies and species sets disagree in count");
    }
    for (std::size_t i = 1; i < region_edges.size(); ++i) {
        if (!(region_edges[i] > region_edges[i - 1])) throw DomainError("charge ladder edges must increase strictly");
    }
    for (std::size_t i = 1; i < occupancy_per_region.size(); ++i) {
        if (occupancy_per_region[i] > occupancy_per_region[i - 1]) {
            throw DomainError("charge ladder occupancy must not increase with voltage");
        }
    }
    for (int k : occupancy_per_region) {
        if (k < 0) throw DomainError("charge ladder occupancy must be non-negative");
    }
}

Occupancy occupancy_at(const ChargeLadder& ladder, double V) {
    const auto& e = ladder.region_edges;
    if (!(V >= e.front() && V <= e.back())) {
        throw DomainError(fmt::format("voltage {:.4f} V outside charge ladder span [{}, {}] V", V, e.front(), e.back()));
    }
    std::size_t r = static_cast<std::size_t>(std::upper_bound(e.begin(), e.end(), V) - e.begin());
    r = std::min(r == 0 ? 0 : r - 1, ladder.regions() - 1);
    return {ladder.occupancy_per_region[r], ladder.active_lines_per_region[r], r};
}

namespace {

double get_number(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(std::string("missing field '") + key + "'", where);
    if (!it->is_number()) throw SchemaError(std::string("'") + key + "' must be a number", where);
    return it->get<double>();
}

double get_number_or(const json& obj, const char* key, double def, const std::string& where) {
    return obj.contains(key) ? get_number(obj, key, where) : def;
}

json parse_document(const std::string& text) {
    try {
        json doc = json::parse(text);
        if (!doc.is_object()) throw SchemaError("document must be a JSON object", "document");
        return doc;
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("invalid JSON: ") + e.what(), "document");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open file", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ReferenceModel parse_reference_lines(const std::string& text) {
    const json doc = parse_document(text);
    ReferenceModel model;
    model.intrinsic_nm = get_number_or(doc, "intrinsic_nm", 240.0, "document");
    auto lines = doc.find("lines");
    if (lines == doc.end() || !lines->is_array()) throw SchemaError("'lines' must be an array", "lines");
    for (std::size_t i = 0; i < lines->size(); ++i) {
        const json& item = (*lines)[i];
        const std::string where = "lines[" + std::to_string(i) + "]";
        if (!item.is_object() || !item.contains("species") || !item["species"].is_string()) {
            throw SchemaError("line needs a string 'species'", where);
        }
        Species sp;
        try {
            sp = parse_species(item["species"].get<std::string>());
        } catch (const LookupError& e) {
            throw SchemaError(e.what(), where + ".species");
        }
        ExcitonLine line;
        if (auto cal = item.find("calibration"); cal != item.end()) {
            const std::string cw = where + ".calibration";
            StarkCalibration c;
            c.species = sp;
            c.tuning_range_nm = get_number(*cal, "tuning_range_nm", cw);
            c.center_nm = get_number(*cal, "center_nm", cw);
            c.V_center = get_number(*cal, "V_center", cw);
            c.polarizability = get_number(*cal, "polarizability_ueV_per_kVcm2", cw);
            c.V_min = get_number(*cal, "V_min", cw);
            c.V_max = get_number(*cal, "V_max", cw);
            c.intrinsic_nm = model.intrinsic_nm;
            c.direction = static_cast<int>(get_number_or(*cal, "direction", 1.0, cw));
            try {
                line = calibrate_line(c);
            } catch (const DomainError& e) {
                throw SchemaError(e.what(), cw);
            }
            model.calibrations.push_back(c);
        } else {
            line.species = sp;
            line.E0 = get_number(item, "E0_eV", where);
            line.dipole = get_number_or(item, "dipole_e_nm", 0.0, where);
            line.polarizability = get_number_or(item, "polarizability_ueV_per_kVcm2", 0.0, where);
        }
        line.relative_brightness = get_number_or(item, "relative_brightness", 1.0, where);
        if (auto f = item.find("fss"); f != item.end() && !f->is_null()) {
            const std::string fw = where + ".fss";
            FssModel m;
            m.delta_ref = get_number(*f, "delta_ref_ueV", fw);
            m.V_ref = get_number(*f, "V_ref", fw);
            m.slope = get_number(*f, "slope_ueV_per_V", fw);
            m.floor = get_number_or(*f, "floor_ueV", 0.0, fw);
            line.fss = m;
        }
        try {
            line.validate();
        } catch (const DomainError& e) {
            throw SchemaError(e.what(), where);
        }
        model.lines.push_back(line);
    }
    return model;
}

ReferenceModel load_reference_lines(const std::string& path) {
    try {
        return parse_reference_lines(read_file(path));
    } catch (const SchemaError& e) {
        throw SchemaError(e.what(), path);
    }
}

ChargeLadder parse_charge_ladder(const std::string& text) {
    const json doc = parse_document(text);
    ChargeLadder ladder;
    auto edges = doc.find("region_edges_V");
    if (edges == doc.end() || !edges->is_array()) throw SchemaError("'region_edges_V' must be an array", "document");
    for (const auto& v : *edges) {
        if (!v.is_number()) throw SchemaError("edges must be numbers", "region_edges_V");
        ladder.region_edges.push_back(v.get<double>());
    }
    auto regions = doc.find("regions");
    if (regions == doc.end() || !regions->is_array()) throw SchemaError("'regions' must be an array", "document");
    for (std::size_t i = 0; i < regions->size(); ++i) {
        const json& r = (*regions)[i];
        const std::string where = "regions[" + std::to_string(i) + "]";
        ladder.occupancy_per_region.push_back(static_cast<int>(get_number(r, "electrons", where)));
        std::set<Species> sp;
        if (!r.contains("species") || !r["species"].is_array()) throw SchemaError("'species' must be an array", where);
        for (const auto& s : r["species"]) {
            if (!s.is_string()) throw SchemaError("species entries must be strings", where);
            try {
                sp.insert(parse_species(s.get<std::string>()));
            } catch (const LookupError& e) {
                throw SchemaError(e.what(), where);
            }
        }
        ladder.active_lines_per_region.push_back(std::move(sp));
    }
    try {
        ladder.validate();
    } catch (const DomainError& e) {
        throw SchemaError(e.what(), "document");
    }
    return ladder;
}

ChargeLadder load_charge_ladder(const std::string& path) {
    try {
        return parse_charge_ladder(read_file(path));
    } catch (const SchemaError& e) {
        throw SchemaError(e.what(), path);
    }
}

double BackgroundModel::at(double V) const {
    return low + (high - low) / (1.0 + std::exp((V - V_mid) / width));
}

void BackgroundModel::validate() const {
    if (!(low >= 0.0) || !(high >= low)) throw DomainError("background needs 0 <= low <= high");
    if (!(width > 0.0)) throw DomainError("background width must be positive");
}

EmissionMap synth_emission_map(const std::vector<ExcitonLine>& lines, const ChargeLadder& ladder,
                               const std::vector<double>& voltages, const std::vector<double>& wavelengths,
                               const MapOptions& opts) {
    if (voltages.empty() || wavelengths.empty()) throw DomainError("emission map grids must be non-empty");
    for (std::size_t i = 1; i < voltages.size(); ++i) {
        if (!(voltages[i] > voltages[i - 1])) throw DomainError("voltage grid must increase strictly");
    }
    for (std::size_t i = 1; i < wavelengths.size(); ++i) {
        if (!(wavelengths[i] > wavelengths[i - 1])) throw DomainError("wavelength grid must increase strictly");
    }
    if (!(wavelengths.front() > 0.0)) throw DomainError("wavelengths must be positive");
    if (!(opts.linewidth_ueV > 0.0)) throw DomainError("linewidth must be positive");
    if (!(opts.line_counts >= 0.0)) throw DomainError("line counts must be non-negative");
    opts.background.validate();
    ladder.validate();
    for (const auto& l : lines) l.validate();

    const std::size_t nv = voltages.size(), nl = wavelengths.size();
    EmissionMap map;
    map.voltages = voltages;
    map.wavelengths = wavelengths;
    map.counts.assign(nv * nl, 0.0);
    map.expected.assign(nv * nl, 0.0);
    map.column_species.resize(nv);
    map.seed = opts.seed;

    // Pixel edges in energy; a single-pixel grid gets a 1 pm bin.
    std::vector<double> edge_energy(nl + 1);
    for (std::size_t i = 0; i <= nl; ++i) {
        double lam;
        if (nl == 1) lam = wavelengths[0] + (i == 0 ? -5e-4 : 5e-4);
        else if (i == 0) lam = wavelengths[0] - 0.5 * (wavelengths[1] - wavelengths[0]);
        else if (i == nl) lam = wavelengths[nl - 1] + 0.5 * (wavelengths[nl - 1] - wavelengths[nl - 2]);
        else lam = 0.5 * (wavelengths[i - 1] + wavelengths[i]);
        edge_energy[i] = constants::energy_eV_from_wavelength_nm(lam);
    }
    const double half_width = 0.5 * opts.linewidth_ueV * 1e-6;

    auto column = [&](std::size_t iv) {
        const double V = voltages[iv];
        double* mean = map.expected.data() + iv * nl;
        const double bg = opts.background.at(V);
        for (std::size_t il = 0; il < nl; ++il) mean[il] = bg;
        if (V >= ladder.region_edges.front() && V <= ladder.region_edges.back()) {
            const Occupancy occ = occupancy_at(ladder, V);
            map.column_species[iv] = occ.species;
            for (const auto& line : lines) {
                if (!occ.species.count(line.species)) continue;
                const double Ec = stark_energy(line, V / opts.intrinsic_nm * 1e4);
                const double strength = opts.line_counts * line.relative_brightness;
                for (std::size_t il = 0; il < nl; ++il) {
                    // Energy decreases with wavelength: edge i is the high-energy side.
                    const double frac = (std::atan((edge_energy[il] - Ec) / half_width) -
                                         std::atan((edge_energy[il + 1] - Ec) / half_width)) /
                                        constants::pi;
                    mean[il] += strength * frac;
                }
            }
        }
        double* out = map.counts.data() + iv * nl;
        if (!opts.poisson_noise) {
            std::copy(mean, mean + nl, out);
            return;
        }
        std::mt19937_64 rng(opts.seed ^ static_cast<std::uint64_t>(iv));
        for (std::size_t il = 0; il < nl; ++il) {
            if (mean[il] > 0.0) {
                std::poisson_distribution<long long> dist(mean[il]);
                out[il] = static_cast<double>(dist(rng));
            }
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(nv)));
    if (threads == 1) {
        for (std::size_t iv = 0; iv < nv; ++iv) column(iv);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t iv = t; iv < nv; iv += threads) column(iv);
            });
        }
        for (auto& th : pool) th.join();
    }
    return map;
}

void write_map_csv(std::ostream& out, const EmissionMap& map) {
    fmt::print(out, "# qdsim synthetic emission map\n");
    fmt::print(out, "# seed = {}\n", map.seed);
    fmt::print(out, "# rows = voltage_V, columns = wavelength_nm\n");
    fmt::print(out, "voltage_V");
    for (double l : map.wavelengths) fmt::print(out, ",{:.6f}", l);
    fmt::print(out, "\n");
    for (std::size_t iv = 0; iv < map.voltages.size(); ++iv) {
        fmt::print(out, "{:.6f}", map.voltages[iv]);
        for (std::size_t il = 0; il < map.wavelengths.size(); ++il) fmt::print(out, ",{:.9g}", map.at(iv, il));
        fmt::print(out, "\n");
    }
}

void write_stark_csv(std::ostream& out, const std::vector<ExcitonLine>& lines, const std::vector<double>& voltages,
                     double intrinsic_nm) {
    fmt::print(out, "# qdsim Stark tuning, intrinsic_nm = {:.3f}\n", intrinsic_nm);
    fmt::print(out, "voltage_V,field_kVcm");
    for (const auto& l : lines) fmt::print(out, ",{}_nm", species_name(l.species));
    fmt::print(out, "\n");
    for (double V : voltages) {
        fmt::print(out, "{:.6f},{:.6f}", V, V / intrinsic_nm * 1e4);
        for (const auto& l : lines) fmt::print(out, ",{:.9f}", line_wavelength_nm(l, V, intrinsic_nm));
        fmt::print(out, "\n");
    }
}

}  // namespace qdsim
