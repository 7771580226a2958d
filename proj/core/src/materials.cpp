#include "qdsim/materials.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"

namespace qdsim {

namespace detail {
// Generated at build time from data/materials.db.
const char* builtin_material_database_text();
}  // namespace detail

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_number(std::string_view text, const std::string& where) {
    text = trim(text);
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw SchemaError("expected a number, got '" + std::string(text) + "'", where);
    }
    return value;
}

// Fields every fully resolved record must provide.
constexpr const char* kRequired[] = {
    "Eg0_eV", "varshni_alpha_eV_per_K", "varshni_beta_K", "vbo_eV", "eps_r", "me", "mh",
    "radiative_B_cm3_per_s",
    "mu_n_min", "mu_n_max", "mu_n_Nref", "mu_n_exponent", "mu_n_gamma",
    "mu_p_min", "mu_p_max", "mu_p_Nref", "mu_p_exponent", "mu_p_gamma",
};

// Bowing keys map onto the interpolated field by stripping the prefix.
constexpr std::string_view kBowingPrefix = "bowing_";

}  // namespace

void MobilityParams::validate(std::string_view context) const {
    const std::string where(context);
    if (!(mu_min > 0.0) || !(mu_min <= mu_max)) {
        throw SchemaError("mobility requires 0 < mu_min <= mu_max", where);
    }
    if (!(N_ref > 0.0)) throw SchemaError("mobility N_ref must be positive", where);
    if (!(exponent > 0.0 && exponent <= 2.0)) {
        throw SchemaError("mobility exponent must lie in (0, 2]", where);
    }
}

double mobility(const MobilityParams& p, double N) {
    if (!(N >= 0.0)) throw DomainError("mobility: doping density must be non-negative");
    return p.mu_min + (p.mu_max - p.mu_min) / (1.0 + std::pow(N / p.N_ref, p.exponent));
}

double mobility(const MobilityParams& p, double N, double T) {
    if (!(T > 0.0)) throw DomainError("mobility: temperature must be positive");
    return mobility(p, N) * std::pow(300.0 / T, p.temperature_exponent);
}

double varshni_gap(double Eg0, double alpha, double beta, double T) {
    return Eg0 - alpha * T * T / (T + beta);
}

double effective_density_of_states(double mass_ratio, double T) {
    using namespace constants;
    const double kT = boltzmann * T;
    const double m = mass_ratio * electron_mass;
    // m^-3 -> cm^-3
    return 2.0 * std::pow(m * kT / (2.0 * pi * hbar * hbar), 1.5) * 1e-6;
}

double MaterialParams::Nc() const { return effective_density_of_states(me, temperature_K); }
double MaterialParams::Nv() const { return effective_density_of_states(mh, temperature_K); }

double MaterialParams::intrinsic_density() const {
    const double kT = constants::thermal_voltage(temperature_K);
    return std::sqrt(Nc() * Nv()) * std::exp(-Eg / (2.0 * kT));
}

void MaterialParams::validate() const {
    if (!(Eg0 > 0.0)) throw SchemaError("Eg0 must be positive", name);
    if (!(eps_r >= 1.0)) throw SchemaError("eps_r must be >= 1", name);
    if (!(me > 0.0 && me < 10.0) || !(mh > 0.0 && mh < 10.0)) {
        throw SchemaError("effective masses must lie in (0, 10)", name);
    }
    if (!(varshni_alpha >= 0.0) || !(varshni_beta > 0.0)) {
        throw SchemaError("Varshni parameters require alpha >= 0 and beta > 0", name);
    }
    // Eg(T) is decreasing in T, so positivity over [0, 400] reduces to T = 400.
    if (!(varshni_gap(Eg0, varshni_alpha, varshni_beta, 400.0) > 0.0)) {
        throw SchemaError("Varshni gap becomes non-positive below 400 K", name);
    }
    electron_mobility.validate(name + ".mu_n");
    hole_mobility.validate(name + ".mu_p");
}

BandOffsets band_offsets(const MaterialParams& a, const MaterialParams& b) {
    return {a.Ec() - b.Ec(), b.Ev() - a.Ev()};
}

MaterialDatabase MaterialDatabase::parse(std::string_view text) {
    struct RawSection {
        std::map<std::string, double, std::less<>> values;
        std::vector<std::pair<std::string, double>> components;
        int line = 0;
    };
    std::map<std::string, RawSection, std::less<>> raw;
    std::vector<std::string> order;

    RawSection* current = nullptr;
    std::istringstream in{std::string(text)};
    std::string line_buf;
    int line_no = 0;
    while (std::getline(in, line_buf)) {
        ++line_no;
        const std::string where = "line " + std::to_string(line_no);
        std::string_view line = line_buf;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw SchemaError("unterminated section header", where);
            std::string name(trim(line.substr(1, line.size() - 2)));
            if (name.empty()) throw SchemaError("empty section name", where);
            if (raw.count(name)) throw SchemaError("duplicate section [" + name + "]", where);
            current = &raw[name];
            current->line = line_no;
            order.push_back(name);
            continue;
        }
        if (!current) throw SchemaError("key outside of any section", where);

        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw SchemaError("expected 'key = value'", where);
        std::string key(trim(line.substr(0, eq)));
        std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) throw SchemaError("empty key", where);

        if (key == "alloy") {
            // "A:x, B:y"
            std::string_view rest = value;
            while (!rest.empty()) {
                const auto comma = rest.find(',');
                std::string_view item = trim(rest.substr(0, comma));
                rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
                const auto colon = item.find(':');
                if (colon == std::string_view::npos) {
                    throw SchemaError("alloy component must be 'Material:fraction'", where);
                }
                current->components.emplace_back(std::string(trim(item.substr(0, colon))),
                                                 parse_number(item.substr(colon + 1), where));
            }
            continue;
        }
        if (current->values.count(key)) throw SchemaError("duplicate key '" + key + "'", where);
        current->values.emplace(std::move(key), parse_number(value, where));
    }

    MaterialDatabase db;
    if (auto it = raw.find("global"); it != raw.end()) {
        if (auto v = it->second.values.find("vacuum_level_eV"); v != it->second.values.end()) {
            db.vacuum_level_ = v->second;
        }
    }

    for (const auto& name : order) {
        if (name == "global") continue;
        const RawSection& sec = raw.at(name);
        const std::string where = "[" + name + "] (line " + std::to_string(sec.line) + ")";
        Record rec;
        if (!sec.components.empty()) {
            double total = 0.0;
            for (const auto& [comp, frac] : sec.components) {
                auto base = raw.find(comp);
                if (base == raw.end() || !base->second.components.empty()) {
                    throw SchemaError("alloy component '" + comp + "' must be a binary section", where);
                }
                total += frac;
            }
            if (std::abs(total - 1.0) > 1e-12) throw SchemaError("alloy fractions must sum to 1", where);
            if (sec.components.size() != 2 &&
                std::any_of(sec.values.begin(), sec.values.end(),
                            [](const auto& kv) { return kv.first.starts_with(kBowingPrefix); })) {
                throw SchemaError("bowing parameters are only defined for two-component alloys", where);
            }
            // Linear interpolation of every required field.
            for (const char* key : kRequired) {
                double v = 0.0;
                for (const auto& [comp, frac] : sec.components) {
                    const auto& vals = raw.at(comp).values;
                    auto f = vals.find(key);
                    if (f == vals.end()) {
                        throw SchemaError(std::string("component '") + comp + "' lacks " + key, where);
                    }
                    v += frac * f->second;
                }
                rec.values[key] = v;
            }
            // Bowing: P = x P_A + (1-x) P_B - x (1-x) C.
            for (const auto& [key, bow] : sec.values) {
                if (!key.starts_with(kBowingPrefix)) continue;
                const std::string target = key.substr(kBowingPrefix.size());
                auto f = rec.values.find(target);
                if (f == rec.values.end()) throw SchemaError("bowing for unknown field " + target, where);
                const double x = sec.components[0].second;
                f->second -= x * (1.0 - x) * bow;
            }
            for (const auto& [key, v] : sec.values) {
                if (!key.starts_with(kBowingPrefix)) rec.values[key] = v;
            }
        } else {
            rec.values = sec.values;
        }
        for (const char* key : kRequired) {
            if (!rec.values.count(key)) throw SchemaError(std::string("missing field ") + key, where);
        }
        db.records_.emplace(name, std::move(rec));
    }

    // Validate each record once at load time.
    for (const auto& name : db.names()) db.lookup(name, 300.0).validate();
    return db;
}

MaterialDatabase MaterialDatabase::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SchemaError("cannot open material database", path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

const MaterialDatabase& MaterialDatabase::builtin() {
    static const MaterialDatabase db = parse(detail::builtin_material_database_text());
    return db;
}

bool MaterialDatabase::contains(std::string_view name) const {
    return records_.find(name) != records_.end();
}

std::vector<std::string> MaterialDatabase::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : records_) out.push_back(k);
    return out;
}

MaterialParams MaterialDatabase::lookup(std::string_view name, double T) const {
    auto it = records_.find(name);
    if (it == records_.end()) {
        throw LookupError("unknown material '" + std::string(name) + "'", std::string(name));
    }
    if (!(T >= 0.0 && T <= 400.0)) {
        throw DomainError("material lookup: temperature must lie in [0, 400] K");
    }
    const auto& v = it->second.values;
    auto get = [&](const char* key) { return v.at(key); };

    MaterialParams m;
    m.name = std::string(name);
    m.temperature_K = T;
    m.Eg0 = get("Eg0_eV");
    m.varshni_alpha = get("varshni_alpha_eV_per_K");
    m.varshni_beta = get("varshni_beta_K");
    m.Eg = varshni_gap(m.Eg0, m.varshni_alpha, m.varshni_beta, T);
    m.valence_band_offset = get("vbo_eV");
    m.electron_affinity = vacuum_level_ - m.Ec();
    m.eps_r = get("eps_r");
    m.me = get("me");
    m.mh = get("mh");
    m.radiative_B = get("radiative_B_cm3_per_s");
    m.electron_mobility = {get("mu_n_min"), get("mu_n_max"), get("mu_n_Nref"), get("mu_n_exponent"),
                           get("mu_n_gamma")};
    m.hole_mobility = {get("mu_p_min"), get("mu_p_max"), get("mu_p_Nref"), get("mu_p_exponent"),
                       get("mu_p_gamma")};
    return m;
}

MaterialParams lookup_material(std::string_view name, double T) {
    return MaterialDatabase::builtin().lookup(name, T);
}

}  // namespace qdsim
