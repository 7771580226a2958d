#include <cctype>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "qdsim/errors.hpp"
#include "qdsim/spectro_fit.hpp"

namespace qdsim {

namespace {

struct CsvTable {
    std::map<std::string, std::string> meta;
    std::vector<std::vector<double>> rows;
};

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_double(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// One optional non-numeric header row is allowed before the data.
CsvTable read_table(std::istream& in, const std::string& source, std::size_t min_columns) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string s = trim(line);
        if (s.empty()) continue;
        if (s[0] == '#') {
            const auto eq = s.find('=');
            if (eq != std::string::npos) t.meta[trim(s.substr(1, eq - 1))] = trim(s.substr(eq + 1));
            continue;
        }
        const auto cells = split(s);
        std::vector<double> row;
        bool numeric = true;
        for (const auto& c : cells) {
            double v;
            if (!parse_double(c, v)) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        const std::string where = fmt::format("{}:{}", source, lineno);
        if (!numeric) {
            if (header_seen || !t.rows.empty()) throw SchemaError("non-numeric value in data row", where);
            header_seen = true;
            continue;
        }
        if (row.size() < min_columns) {
            throw SchemaError(fmt::format("expected at least {} columns, found {}", min_columns, row.size()), where);
        }
        if (columns == 0) columns = row.size();
        if (row.size() != columns) {
            throw SchemaError(fmt::format("expected {} columns, found {}", columns, row.size()), where);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty()) throw SchemaError("no data rows", source);
    return t;
}

std::optional<double> meta_number(const CsvTable& t, const std::string& key, const std::string& source) {
    auto it = t.meta.find(key);
    if (it == t.meta.end()) return std::nullopt;
    double v;
    if (!parse_double(it->second, v)) throw SchemaError("metadata '" + key + "' is not a number", source);
    return v;
}

template <class F>
auto validated(F&& make, const std::string& source) {
    try {
        return make();
    } catch (const DomainError& e) {
        throw SchemaError(e.what(), source);
    }
}

void print_optional(std::ostream& out, const char* key, const std::optional<double>& v) {
    if (v) fmt::print(out, "# {} = {:.9g}\n", key, *v);
}

}  // namespace

Spectrum read_spectrum_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_table(in, source, 2);
    return validated(
        [&] {
            Spectrum s;
            for (const auto& r : t.rows) {
                s.wavelengths.push_back(r[0]);
                s.counts.push_back(r[1]);
            }
            s.power_uW = meta_number(t, "power_uW", source);
            s.gate_V = meta_number(t, "gate_V", source);
            s.polarizer_deg = meta_number(t, "polarizer_deg", source);
            s.validate();
            return s;
        },
        source);
}

G2Trace read_g2_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_table(in, source, 2);
    return validated(
        [&] {
            G2Trace g;
            for (const auto& r : t.rows) {
                g.delays.push_back(r[0]);
                g.coincidences.push_back(r[1]);
            }
            const auto bw = meta_number(t, "bin_width_ns", source);
            if (!bw) throw SchemaError("missing metadata 'bin_width_ns'", source);
            g.bin_width = *bw;
            g.irf_sigma = meta_number(t, "irf_sigma_ns", source).value_or(0.0);
            g.validate();
            return g;
        },
        source);
}

DecayTrace read_decay_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_table(in, source, 2);
    return validated(
        [&] {
            DecayTrace d;
            for (const auto& r : t.rows) {
                d.times.push_back(r[0]);
                d.counts.push_back(r[1]);
            }
            d.irf_sigma = meta_number(t, "irf_sigma_ns", source).value_or(0.0);
            d.validate();
            return d;
        },
        source);
}

std::pair<std::vector<double>, std::vector<double>> read_power_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_table(in, source, 2);
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& r : t.rows) {
        out.first.push_back(r[0]);
        out.second.push_back(r[1]);
    }
    return out;
}

std::vector<Spectrum> read_fss_series_csv(std::istream& in, const std::string& source) {
    const CsvTable t = read_table(in, source, 2);
    auto it = t.meta.find("angles_deg");
    if (it == t.meta.end()) throw SchemaError("missing metadata 'angles_deg'", source);
    std::vector<double> angles;
    for (const auto& cell : split(it->second)) {
        double v;
        if (!parse_double(cell, v)) throw SchemaError("angles_deg must be a comma-separated list", source);
        angles.push_back(v);
    }
    if (angles.size() + 1 != t.rows.front().size()) {
        throw SchemaError(fmt::format("{} angles for {} count columns", angles.size(), t.rows.front().size() - 1),
                          source);
    }
    return validated(
        [&] {
            std::vector<Spectrum> series(angles.size());
            for (std::size_t a = 0; a < angles.size(); ++a) {
                series[a].polarizer_deg = angles[a];
                for (const auto& r : t.rows) {
                    series[a].wavelengths.push_back(r[0]);
                    series[a].counts.push_back(r[a + 1]);
                }
                series[a].validate();
            }
            return series;
        },
        source);
}

void write_spectrum_csv(std::ostream& out, const Spectrum& s) {
    print_optional(out, "power_uW", s.power_uW);
    print_optional(out, "gate_V", s.gate_V);
    print_optional(out, "polarizer_deg", s.polarizer_deg);
    fmt::print(out, "wavelength_nm,counts\n");
    for (std::size_t i = 0; i < s.wavelengths.size(); ++i) {
        fmt::print(out, "{:.9f},{:.9g}\n", s.wavelengths[i], s.counts[i]);
    }
}

void write_g2_csv(std::ostream& out, const G2Trace& g) {
    fmt::print(out, "# bin_width_ns = {:.9g}\n# irf_sigma_ns = {:.9g}\n", g.bin_width, g.irf_sigma);
    fmt::print(out, "delay_ns,coincidences\n");
    for (std::size_t i = 0; i < g.delays.size(); ++i) fmt::print(out, "{:.12g},{:.9g}\n", g.delays[i], g.coincidences[i]);
}

void write_decay_csv(std::ostream& out, const DecayTrace& d) {
    fmt::print(out, "# irf_sigma_ns = {:.9g}\n", d.irf_sigma);
    fmt::print(out, "time_ns,counts\n");
    for (std::size_t i = 0; i < d.times.size(); ++i) fmt::print(out, "{:.12g},{:.9g}\n", d.times[i], d.counts[i]);
}

void write_power_csv(std::ostream& out, const std::vector<double>& P, const std::vector<double>& I) {
    fmt::print(out, "power_uW,intensity\n");
    for (std::size_t i = 0; i < P.size(); ++i) fmt::print(out, "{:.9g},{:.9g}\n", P[i], I[i]);
}

void write_fss_series_csv(std::ostream& out, const std::vector<Spectrum>& series) {
    if (series.empty()) return;
    fmt::print(out, "# angles_deg = ");
    for (std::size_t a = 0; a < series.size(); ++a) {
        fmt::print(out, "{}{:.6g}", a ? "," : "", series[a].polarizer_deg.value_or(0.0));
    }
    fmt::print(out, "\nwavelength_nm");
    for (std::size_t a = 0; a < series.size(); ++a) fmt::print(out, ",counts_{}", a);
    fmt::print(out, "\n");
    for (std::size_t i = 0; i < series.front().wavelengths.size(); ++i) {
        fmt::print(out, "{:.9f}", series.front().wavelengths[i]);
        for (const auto& s : series) fmt::print(out, ",{:.9g}", s.counts[i]);
        fmt::print(out, "\n");
    }
}

}  // namespace qdsim
