#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "commands.hpp"
#include "qdsim/electrostatics.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/qd_model.hpp"
#include "qdsim/transport.hpp"

namespace qdsim::cli {

namespace {

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{:.6g}", i ? "," : "", v[i]);
    return s;
}

std::vector<double> linear_range(double a, double b, int n) {
    if (n < 1) throw DomainError("grid needs at least one point");
    if (n == 1 || a == b) return {a};
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
    return v;
}

std::string band_file_name(double bias) {
    if (bias == 0.0) bias = 0.0;  // drop the sign of -0
    return fmt::format("band_{:+.3f}V.csv", bias);
}

}  // namespace

int cmd_bandedges(const GlobalOptions& g, const BandedgesOptions& o) {
    if (o.biases.empty()) throw DomainError("bandedges: empty bias list");
    const LayerStack stack = load_stack(g.device);
    const Mesh1D mesh = build_mesh(stack);
    const auto dir = output_dir(g);

    struct Outcome {
        std::optional<BandDiagram> diagram;
        std::string error;
        double last_converged = 0.0;
    };
    std::vector<Outcome> results(o.biases.size());
    auto run = [&](std::size_t k) {
        try {
            results[k].diagram = solve_bias(stack, mesh, o.biases[k]);
        } catch (const ConvergenceError& e) {
            results[k].error = e.what();
            results[k].last_converged = e.last_converged();
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(g.threads, static_cast<unsigned>(o.biases.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t k = t; k < o.biases.size(); k += threads) run(k);
        });
    }
    for (auto& th : pool) th.join();

    std::ostringstream summary;
    fmt::print(summary, "# qdsim bandedges summary\n# device = {}\n", g.device);
    fmt::print(summary, "bias_V,converged,iterations,residual_norm,intrinsic_drop_V");
    const std::size_t n_barriers =
        results.front().diagram ? barrier_maxima(stack, *results.front().diagram).size() : 0;
    for (std::size_t b = 0; b < n_barriers; ++b) fmt::print(summary, ",barrier{}_x_nm,barrier{}_Ec_eV", b, b);
    fmt::print(summary, "\n");

    Report rep("bandedges");
    rep.set("device", g.device);
    rep.set("nodes", mesh.size());
    rep.set("biases_V", join(o.biases));
    std::size_t converged = 0;
    for (std::size_t k = 0; k < o.biases.size(); ++k) {
        const auto& r = results[k];
        if (!r.diagram) {
            fmt::print(summary, "{:.6f},false,0,nan,nan", o.biases[k]);
            for (std::size_t b = 0; b < n_barriers; ++b) fmt::print(summary, ",nan,nan");
            fmt::print(summary, "\n");
            rep.set(fmt::format("error.{:.3f}", o.biases[k]), r.error);
            rep.set(fmt::format("last_converged_V.{:.3f}", o.biases[k]), r.last_converged);
            continue;
        }
        ++converged;
        const BandDiagram& d = *r.diagram;
        const std::string name = band_file_name(o.biases[k]);
        std::ostringstream csv;
        write_band_csv(csv, d);
        write_text(dir / name, csv.str());
        fmt::print(summary, "{:.6f},true,{},{:.3e},{:.9f}", d.bias, d.iterations, d.residual_norm,
                   potential_drop(d, stack.intrinsic_start(), stack.intrinsic_end()));
        const auto bars = barrier_maxima(stack, d);
        for (std::size_t b = 0; b < n_barriers; ++b) {
            fmt::print(summary, ",{:.6f},{:.9f}", bars[b].position_nm, bars[b].Ec_max);
        }
        fmt::print(summary, "\n");
        rep.set(fmt::format("file.{:.3f}", o.biases[k]), name);
    }
    write_text(dir / "bandedges_summary.csv", summary.str());
    rep.set("converged_points", converged);
    rep.set("all_converged", converged == o.biases.size());
    rep.write(dir / "bandedges_report.txt");
    return converged == o.biases.size() ? kOk : kNotConverged;
}

int cmd_iv(const GlobalOptions& g, const IvOptions& o) {
    if (o.v_min > o.v_max) throw DomainError("iv: --vmin must not exceed --vmax");
    if (o.v_min != o.v_max && !(o.step > 0.0)) throw DomainError("iv: --step must be positive");
    if (!(o.area_mm2 > 0.0)) throw DomainError("iv: --area-mm2 must be positive");
    std::vector<double> biases;
    if (o.v_min == o.v_max) {
        biases.push_back(o.v_min);
    } else {
        const int n = static_cast<int>(std::floor((o.v_max - o.v_min) / o.step + 1e-9)) + 1;
        for (int i = 0; i < n; ++i) biases.push_back(o.v_min + i * o.step);
    }
    const LayerStack stack = load_stack(g.device);
    const Mesh1D mesh = build_mesh(stack);
    DriftDiffusionOptions dd;
    dd.generation_rate = o.generation;
    const IVCurve curve = iv_sweep_outward(stack, mesh, biases, dd, o.area_mm2 * 1e-2);

    const auto dir = output_dir(g);
    std::ostringstream csv;
    write_iv_csv(csv, curve);
    write_text(dir / "iv.csv", csv.str());

    Report rep("iv");
    rep.set("device", g.device);
    rep.set("v_min", o.v_min);
    rep.set("v_max", o.v_max);
    rep.set("step", o.step);
    rep.set("generation_cm3_s", o.generation);
    rep.set("area_mm2", o.area_mm2);
    rep.set("points", curve.points.size());
    std::size_t converged = 0;
    double worst_continuity = 0.0;
    for (const auto& p : curve.points) {
        if (p.converged) {
            ++converged;
            if (p.bias != 0.0) worst_continuity = std::max(worst_continuity, p.continuity_error);
        }
    }
    rep.set("converged_points", converged);
    rep.set("max_continuity_error", worst_continuity);
    rep.write(dir / "iv_report.txt");
    return converged == curve.points.size() ? kOk : kNotConverged;
}

int cmd_stark(const GlobalOptions& g, const StarkOptions& o) {
    if (o.v_min > o.v_max) throw DomainError("stark: --vmin must not exceed --vmax");
    const ReferenceModel model = load_reference_lines(o.lines);
    const double di = o.intrinsic_nm.value_or(model.intrinsic_nm);
    const auto voltages = linear_range(o.v_min, o.v_max, o.points);
    const auto dir = output_dir(g);
    std::ostringstream csv;
    write_stark_csv(csv, model.lines, voltages, di);
    write_text(dir / "stark.csv", csv.str());

    Report rep("stark");
    rep.set("lines", o.lines);
    rep.set("v_min", o.v_min);
    rep.set("v_max", o.v_max);
    rep.set("intrinsic_nm", di);
    for (const auto& l : model.lines) {
        const std::string s(species_name(l.species));
        rep.set("tuning_range_nm." + s, fmt::format("{:.6f}", tuning_range(l, o.v_min, o.v_max, di)));
        rep.set("E0_eV." + s, fmt::format("{:.9f}", l.E0));
        rep.set("dipole_e_nm." + s, l.dipole);
        rep.set("polarizability_ueV_per_kVcm2." + s, l.polarizability);
        rep.set("wavelength_at_vmin_nm." + s, fmt::format("{:.6f}", line_wavelength_nm(l, o.v_min, di)));
        rep.set("wavelength_at_vmax_nm." + s, fmt::format("{:.6f}", line_wavelength_nm(l, o.v_max, di)));
    }
    rep.write(dir / "stark_report.txt");
    return kOk;
}

int cmd_synthmap(const GlobalOptions& g, const SynthmapOptions& o) {
    const ReferenceModel model = load_reference_lines(o.lines);
    const ChargeLadder ladder = load_charge_ladder(o.ladder);
    MapOptions mo;
    mo.linewidth_ueV = o.linewidth_ueV;
    mo.line_counts = o.line_counts;
    mo.background = {o.bg_high, o.bg_low, o.bg_mid, o.bg_width};
    mo.poisson_noise = !o.no_noise;
    mo.seed = g.seed;
    mo.threads = g.threads;
    mo.intrinsic_nm = model.intrinsic_nm;
    const auto V = linear_range(o.v_min, o.v_max, o.v_points);
    const auto L = linear_range(o.l_min, o.l_max, o.l_points);
    const EmissionMap map = synth_emission_map(model.lines, ladder, V, L, mo);

    const auto dir = output_dir(g);
    std::ostringstream csv;
    write_map_csv(csv, map);
    write_text(dir / "map.csv", csv.str());

    Report rep("synthmap");
    rep.set("lines", o.lines);
    rep.set("ladder", o.ladder);
    rep.set("seed", std::to_string(g.seed));
    rep.set("poisson_noise", mo.poisson_noise);
    rep.set("voltage_points", V.size());
    rep.set("wavelength_points", L.size());
    rep.set("linewidth_ueV", o.linewidth_ueV);
    std::map<std::string, std::size_t> columns;
    for (const auto& set : map.column_species) {
        for (Species s : set) ++columns[std::string(species_name(s))];
    }
    for (const auto& [s, n] : columns) rep.set("columns_with." + s, n);
    rep.write(dir / "synthmap_report.txt");
    return kOk;
}

}  // namespace qdsim::cli
