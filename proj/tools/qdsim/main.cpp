#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "qdsim/errors.hpp"

namespace {

using namespace qdsim::cli;

void add_fit_options(CLI::App* sub, FitOptions& o) {
    sub->add_option("input", o.input, "input CSV")->required();
    sub->add_option("--tag", o.tag, "output file stem");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qdsim: gated quantum-dot diode simulator and spectroscopy fitting"};
    app.set_version_flag("--version", std::string(QDSIM_VERSION));
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    g.device = std::string(QDSIM_DEFAULT_DATA_DIR) + "/device_fig1a.json";
    const std::string data_dir = QDSIM_DEFAULT_DATA_DIR;
    app.add_option("--device", g.device, "device stack JSON")->capture_default_str();
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));

    BandedgesOptions band;
    auto* c_band = app.add_subcommand("bandedges", "band diagrams at a list of biases");
    // CLI11 would read an empty element as 0 V
    c_band->add_option("--bias", band.biases, "bias list in V, comma separated")
        ->delimiter(',')
        ->required()
        ->check([](const std::string& v) { return v.empty() ? std::string("empty bias value") : std::string(); });

    IvOptions iv;
    auto* c_iv = app.add_subcommand("iv", "current-voltage sweep");
    c_iv->add_option("--vmin", iv.v_min)->capture_default_str();
    c_iv->add_option("--vmax", iv.v_max)->capture_default_str();
    c_iv->add_option("--step", iv.step)->capture_default_str();
    c_iv->add_option("--generation", iv.generation, "optical generation rate in cm^-3 s^-1")->capture_default_str();
    c_iv->add_option("--area-mm2", iv.area_mm2, "mesa area")->capture_default_str();

    StarkOptions stark;
    stark.lines = data_dir + "/reference_lines.json";
    auto* c_stark = app.add_subcommand("stark", "Stark-shifted wavelengths and tuning ranges");
    c_stark->add_option("--lines", stark.lines)->capture_default_str();
    c_stark->add_option("--vmin", stark.v_min)->capture_default_str();
    c_stark->add_option("--vmax", stark.v_max)->capture_default_str();
    c_stark->add_option("--points", stark.points)->capture_default_str()->check(CLI::PositiveNumber);
    c_stark->add_option("--intrinsic-nm", stark.intrinsic_nm, "lever-arm thickness (default from lines file)");

    SynthmapOptions map;
    map.lines = data_dir + "/reference_lines.json";
    map.ladder = data_dir + "/reference_ladder.json";
    auto* c_map = app.add_subcommand("synthmap", "synthetic gate-voltage emission map");
    c_map->add_option("--lines", map.lines)->capture_default_str();
    c_map->add_option("--ladder", map.ladder)->capture_default_str();
    c_map->add_option("--vmin", map.v_min)->capture_default_str();
    c_map->add_option("--vmax", map.v_max)->capture_default_str();
    c_map->add_option("--vpoints", map.v_points)->capture_default_str()->check(CLI::PositiveNumber);
    c_map->add_option("--lmin", map.l_min)->capture_default_str();
    c_map->add_option("--lmax", map.l_max)->capture_default_str();
    c_map->add_option("--lpoints", map.l_points)->capture_default_str()->check(CLI::PositiveNumber);
    c_map->add_option("--linewidth-ueV", map.linewidth_ueV)->capture_default_str();
    c_map->add_option("--line-counts", map.line_counts)->capture_default_str();
    c_map->add_option("--bg-high", map.bg_high)->capture_default_str();
    c_map->add_option("--bg-low", map.bg_low)->capture_default_str();
    c_map->add_option("--bg-mid", map.bg_mid)->capture_default_str();
    c_map->add_option("--bg-width", map.bg_width)->capture_default_str();
    c_map->add_flag("--no-noise", map.no_noise, "expected counts without Poisson noise");

    auto* c_fit = app.add_subcommand("fit", "fit optical data from CSV");
    c_fit->require_subcommand(1);
    c_fit->fallthrough();
    FitOptions f_peaks, f_fss, f_power, f_g2, f_life;
    auto* c_peaks = c_fit->add_subcommand("peaks", "SNR-gated peak fit of one spectrum");
    add_fit_options(c_peaks, f_peaks);
    c_peaks->add_option("--n-peaks", f_peaks.n_peaks)->capture_default_str()->check(CLI::PositiveNumber);
    c_peaks->add_option("--shape", f_peaks.shape, "lorentzian, gaussian or pseudo-voigt")->capture_default_str();
    c_peaks->add_option("--snr-gate", f_peaks.snr_gate)->capture_default_str();
    auto* c_fss = c_fit->add_subcommand("fss", "fine-structure splitting from a polarization series");
    add_fit_options(c_fss, f_fss);
    c_fss->add_option("--shape", f_fss.shape)->capture_default_str();
    c_fss->add_option("--snr-gate", f_fss.snr_gate)->capture_default_str();
    c_fss->add_option("--target-nm", f_fss.target_nm, "fit the peak nearest this wavelength");
    auto* c_power = c_fit->add_subcommand("power", "log-log power-law slope");
    add_fit_options(c_power, f_power);
    c_power->add_option("--cutoff-uW", f_power.cutoff_uW, "saturation cutoff (default from local slope)");
    auto* c_g2 = c_fit->add_subcommand("g2", "IRF-deconvolved second-order correlation fit");
    add_fit_options(c_g2, f_g2);
    auto* c_life = c_fit->add_subcommand("lifetime", "biexponential decay fit");
    add_fit_options(c_life, f_life);

    auto* c_synth = app.add_subcommand("synthdata", "write the seeded synthetic data sets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (c_band->parsed()) return cmd_bandedges(g, band);
        if (c_iv->parsed()) return cmd_iv(g, iv);
        if (c_stark->parsed()) return cmd_stark(g, stark);
        if (c_map->parsed()) return cmd_synthmap(g, map);
        if (c_peaks->parsed()) return cmd_fit_peaks(g, f_peaks);
        if (c_fss->parsed()) return cmd_fit_fss(g, f_fss);
        if (c_power->parsed()) return cmd_fit_power(g, f_power);
        if (c_g2->parsed()) return cmd_fit_g2(g, f_g2);
        if (c_life->parsed()) return cmd_fit_lifetime(g, f_life);
        if (c_synth->parsed()) return cmd_synthdata(g);
    } catch (const qdsim::ConvergenceError& e) {
        std::cerr << "qdsim: not converged: " << e.what() << "\n";
        return kNotConverged;
    } catch (const qdsim::Error& e) {
        std::cerr << "qdsim: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "qdsim: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}
