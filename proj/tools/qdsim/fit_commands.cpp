#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "commands.hpp"
#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/spectro_fit.hpp"
#include "qdsim/synthetic.hpp"

namespace qdsim::cli {

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open input file", path);
    return in;
}

PeakShape parse_shape(const std::string& s) {
    if (s == "lorentzian") return PeakShape::Lorentzian;
    if (s == "gaussian") return PeakShape::Gaussian;
    if (s == "pseudo-voigt" || s == "pseudovoigt") return PeakShape::PseudoVoigt;
    throw LookupError("unknown peak shape '" + s + "' (lorentzian, gaussian, pseudo-voigt)", s);
}

std::string stem(const FitOptions& o, const char* kind) { return o.tag.empty() ? std::string(kind) : o.tag; }

void echo_fit(Report& rep, const FitResult& f) {
    rep.set("converged", f.converged);
    rep.set("chi2", f.chi2);
    rep.set("reduced_chi2", f.reduced_chi2);
    rep.set("dof", f.dof);
    rep.set("evaluations", f.evaluations);
    for (std::size_t i = 0; i < f.names.size(); ++i) {
        rep.set("param." + f.names[i], f.values[i]);
        rep.set("param_err." + f.names[i], f.error(f.names[i]));
    }
}

double peak_sum(const std::vector<PeakFit>& peaks, PeakShape shape, double x) {
    double s = 0.0;
    for (const auto& p : peaks) s += p.amplitude * peak_profile(shape, x, p.center, p.width, p.eta).value;
    return s;
}

}  // namespace

int cmd_fit_peaks(const GlobalOptions& g, const FitOptions& o) {
    auto in = open_input(o.input);
    const Spectrum s = read_spectrum_csv(in, o.input);
    PeakFitOptions po;
    po.shape = parse_shape(o.shape);
    po.snr_gate = o.snr_gate;
    const PeakFitReport r = fit_peaks(s, o.n_peaks, po);

    const std::string name = stem(o, "fit_peaks");
    const auto dir = output_dir(g);
    Report rep("fit peaks");
    rep.set("input", o.input);
    rep.set("n_peaks", o.n_peaks);
    rep.set("shape", o.shape);
    rep.set("snr_gate", o.snr_gate);
    rep.set("peaks_kept", r.peaks.size());
    rep.set("peaks_discarded", r.discarded.size());
    for (std::size_t i = 0; i < r.peaks.size(); ++i) {
        const auto& p = r.peaks[i];
        const std::string k = fmt::format("peak{}.", i);
        rep.set(k + "center_nm", p.center);
        rep.set(k + "center_err_nm", p.center_err);
        rep.set(k + "fwhm_nm", p.width);
        rep.set(k + "fwhm_err_nm", p.width_err);
        rep.set(k + "amplitude", p.amplitude);
        rep.set(k + "amplitude_err", p.amplitude_err);
        rep.set(k + "snr", p.snr);
    }
    for (std::size_t i = 0; i < r.discarded.size(); ++i) {
        const auto& d = r.discarded[i];
        const std::string k = fmt::format("discarded{}.", i);
        rep.set(k + "center_nm", d.peak.center);
        rep.set(k + "snr", d.peak.snr);
        rep.set(k + "reason", d.reason);
    }
    const double bg = r.peaks.empty() ? (r.discarded.empty() ? 0.0 : r.discarded.front().peak.background)
                                      : r.peaks.front().background;
    rep.set("background", bg);
    echo_fit(rep, r.fit);

    std::vector<PeakFit> all = r.peaks;
    for (const auto& d : r.discarded) all.push_back(d.peak);
    std::ostringstream csv;
    fmt::print(csv, "wavelength_nm,counts,model,residual\n");
    for (std::size_t i = 0; i < s.wavelengths.size(); ++i) {
        const double m = bg + peak_sum(all, po.shape, s.wavelengths[i]);
        fmt::print(csv, "{:.9f},{:.9g},{:.9g},{:.9g}\n", s.wavelengths[i], s.counts[i], m, s.counts[i] - m);
    }
    write_text(dir / (name + "_residuals.csv"), csv.str());
    rep.write(dir / (name + "_report.txt"));
    return r.fit.converged ? kOk : kNotConverged;
}

int cmd_fit_fss(const GlobalOptions& g, const FitOptions& o) {
    auto in = open_input(o.input);
    const auto series = read_fss_series_csv(in, o.input);
    FssOptions fo;
    fo.peak.shape = parse_shape(o.shape);
    fo.peak.snr_gate = o.snr_gate;
    fo.target_nm = o.target_nm;
    const FssResult r = extract_fss(series, fo);

    const std::string name = stem(o, "fit_fss");
    const auto dir = output_dir(g);
    Report rep("fit fss");
    rep.set("input", o.input);
    rep.set("angles", r.angles_deg.size());
    rep.set("shape", o.shape);
    rep.set("snr_gate", o.snr_gate);
    if (o.target_nm) rep.set("target_nm", *o.target_nm);
    rep.set("delta_ueV", r.delta_ueV);
    rep.set("delta_err_ueV", r.delta_err_ueV);
    rep.set("theta0_deg", r.theta0_deg);
    rep.set("theta_undefined", r.theta_undefined);
    rep.set("consistent_with_zero", r.consistent_with_zero);
    rep.set("minmax_ueV", r.minmax_ueV);
    rep.set("minmax_err_ueV", r.minmax_err_ueV);
    rep.set("mean_energy_eV", fmt::format("{:.9f}", r.mean_energy_eV));
    rep.set("mean_wavelength_nm", constants::wavelength_nm_from_energy_eV(r.mean_energy_eV));
    rep.set("reduced_chi2", r.reduced_chi2);

    std::ostringstream csv;
    fmt::print(csv, "angle_deg,energy_ueV,energy_err_ueV,model_ueV,residual_ueV\n");
    for (std::size_t i = 0; i < r.angles_deg.size(); ++i) {
        const double th = r.angles_deg[i] * constants::pi / 180.0;
        const double th0 = r.theta_undefined ? 0.0 : r.theta0_deg * constants::pi / 180.0;
        const double m = 0.5 * r.delta_ueV * std::cos(2.0 * (th - th0));
        fmt::print(csv, "{:.6g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.angles_deg[i], r.energies_ueV[i],
                   r.energy_err_ueV[i], m, r.energies_ueV[i] - m);
    }
    write_text(dir / (name + "_residuals.csv"), csv.str());
    rep.write(dir / (name + "_report.txt"));
    return kOk;
}

int cmd_fit_power(const GlobalOptions& g, const FitOptions& o) {
    auto in = open_input(o.input);
    const auto [P, I] = read_power_csv(in, o.input);
    const PowerLawResult r = fit_power_law(P, I, o.cutoff_uW);

    const std::string name = stem(o, "fit_power");
    const auto dir = output_dir(g);
    Report rep("fit power");
    rep.set("input", o.input);
    rep.set("cutoff_source", o.cutoff_uW ? "user" : "default");
    rep.set("cutoff_uW", r.cutoff_uW);
    rep.set("points_used", r.points_used);
    rep.set("slope", r.slope);
    rep.set("slope_err", r.slope_err);
    rep.set("log_prefactor", r.log_prefactor);

    std::ostringstream csv;
    fmt::print(csv, "power_uW,intensity,model,log_residual,used\n");
    for (std::size_t i = 0; i < P.size(); ++i) {
        const double m = std::exp(r.log_prefactor + r.slope * std::log(P[i]));
        const double lr = I[i] > 0.0 ? std::log(I[i]) - std::log(m) : std::nan("");
        fmt::print(csv, "{:.9g},{:.9g},{:.9g},{:.9g},{}\n", P[i], I[i], m, lr, P[i] <= r.cutoff_uW ? 1 : 0);
    }
    write_text(dir / (name + "_residuals.csv"), csv.str());
    rep.write(dir / (name + "_report.txt"));
    return kOk;
}

int cmd_fit_g2(const GlobalOptions& g, const FitOptions& o) {
    auto in = open_input(o.input);
    const G2Trace t = read_g2_csv(in, o.input);
    const G2Result r = fit_g2(t);

    const std::string name = stem(o, "fit_g2");
    const auto dir = output_dir(g);
    Report rep("fit g2");
    rep.set("input", o.input);
    rep.set("bin_width_ns", t.bin_width);
    rep.set("irf_sigma_ns", t.irf_sigma);
    rep.set("g0_raw", r.g0_raw);
    rep.set("g0_deconvolved", r.g0_deconvolved);
    rep.set("g0_err", r.g0_err);
    rep.set("tau_c_ns", r.tau_c);
    rep.set("tau_c_err_ns", r.tau_c_err);
    rep.set("plateau", r.plateau);
    rep.set("tau_unidentifiable", r.tau_unidentifiable);
    if (!r.tau_unidentifiable) echo_fit(rep, r.fit);

    std::ostringstream csv;
    fmt::print(csv, "delay_ns,coincidences,model,residual\n");
    for (std::size_t i = 0; i < t.delays.size(); ++i) {
        const double m = r.tau_unidentifiable
                             ? r.plateau
                             : r.plateau * g2_model(t.delays[i], r.g0_deconvolved, r.tau_c, t.irf_sigma, t.bin_width);
        fmt::print(csv, "{:.12g},{:.9g},{:.9g},{:.9g}\n", t.delays[i], t.coincidences[i], m, t.coincidences[i] - m);
    }
    write_text(dir / (name + "_residuals.csv"), csv.str());
    rep.write(dir / (name + "_report.txt"));
    return r.tau_unidentifiable || r.fit.converged ? kOk : kNotConverged;
}

int cmd_fit_lifetime(const GlobalOptions& g, const FitOptions& o) {
    auto in = open_input(o.input);
    const DecayTrace d = read_decay_csv(in, o.input);
    const LifetimeResult r = fit_lifetime(d);

    const std::string name = stem(o, "fit_lifetime");
    const auto dir = output_dir(g);
    Report rep("fit lifetime");
    rep.set("input", o.input);
    rep.set("t0_ns", r.t0);
    rep.set("A1", r.A1);
    rep.set("A1_err", r.A1_err);
    rep.set("tau1_ns", r.tau1);
    rep.set("tau1_err_ns", r.tau1_err);
    rep.set("A2", r.A2);
    rep.set("A2_err", r.A2_err);
    rep.set("tau2_ns", r.tau2);
    rep.set("tau2_err_ns", r.tau2_err);
    rep.set("principal_tau_ns", r.principal_tau);
    rep.set("principal_tau_err_ns", r.principal_tau_err);
    rep.set("degenerate", r.degenerate);
    rep.set("single_tau_ns", r.single_tau);
    rep.set("single_tau_err_ns", r.single_tau_err);
    rep.set("reduced_chi2_single", r.reduced_chi2_single);
    rep.set("reduced_chi2_double", r.reduced_chi2_double);
    echo_fit(rep, r.fit);

    std::ostringstream csv;
    fmt::print(csv, "time_ns,counts,model,residual\n");
    for (std::size_t i = 0; i < d.times.size(); ++i) {
        if (d.times[i] < r.t0) continue;
        const double dt = d.times[i] - r.t0;
        const double m = r.A1 * std::exp(-dt / r.tau1) + (r.A2 != 0.0 ? r.A2 * std::exp(-dt / r.tau2) : 0.0);
        fmt::print(csv, "{:.12g},{:.9g},{:.9g},{:.9g}\n", d.times[i], d.counts[i], m, d.counts[i] - m);
    }
    write_text(dir / (name + "_residuals.csv"), csv.str());
    rep.write(dir / (name + "_report.txt"));
    return r.fit.converged ? kOk : kNotConverged;
}

int cmd_synthdata(const GlobalOptions& g) {
    const auto dir = output_dir(g);
    Report rep("synthdata");
    rep.set("seed", std::to_string(g.seed));
    auto emit = [&](const std::string& file, const std::string& text, const std::string& what) {
        write_text(dir / file, text);
        rep.set("file." + file, what);
    };

    {
        G2TraceSpec spec;
        spec.irf_sigma = calibrate_irf_for_raw_minimum(spec.g0, spec.tau_c, spec.bin_width, 0.18);
        spec.plateau = 1e4;
        std::ostringstream s;
        write_g2_csv(s, synth_g2_trace(spec, g.seed));
        emit("g2_trace.csv", s.str(),
             fmt::format("g0 {} tau_c {} ns irf_sigma {:.6f} ns bin {} ns plateau {}", spec.g0, spec.tau_c,
                         spec.irf_sigma, spec.bin_width, spec.plateau));
    }

    const auto angles = [] {
        std::vector<double> a;
        for (int k = 0; k < 12; ++k) a.push_back(30.0 * k);
        return a;
    }();
    auto fss = [&](const std::string& file, double center_nm, double delta, double theta0, std::uint64_t salt) {
        FssSeriesSpec spec;
        spec.angles_deg = angles;
        spec.mean_energy_eV = constants::energy_eV_from_wavelength_nm(center_nm);
        spec.delta_ueV = delta;
        spec.theta0_deg = theta0;
        spec.wavelengths = uniform_grid(center_nm - 0.5, center_nm + 0.5, 401);
        std::ostringstream s;
        write_fss_series_csv(s, synth_fss_series(spec, g.seed ^ salt));
        emit(file, s.str(), fmt::format("12 angles, center {} nm, delta {} ueV, theta0 {} deg", center_nm, delta, theta0));
    };
    fss("fss_x0_1p70V.csv", 1529.0, 41.0, 20.0, 0x11);
    fss("fss_x0_1p15V.csv", 1529.0, 16.0, 20.0, 0x12);
    fss("fss_trion.csv", 1530.3, 0.0, 0.0, 0x13);

    {
        const double tau1 = 0.4, tau2 = 2.2, peak = 1e4;
        // 30% / 70% of the integrated area
        const double a1_over_a2 = (0.3 / 0.7) * (tau2 / tau1);
        const double A2 = peak / (1.0 + a1_over_a2), A1 = peak - A2;
        std::vector<double> times;
        for (int i = 0; i <= 600; ++i) times.push_back(0.05 * i);
        std::ostringstream s;
        write_decay_csv(s, synth_decay(times, A1, tau1, A2, tau2, 0.0, g.seed ^ 0x21));
        emit("decay.csv", s.str(), fmt::format("A1 {:.1f} tau1 {} ns, A2 {:.1f} tau2 {} ns", A1, tau1, A2, tau2));
    }

    {
        std::vector<double> P;
        for (int i = 0; i < 16; ++i) P.push_back(5.0 * std::pow(360.0 / 5.0, i / 15.0));
        struct Series {
            const char* file;
            double slope;
            double prefactor;
            std::uint64_t salt;
        };
        for (const Series& sr : {Series{"power_Xminus.csv", 0.78, 40.0, 0x31}, Series{"power_X0.csv", 0.88, 30.0, 0x33},
                                 Series{"power_XX.csv", 1.51, 1.5, 0x34}}) {
            std::ostringstream s;
            write_power_csv(s, P, synth_power_series(P, sr.prefactor, sr.slope, std::nullopt, 0.05, g.seed ^ sr.salt));
            emit(sr.file, s.str(), fmt::format("slope {}, 5% noise", sr.slope));
        }
        std::ostringstream s;
        write_power_csv(s, P, synth_power_series(P, 30.0, 0.88, 120.0, 0.05, g.seed ^ 0x32));
        emit("power_X0_saturating.csv", s.str(), "slope 0.88 saturating at 120 uW, 5% noise");
    }

    {
        const auto grid = uniform_grid(1527.5, 1533.0, 1101);
        Spectrum sp = synth_spectrum(grid,
                                     {{1529.0, 0.05, 900.0}, {1530.3, 0.05, 1200.0}, {1531.6, 0.05, 300.0}},
                                     20.0, g.seed ^ 0x41);
        sp.gate_V = 1.07;
        std::ostringstream s;
        write_spectrum_csv(s, sp);
        emit("spectrum_1p07V.csv", s.str(), "three lines at 1529.0 / 1530.3 / 1531.6 nm, background 20");
    }

    rep.write(dir / "synthdata_report.txt");
    return kOk;
}

}  // namespace qdsim::cli
