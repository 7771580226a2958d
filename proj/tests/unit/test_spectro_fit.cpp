#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "process.hpp"
#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"
#include "qdsim/spectro_fit.hpp"
#include "qdsim/synthetic.hpp"

using namespace qdsim;

namespace {

std::vector<double> angles(double step, int n) {
    std::vector<double> a;
    for (int k = 0; k < n; ++k) a.push_back(step * k);
    return a;
}

FssSeriesSpec fss_spec(double delta, double theta0 = 20.0) {
    FssSeriesSpec s;
    s.angles_deg = angles(30.0, 12);
    s.mean_energy_eV = constants::energy_eV_from_wavelength_nm(1529.0);
    s.delta_ueV = delta;
    s.theta0_deg = theta0;
    s.wavelengths = uniform_grid(1528.5, 1529.5, 401);
    return s;
}

std::vector<double> log_powers() {
    std::vector<double> p;
    for (int k = 0; k < 16; ++k) p.push_back(5.0 * std::pow(72.0, k / 15.0));
    return p;
}

G2TraceSpec calibrated_g2() {
    G2TraceSpec g;
    g.irf_sigma = calibrate_irf_for_raw_minimum(g.g0, g.tau_c, g.bin_width, 0.18);
    g.plateau = 1e4;
    return g;
}

std::vector<double> decay_times() {
    std::vector<double> t;
    for (int k = 0; k <= 600; ++k) t.push_back(0.05 * k);
    return t;
}

template <class T>
T read_shipped(const char* name, T (*reader)(std::istream&, const std::string&)) {
    const auto path = test::data_path("synthetic") / name;
    std::ifstream in(path);
    REQUIRE(in.good());
    return reader(in, path.string());
}

double poisson_nll(const Spectrum& s, const std::vector<double>& p, PeakShape shape) {
    double nll = 0.0;
    for (std::size_t i = 0; i < s.wavelengths.size(); ++i) {
        double mu = p[0];
        for (std::size_t k = 1; k + 2 < p.size(); k += 3) mu += p[k + 2] * peak_profile(shape, s.wavelengths[i], p[k], p[k + 1]).value;
        nll += mu - s.counts[i] * std::log(mu);
    }
    return nll;
}

}  // namespace

TEST_CASE("peak profiles have unit height and the stated FWHM") {
    for (PeakShape sh : {PeakShape::Lorentzian, PeakShape::Gaussian, PeakShape::PseudoVoigt}) {
        CHECK(peak_profile(sh, 1530.0, 1530.0, 0.1).value == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(peak_profile(sh, 1530.05, 1530.0, 0.1).value == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(peak_profile(sh, 1529.95, 1530.0, 0.1).value == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("profile derivatives against central differences") {
    const double h = 1e-7;
    for (PeakShape sh : {PeakShape::Lorentzian, PeakShape::Gaussian, PeakShape::PseudoVoigt}) {
        for (double x : {1529.9, 1529.97, 1530.0, 1530.02, 1530.2}) {
            const double c = 1530.0, w = 0.07, eta = 0.3;
            const ProfileValue pv = peak_profile(sh, x, c, w, eta);
            const double dc = (peak_profile(sh, x, c + h, w, eta).value - peak_profile(sh, x, c - h, w, eta).value) / (2 * h);
            const double dw = (peak_profile(sh, x, c, w + h, eta).value - peak_profile(sh, x, c, w - h, eta).value) / (2 * h);
            CHECK(pv.d[0] == doctest::Approx(dc).epsilon(1e-5).scale(1.0));
            CHECK(pv.d[1] == doctest::Approx(dw).epsilon(1e-5).scale(1.0));
            if (sh == PeakShape::PseudoVoigt) {
                const double de = (peak_profile(sh, x, c, w, eta + h).value - peak_profile(sh, x, c, w, eta - h).value) / (2 * h);
                CHECK(pv.d[2] == doctest::Approx(de).epsilon(1e-5).scale(1.0));
            }
        }
    }
}

TEST_CASE("noiseless single peak is recovered to 1e-6") {
    const auto grid = uniform_grid(1528.0, 1530.0, 401);
    for (PeakShape sh : {PeakShape::Lorentzian, PeakShape::Gaussian}) {
        const Spectrum s = synth_spectrum(grid, {{1529.0123, 0.05, 900.0}}, 20.0, std::nullopt, sh);
        PeakFitOptions o;
        o.shape = sh;
        const PeakFitReport r = fit_peaks(s, 1, o);
        REQUIRE(r.peaks.size() == 1);
        const PeakFit& p = r.peaks[0];
        CHECK(r.fit.converged);
        CHECK(std::abs(p.center - 1529.0123) < 1e-6);
        CHECK(std::abs(p.width - 0.05) < 1e-6);
        CHECK(std::abs(p.amplitude / 900.0 - 1.0) < 1e-6);
        CHECK(std::abs(p.background / 20.0 - 1.0) < 1e-6);
        CHECK(p.snr == doctest::Approx(45.0).epsilon(1e-6));
    }
}

TEST_CASE("amplitude scaling leaves centers and widths unchanged") {
    const auto grid = uniform_grid(1528.0, 1530.0, 401);
    const Spectrum s = synth_spectrum(grid, {{1529.0, 0.05, 900.0}, {1529.4, 0.08, 400.0}}, 20.0, std::nullopt);
    Spectrum big = s;
    for (double& c : big.counts) c *= 7.5;
    const auto a = fit_peaks(s, 2), b = fit_peaks(big, 2);
    REQUIRE(a.peaks.size() == 2);
    REQUIRE(b.peaks.size() == 2);
    for (int k = 0; k < 2; ++k) {
        CHECK(b.peaks[k].center == doctest::Approx(a.peaks[k].center).epsilon(1e-9));
        CHECK(b.peaks[k].width == doctest::Approx(a.peaks[k].width).epsilon(1e-7));
        CHECK(b.peaks[k].amplitude == doctest::Approx(7.5 * a.peaks[k].amplitude).epsilon(1e-7));
    }
}

TEST_CASE("three-peak spectrum: each center minimises the Poisson likelihood") {
    const Spectrum s = read_shipped("spectrum_1p07V.csv", &read_spectrum_csv);
    CHECK(s.gate_V.value_or(0.0) == doctest::Approx(1.07));
    const PeakFitReport r = fit_peaks(s, 3);
    REQUIRE(r.peaks.size() == 3);
    CHECK(r.fit.converged);
    std::vector<double> p{r.peaks[0].background};
    for (const auto& pk : r.peaks) {
        p.push_back(pk.center);
        p.push_back(pk.width);
        p.push_back(pk.amplitude);
    }
    const double truth[] = {1529.0, 1530.3, 1531.6};
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(r.peaks[k].center - truth[k]) < 4.0 * r.peaks[k].center_err);
        // one-dimensional grid search, other parameters held at the fit
        const double step = 2e-5;
        double best_c = 0.0, best = INFINITY;
        for (int j = -500; j <= 500; ++j) {
            std::vector<double> q = p;
            q[1 + 3 * k] = p[1 + 3 * k] + j * step;
            const double v = poisson_nll(s, q, PeakShape::Lorentzian);
            if (v < best) {
                best = v;
                best_c = q[1 + 3 * k];
            }
        }
        CHECK(std::abs(best_c - r.peaks[k].center) <= step);
    }
}

TEST_CASE("SNR gate") {
    const auto grid = uniform_grid(1528.0, 1530.0, 401);
    const Spectrum s = synth_spectrum(grid, {{1528.8, 0.05, 900.0}, {1529.3, 0.05, 50.0}}, 20.0, std::nullopt);
    const auto strict = fit_peaks(s, 2);
    REQUIRE(strict.peaks.size() == 1);
    REQUIRE(strict.discarded.size() == 1);
    CHECK(strict.discarded[0].peak.snr == doctest::Approx(2.5).epsilon(1e-4));
    CHECK(strict.discarded[0].reason.find("below gate") != std::string::npos);
    PeakFitOptions loose;
    loose.snr_gate = 2.0;
    CHECK(fit_peaks(s, 2, loose).peaks.size() == 2);
}

TEST_CASE("FSS recovery at 1e3 counts") {
    for (double delta : {0.0, 5.0, 16.0, 41.0}) {
        int within = 0, covered = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const FssResult r = extract_fss(synth_fss_series(fss_spec(delta), 1000 + trial));
            within += std::abs(r.delta_ueV - delta) < 0.5;
            covered += std::abs(r.delta_ueV - delta) < 3.0 * r.delta_err_ueV;
            if (delta == 0.0 && trial < 3) CHECK(r.consistent_with_zero);
        }
        MESSAGE("delta " << delta << ": " << within << "/100 within 0.5 ueV, " << covered << "/100 within 3 sigma");
        CHECK(within >= 95);
        if (delta > 0.0) CHECK(covered >= 95);
    }
}

TEST_CASE("FSS orientation and the two estimators") {
    const FssResult r = extract_fss(synth_fss_series(fss_spec(41.0, 0.0), 77));
    CHECK(!r.consistent_with_zero);
    CHECK(!r.theta_undefined);
    const double dth = std::remainder(r.theta0_deg - 0.0, 180.0);
    CHECK(std::abs(dth) < 2.0);
    CHECK(r.angles_deg.size() == 12);
    const double s = std::hypot(r.delta_err_ueV, r.minmax_err_ueV);
    MESSAGE("cosine " << r.delta_ueV << " min-max " << r.minmax_ueV << " combined sigma " << s);
    CHECK(std::abs(r.delta_ueV - r.minmax_ueV) < 2.0 * s);
    const FssResult tilted = extract_fss(synth_fss_series(fss_spec(41.0, 70.0), 78));
    CHECK(std::abs(std::remainder(tilted.theta0_deg - 70.0, 180.0)) < 2.0);
}

TEST_CASE("FSS input errors") {
    FssSeriesSpec few = fss_spec(16.0);
    few.angles_deg = angles(30.0, 7);
    CHECK_THROWS_AS((void)extract_fss(synth_fss_series(few, 1)), InsufficientDataError);
    FssSeriesSpec narrow = fss_spec(16.0);
    narrow.angles_deg = angles(20.0, 8);  // spans 140 deg
    CHECK_THROWS_AS((void)extract_fss(synth_fss_series(narrow, 1)), InsufficientDataError);

    auto series = synth_fss_series(fss_spec(16.0), 5);
    const auto flat = synth_spectrum(series[0].wavelengths, {}, 10.0, 99);
    for (int k : {2, 7}) series[k].counts = flat.counts;
    try {
        (void)extract_fss(series);
        FAIL("expected MissingPeakError");
    } catch (const MissingPeakError& e) {
        CHECK(e.angles() == std::vector<double>{60.0, 210.0});
        CHECK(std::string(e.what()).find("60") != std::string::npos);
    }
}

TEST_CASE("shipped trion series is consistent with zero splitting") {
    const auto series = read_shipped("fss_trion.csv", &read_fss_series_csv);
    const FssResult r = extract_fss(series);
    CHECK(r.consistent_with_zero);
    CHECK(r.delta_ueV < 0.5);
    const FssResult x = extract_fss(read_shipped("fss_x0_1p70V.csv", &read_fss_series_csv));
    CHECK(std::abs(x.delta_ueV - 41.0) < 0.5);
    const FssResult y = extract_fss(read_shipped("fss_x0_1p15V.csv", &read_fss_series_csv));
    CHECK(std::abs(y.delta_ueV - 16.0) < 0.5);
}

TEST_CASE("power law") {
    const auto P = log_powers();
    const auto linear = synth_power_series(P, 3.0, 1.0, std::nullopt, 0.0, std::nullopt);
    const PowerLawResult one = fit_power_law(P, linear);
    CHECK(std::abs(one.slope - 1.0) < 1e-6);
    CHECK(std::abs(one.log_prefactor - std::log(3.0)) < 1e-6);
    CHECK(one.points_used == 16);

    CHECK_THROWS_AS((void)fit_power_law({1.0, 2.0}, {1.0, 2.0}), InsufficientDataError);
    CHECK_THROWS((void)fit_power_law({1.0, 2.0, 3.0}, {1.0, -2.0, 3.0}));

    int covered = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto I = synth_power_series(P, 30.0, 0.88, std::nullopt, 0.05, 300 + trial);
        const PowerLawResult r = fit_power_law(P, I);
        covered += std::abs(r.slope - 0.88) < 3.0 * r.slope_err;
    }
    MESSAGE(covered << "/100 slopes within 3 sigma");
    CHECK(covered >= 95);

    const auto sat = synth_power_series(P, 30.0, 0.88, 120.0, 0.0, std::nullopt);
    const double cut = default_saturation_cutoff(P, sat);
    CHECK(cut < P.back());
    CHECK(cut > P.front());
    const PowerLawResult clipped = fit_power_law(P, sat);
    CHECK(clipped.points_used < 16);
    CHECK(clipped.slope < 0.88);
}

TEST_CASE("shipped power series: slopes and XX/X0 ratio") {
    auto slope = [](const char* name) {
        const auto path = test::data_path("synthetic") / name;
        std::ifstream in(path);
        REQUIRE(in.good());
        const auto [P, I] = read_power_csv(in, path.string());
        return fit_power_law(P, I);
    };
    const auto xm = slope("power_Xminus.csv"), x0 = slope("power_X0.csv"), xx = slope("power_XX.csv");
    CHECK(std::abs(xm.slope - 0.78) < 3.0 * xm.slope_err);
    CHECK(std::abs(x0.slope - 0.88) < 3.0 * x0.slope_err);
    CHECK(std::abs(xx.slope - 1.51) < 3.0 * xx.slope_err);
    const double ratio = xx.slope / x0.slope;
    CHECK(ratio >= 1.6);
    CHECK(ratio <= 1.9);
}

TEST_CASE("g2 model against closed forms") {
    const double tau = 2.2;
    for (double t : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
        CHECK(g2_model(t, 0.0, tau, 0.0, 0.0) == doctest::Approx(1.0 - std::exp(-std::abs(t) / tau)).epsilon(1e-14));
    }
    const double b = 0.256;
    const double box = 2.0 * tau / b * (1.0 - std::exp(-b / (2.0 * tau)));
    CHECK(g2_model(0.0, 0.1, tau, 0.0, b) == doctest::Approx(1.0 - 0.9 * box).epsilon(1e-10));

    // Gaussian-blurred two-sided exponential by brute-force quadrature
    const double sigma = 0.45;
    for (double t : {0.0, 0.3, 1.5}) {
        double sum = 0.0;
        const double h = 1e-3;
        for (double s = -40.0; s <= 40.0; s += h) {
            sum += std::exp(-std::abs(s) / tau) * std::exp(-0.5 * (t - s) * (t - s) / (sigma * sigma));
        }
        sum *= h / (sigma * std::sqrt(2.0 * constants::pi));
        CHECK(g2_model(t, 0.0, tau, sigma, 0.0) == doctest::Approx(1.0 - sum).epsilon(1e-7));
    }
    CHECK(g2_model(0.0, 0.3, 0.0, 0.0, 0.0) == 1.0);

    const G2TraceSpec g = calibrated_g2();
    CHECK(g2_model(0.0, g.g0, g.tau_c, g.irf_sigma, g.bin_width) == doctest::Approx(0.18).epsilon(1e-10));
    CHECK_THROWS_AS((void)calibrate_irf_for_raw_minimum(0.04, 2.2, 0.256, 0.01), DomainError);
}

TEST_CASE("g2 deconvolution on the calibrated trace") {
    const G2Trace shipped = read_shipped("g2_trace.csv", &read_g2_csv);
    const G2Result r = fit_g2(shipped);
    MESSAGE("raw " << r.g0_raw << " deconvolved " << r.g0_deconvolved << " +- " << r.g0_err << " tau " << r.tau_c);
    CHECK(std::abs(r.g0_raw - 0.18) <= 0.01);
    CHECK(std::abs(r.g0_deconvolved - 0.04) <= 0.02);
    CHECK(r.g0_deconvolved <= r.g0_raw);
    CHECK(!r.tau_unidentifiable);
    CHECK(std::abs(r.tau_c - 2.2) < 3.0 * r.tau_c_err);

    // coverage of the quoted g0 error
    const G2TraceSpec g = calibrated_g2();
    int covered = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const G2Result t = fit_g2(synth_g2_trace(g, 2000 + trial));
        covered += std::abs(t.g0_deconvolved - g.g0) < 3.0 * t.g0_err;
        CHECK(t.g0_deconvolved <= t.g0_raw);
    }
    MESSAGE(covered << "/100 within 3 sigma");
    CHECK(covered >= 95);
}

TEST_CASE("g2 zero IRF, flat trace and short window") {
    G2TraceSpec z;
    z.plateau = 1e4;
    const G2Result r = fit_g2(synth_g2_trace(z, 11));
    CHECK(std::abs(r.g0_deconvolved - 0.04) <= 0.01);

    G2TraceSpec flat;
    flat.g0 = 1.0;
    const G2Result f = fit_g2(synth_g2_trace(flat, 12));
    CHECK(f.tau_unidentifiable);

    G2TraceSpec shortw;
    shortw.half_bins = 20;
    CHECK_THROWS_AS((void)fit_g2(synth_g2_trace(shortw, std::nullopt)), NormalizationError);

    G2TraceSpec point = z;
    point.bin_width = 0.0;
    const G2Trace pt = synth_g2_trace(point, std::nullopt);
    CHECK(pt.bin_width == 0.0);
    CHECK(std::abs(fit_g2(pt).g0_deconvolved - 0.04) < 1e-4);
}

TEST_CASE("biexponential lifetime") {
    const DecayTrace shipped = read_shipped("decay.csv", &read_decay_csv);
    const LifetimeResult r = fit_lifetime(shipped);
    MESSAGE("tau1 " << r.tau1 << " +- " << r.tau1_err << ", tau2 " << r.tau2 << " +- " << r.tau2_err);
    CHECK(!r.degenerate);
    CHECK(r.tau1 <= r.tau2);
    CHECK(std::abs(r.tau2 - 2.2) < 3.0 * r.tau2_err);
    CHECK(r.principal_tau == r.tau2);

    const auto t = decay_times();
    const LifetimeResult clean = fit_lifetime(synth_decay(t, 3000.0, 0.4, 7000.0, 2.2, 0.0, std::nullopt));
    CHECK(clean.tau1 == doctest::Approx(0.4).epsilon(1e-5));
    CHECK(clean.tau2 == doctest::Approx(2.2).epsilon(1e-5));

    int covered = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const LifetimeResult x = fit_lifetime(synth_decay(t, 3000.0, 0.4, 7000.0, 2.2, 0.0, 700 + trial));
        covered += std::abs(x.tau2 - 2.2) < 3.0 * x.tau2_err;
    }
    MESSAGE(covered << "/100 within 3 sigma");
    CHECK(covered >= 95);

    const LifetimeResult single = fit_lifetime(synth_decay(t, 1e4, 2.2, 0.0, 1.0, 0.0, 5));
    CHECK(single.degenerate);
    CHECK(std::abs(single.principal_tau - 2.2) < 3.0 * single.principal_tau_err);

    CHECK_THROWS_AS((void)fit_lifetime(synth_decay(t, 0.0, 1.0, 0.0, 1.0, 100.0, 6)), InsufficientDataError);
}

TEST_CASE("CSV errors name the line") {
    std::istringstream bad("wavelength_nm,counts\n1529.0,10\n1529.1,abc\n");
    try {
        (void)read_spectrum_csv(bad, "spec.csv");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.location() == "spec.csv:3");
    }
    std::istringstream ragged("1529.0,10\n1529.1,11,12\n");
    CHECK_THROWS_AS((void)read_spectrum_csv(ragged), SchemaError);
    std::istringstream empty("# nothing\n");
    CHECK_THROWS_AS((void)read_spectrum_csv(empty), SchemaError);
    std::istringstream no_bin("delay_ns,coincidences\n0,1\n1,2\n");
    CHECK_THROWS_AS((void)read_g2_csv(no_bin), SchemaError);
}

TEST_CASE("CSV write then read round-trips") {
    const Spectrum s = synth_spectrum(uniform_grid(1528.0, 1530.0, 41), {{1529.0, 0.05, 900.0}}, 20.0, 3);
    std::stringstream io;
    write_spectrum_csv(io, s);
    const Spectrum back = read_spectrum_csv(io);
    CHECK(back.counts == s.counts);
    for (std::size_t i = 0; i < s.wavelengths.size(); ++i) CHECK(back.wavelengths[i] == doctest::Approx(s.wavelengths[i]).epsilon(1e-12));

    const auto series = synth_fss_series(fss_spec(16.0), 4);
    std::stringstream fio;
    write_fss_series_csv(fio, series);
    const auto fback = read_fss_series_csv(fio);
    REQUIRE(fback.size() == series.size());
    for (std::size_t k = 0; k < series.size(); ++k) {
        CHECK(fback[k].polarizer_deg == series[k].polarizer_deg);
        CHECK(fback[k].counts == series[k].counts);
    }
}
