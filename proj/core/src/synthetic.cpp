#include "qdsim/synthetic.hpp"

#include <cmath>
#include <random>

#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"

namespace qdsim {

namespace {

void add_poisson(std::vector<double>& v, std::optional<std::uint64_t> seed) {
    if (!seed) return;
    std::mt19937_64 rng(*seed);
    for (double& x : v) {
        if (x > 0.0) {
            std::poisson_distribution<long long> d(x);
            x = static_cast<double>(d(rng));
        } else {
            x = 0.0;
        }
    }
}

}  // namespace

std::vector<double> uniform_grid(double start, double stop, std::size_t n) {
    if (n < 2) throw DomainError("uniform_grid: need at least two points");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

Spectrum synth_spectrum(const std::vector<double>& wavelengths, const std::vector<SynthPeak>& peaks,
                        double background, std::optional<std::uint64_t> seed, PeakShape shape) {
    Spectrum s;
    s.wavelengths = wavelengths;
    s.counts.assign(wavelengths.size(), background);
    for (std::size_t i = 0; i < wavelengths.size(); ++i) {
        for (const auto& p : peaks) {
            s.counts[i] += p.amplitude * peak_profile(shape, wavelengths[i], p.center_nm, p.fwhm_nm, p.eta).value;
        }
    }
    add_poisson(s.counts, seed);
    return s;
}

std::vector<Spectrum> synth_fss_series(const FssSeriesSpec& spec, std::optional<std::uint64_t> seed) {
    std::vector<Spectrum> out;
    for (std::size_t a = 0; a < spec.angles_deg.size(); ++a) {
        const double th = spec.angles_deg[a] * constants::pi / 180.0;
        const double th0 = spec.theta0_deg * constants::pi / 180.0;
        const double E = spec.mean_energy_eV + 0.5 * spec.delta_ueV * 1e-6 * std::cos(2.0 * (th - th0));
        SynthPeak p{constants::wavelength_nm_from_energy_eV(E), spec.fwhm_nm, spec.amplitude};
        std::optional<std::uint64_t> s;
        if (seed) s = *seed ^ (0x9e3779b97f4a7c15ULL * (a + 1));
        Spectrum sp = synth_spectrum(spec.wavelengths, {p}, spec.background, s);
        sp.polarizer_deg = spec.angles_deg[a];
        out.push_back(std::move(sp));
    }
    return out;
}

std::vector<double> synth_power_series(const std::vector<double>& P, double c, double m, std::optional<double> p_sat,
                                       double noise, std::optional<std::uint64_t> seed) {
    std::vector<double> I(P.size());
    std::mt19937_64 rng(seed.value_or(0));
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t i = 0; i < P.size(); ++i) {
        I[i] = c * std::pow(P[i], m);
        if (p_sat) I[i] /= 1.0 + std::pow(P[i] / *p_sat, m);
        if (seed) I[i] *= std::max(1e-6, 1.0 + noise * n01(rng));
    }
    return I;
}

G2Trace synth_g2_trace(const G2TraceSpec& spec, std::optional<std::uint64_t> seed) {
    if (spec.half_bins < 1 || !(spec.step > 0.0)) throw DomainError("synth_g2_trace: bad grid");
    G2Trace t;
    t.bin_width = spec.bin_width;
    t.irf_sigma = spec.irf_sigma;
    for (int k = -spec.half_bins; k <= spec.half_bins; ++k) {
        const double tau = k * spec.step;
        t.delays.push_back(tau);
        t.coincidences.push_back(spec.plateau * g2_model(tau, spec.g0, spec.tau_c, spec.irf_sigma, spec.bin_width));
    }
    add_poisson(t.coincidences, seed);
    return t;
}

DecayTrace synth_decay(const std::vector<double>& times, double A1, double tau1, double A2, double tau2,
                       double background, std::optional<std::uint64_t> seed) {
    DecayTrace d;
    d.times = times;
    for (double t : times) {
        d.counts.push_back(A1 * std::exp(-t / tau1) + A2 * std::exp(-t / tau2) + background);
    }
    add_poisson(d.counts, seed);
    return d;
}

}  // namespace qdsim
