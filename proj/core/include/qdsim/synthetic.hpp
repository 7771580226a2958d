#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qdsim/spectro_fit.hpp"

namespace qdsim {

// Synthetic optical data with known truth. A missing seed means noiseless
// expected values; otherwise Poisson counts (multiplicative Gaussian noise
// for power series) from std::mt19937_64.

struct SynthPeak {
    double center_nm = 0.0;
    double fwhm_nm = 0.0;
    double amplitude = 0.0;
    double eta = 0.5;  // pseudo-Voigt only
};

std::vector<double> uniform_grid(double start, double stop, std::size_t n);

Spectrum synth_spectrum(const std::vector<double>& wavelengths, const std::vector<SynthPeak>& peaks,
                        double background, std::optional<std::uint64_t> seed,
                        PeakShape shape = PeakShape::Lorentzian);

/// One Lorentzian per angle at E_mean + (delta/2) cos(2(theta - theta0)).
struct FssSeriesSpec {
    std::vector<double> angles_deg;
    double mean_energy_eV = 0.0;
    double delta_ueV = 0.0;
    double theta0_deg = 0.0;
    double fwhm_nm = 0.05;
    double amplitude = 1000.0;
    double background = 10.0;
    std::vector<double> wavelengths;
};
std::vector<Spectrum> synth_fss_series(const FssSeriesSpec& spec, std::optional<std::uint64_t> seed);

/// I = c P^m / (1 + (P / P_sat)^m); no saturation when p_sat is empty.
std::vector<double> synth_power_series(const std::vector<double>& powers_uW, double prefactor, double slope,
                                       std::optional<double> p_sat_uW, double relative_noise,
                                       std::optional<std::uint64_t> seed);

/// Bins centred on k * step for k = -half_bins..half_bins.
struct G2TraceSpec {
    double g0 = 0.04;
    double tau_c = 2.2;      // ns
    double irf_sigma = 0.0;  // ns
    double bin_width = 0.256;  // ns; 0 for point sampling at the grid
    double step = 0.256;     // ns
    int half_bins = 200;
    double plateau = 1000.0;  // mean coincidences per bin at long delay
};
G2Trace synth_g2_trace(const G2TraceSpec& spec, std::optional<std::uint64_t> seed);

DecayTrace synth_decay(const std::vector<double>& times, double A1, double tau1, double A2, double tau2,
                       double background, std::optional<std::uint64_t> seed);

}  // namespace qdsim
