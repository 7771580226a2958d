#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qdsim {

struct Spectrum {
    std::vector<double> wavelengths;  // nm, strictly increasing
    std::vector<double> counts;
    std::optional<double> power_uW;
    std::optional<double> gate_V;
    std::optional<double> polarizer_deg;

    void validate() const;
};

struct G2Trace {
    std::vector<double> delays;  // ns, uniform
    std::vector<double> coincidences;
    double bin_width = 0.0;      // ns; 0 means point sampling
    double irf_sigma = 0.0;      // ns, Gaussian IRF

    void validate() const;
};

struct DecayTrace {
    std::vector<double> times;  // ns
    std::vector<double> counts;
    double irf_sigma = 0.0;     // ns, informational

    void validate() const;
};

/// Named parameters with covariance. Errors are sqrt of the covariance
/// diagonal (Poisson weights, not rescaled by the reduced chi^2).
struct FitResult {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<std::vector<double>> covariance;
    double chi2 = 0.0;
    double reduced_chi2 = 0.0;
    int dof = 0;
    int evaluations = 0;
    double gradient_norm = 0.0;  // max cosine between gradient and Jacobian columns
    bool converged = false;

    double value(const std::string& name) const;
    double error(const std::string& name) const;
};

enum class PeakShape { Lorentzian, Gaussian, PseudoVoigt };

/// Peak profile with unit height evaluated at x for (center, fwhm[, eta]),
/// and its derivatives with respect to (center, fwhm, eta).
struct ProfileValue {
    double value = 0.0;
    std::array<double, 3> d{};  // d/dcenter, d/dfwhm, d/deta
};
ProfileValue peak_profile(PeakShape shape, double x, double center, double fwhm, double eta = 0.5);

struct PeakFit {
    double center = 0.0;     // nm
    double width = 0.0;      // nm FWHM
    double amplitude = 0.0;  // counts, peak height above background
    double background = 0.0; // counts
    double snr = 0.0;        // amplitude / background
    double eta = 0.0;        // Lorentzian fraction for pseudo-Voigt
    double center_err = 0.0, width_err = 0.0, amplitude_err = 0.0, background_err = 0.0;
};

struct PeakFitOptions {
    PeakShape shape = PeakShape::Lorentzian;
    double snr_gate = 5.0;
    int max_evaluations = 4000;
};

struct DiscardedPeak {
    PeakFit peak;
    std::string reason;
};

struct PeakFitReport {
    std::vector<PeakFit> peaks;  // sorted by center
    std::vector<DiscardedPeak> discarded;
    FitResult fit;
};

/// Joint fit of n_peaks profiles plus a constant background. Initial guesses
/// come from the largest maxima of the running residual. Peaks whose fitted
/// snr is below the gate move to `discarded`.
PeakFitReport fit_peaks(const Spectrum& spectrum, int n_peaks, const PeakFitOptions& opts = {});

struct FssOptions {
    PeakFitOptions peak;
    /// Fit the single peak nearest to this wavelength (nm); highest otherwise.
    std::optional<double> target_nm;
    int peaks_per_spectrum = 1;
};

struct FssResult {
    double delta_ueV = 0.0;
    double delta_err_ueV = 0.0;
    double theta0_deg = 0.0;  // in [0, 180)
    double mean_energy_eV = 0.0;
    bool theta_undefined = false;
    bool consistent_with_zero = false;
    double minmax_ueV = 0.0;      // max E - min E over angles
    double minmax_err_ueV = 0.0;
    std::vector<double> angles_deg;
    std::vector<double> energies_ueV;  // per angle, relative to mean_energy_eV
    std::vector<double> energy_err_ueV;
    double reduced_chi2 = 0.0;
};

/// Per-angle peak centers, then E(theta) = E_mean + (delta/2) cos(2(theta - theta0))
/// by linear least squares. Throws InsufficientDataError (< 8 angles or span
/// < 180 deg) and MissingPeakError listing the angles without a peak.
FssResult extract_fss(const std::vector<Spectrum>& series, const FssOptions& opts = {});

struct PowerLawResult {
    double slope = 0.0;
    double slope_err = 0.0;
    double log_prefactor = 0.0;  // ln c in I = c P^m
    double cutoff_uW = 0.0;
    int points_used = 0;
};

/// log-log regression of intensity against power for P <= cutoff. Without a
/// cutoff: the highest power before the 3-point local slope first drops
/// below half the low-power slope.
PowerLawResult fit_power_law(const std::vector<double>& powers_uW, const std::vector<double>& intensities,
                             std::optional<double> saturation_cutoff_uW = std::nullopt);
double default_saturation_cutoff(const std::vector<double>& powers_uW, const std::vector<double>& intensities);

/// 1 - (1 - g0) (e^{-|t|/tau} * Gaussian(sigma)), box-averaged over bin_width.
double g2_model(double tau_ns, double g0, double tau_c, double irf_sigma, double bin_width);

struct G2Result {
    double g0_raw = 0.0;
    double g0_deconvolved = 0.0;
    double g0_err = 0.0;
    double tau_c = 0.0;
    double tau_c_err = 0.0;
    double plateau = 0.0;  // coincidences per bin at long delay
    bool tau_unidentifiable = false;
    FitResult fit;
};

/// Throws NormalizationError when no delay bins reach 5 tau_c.
G2Result fit_g2(const G2Trace& trace);

/// IRF sigma (ns) for which the binned model minimum equals target_raw.
double calibrate_irf_for_raw_minimum(double g0, double tau_c, double bin_width, double target_raw);

struct LifetimeResult {
    double A1 = 0.0, tau1 = 0.0, A2 = 0.0, tau2 = 0.0;  // tau1 <= tau2
    double A1_err = 0.0, tau1_err = 0.0, A2_err = 0.0, tau2_err = 0.0;
    double principal_tau = 0.0;
    double principal_tau_err = 0.0;
    bool degenerate = false;  // collapsed to the single-exponential result
    double single_A = 0.0, single_tau = 0.0, single_tau_err = 0.0;
    double reduced_chi2_single = 0.0;
    double reduced_chi2_double = 0.0;
    double t0 = 0.0;  // ns, first fitted time (peak of the trace)
    FitResult fit;
};

/// Poisson-weighted biexponential from the trace maximum onward, with a
/// single-exponential comparison. Throws InsufficientDataError when the
/// decay is too flat to fit.
LifetimeResult fit_lifetime(const DecayTrace& trace);

// CSV input. Lines starting with '#' may carry "key = value" metadata;
// malformed content raises SchemaError naming the line number.
Spectrum read_spectrum_csv(std::istream& in, const std::string& source = "<input>");
G2Trace read_g2_csv(std::istream& in, const std::string& source = "<input>");
DecayTrace read_decay_csv(std::istream& in, const std::string& source = "<input>");
/// power_uW,intensity
std::pair<std::vector<double>, std::vector<double>> read_power_csv(std::istream& in,
                                                                   const std::string& source = "<input>");
/// wavelength_nm then one counts column per angle; "# angles_deg = a,b,..."
std::vector<Spectrum> read_fss_series_csv(std::istream& in, const std::string& source = "<input>");

void write_spectrum_csv(std::ostream& out, const Spectrum& s);
void write_g2_csv(std::ostream& out, const G2Trace& t);
void write_decay_csv(std::ostream& out, const DecayTrace& t);
void write_power_csv(std::ostream& out, const std::vector<double>& powers_uW, const std::vector<double>& intensities);
void write_fss_series_csv(std::ostream& out, const std::vector<Spectrum>& series);

}  // namespace qdsim
