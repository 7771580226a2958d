#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace qdsim {

enum class Species { X0, Xminus, XX, X2minus };

std::string_view species_name(Species s);
/// Accepts "X0", "Xminus", "XX", "X2minus". Throws LookupError otherwise.
Species parse_species(std::string_view name);

/// Clamped-linear fine-structure splitting in µeV.
struct FssModel {
    double delta_ref = 0.0;  // µeV at V_ref
    double slope = 0.0;      // µeV/V
    double V_ref = 0.0;      // V
    double floor = 0.0;      // µeV, >= 0

    /// Line through (V1, d1) and (V2, d2).
    static FssModel from_anchors(double V1, double delta1, double V2, double delta2, double floor = 0.0);
    void validate() const;
};

double fss_at(const FssModel& model, double V);

struct ExcitonLine {
    Species species = Species::X0;
    double E0 = 0.0;            // eV at F = 0
    double dipole = 0.0;        // e nm
    double polarizability = 0.0;  // µeV / (kV/cm)^2
    std::optional<FssModel> fss;
    double relative_brightness = 1.0;

    void validate() const;
};

inline constexpr double kMaxStarkField_kVcm = 200.0;

/// E0 + p F + beta F^2 in eV, F in kV/cm. Throws DomainError for |F| > 200 kV/cm.
double stark_energy(const ExcitonLine& line, double field_kVcm);
double stark_wavelength_nm(const ExcitonLine& line, double field_kVcm);

/// Emission wavelength at gate voltage V with the lever arm F = V / d_i.
double line_wavelength_nm(const ExcitonLine& line, double bias_V, double intrinsic_nm);

/// max(lambda) - min(lambda) over [V_min, V_max], including an interior vertex.
/// V_min == V_max gives 0; V_min > V_max throws DomainError.
double tuning_range(const ExcitonLine& line, double V_min, double V_max, double intrinsic_nm);

struct StarkPoint {
    double field_kVcm = 0.0;
    double energy_eV = 0.0;
};
struct StarkParabola {
    double E0 = 0.0;
    double dipole = 0.0;
    double polarizability = 0.0;
    double rms_residual_eV = 0.0;
};
/// Least-squares quadratic through >= 3 points (exact for three).
StarkParabola fit_stark_parabola(const std::vector<StarkPoint>& points);

/// Calibration constraints for one line: the polarizability is held fixed,
/// the dipole is solved so that the tuning range over [V_min, V_max] hits the
/// target, and E0 places the line at center_nm for V_center.
struct StarkCalibration {
    Species species = Species::X0;
    double tuning_range_nm = 0.0;
    double center_nm = 0.0;
    double V_center = 0.0;
    double polarizability = 0.0;
    double V_min = 0.0;
    double V_max = 0.0;
    double intrinsic_nm = 240.0;
    /// Sign of dlambda/dV over the interval (+1 redshift with bias, -1 blueshift).
    int direction = +1;
};
ExcitonLine calibrate_line(const StarkCalibration& cal);

struct ChargeLadder {
    std::vector<double> region_edges;         // V, strictly increasing
    std::vector<int> occupancy_per_region;    // electrons
    std::vector<std::set<Species>> active_lines_per_region;

    std::size_t regions() const { return occupancy_per_region.size(); }
    void validate() const;
};

struct Occupancy {
    int electrons = 0;
    std::set<Species> species;
    std::size_t region = 0;
};

/// Right-continuous region lookup; the last edge closes the final region.
/// Throws DomainError outside [first edge, last edge].
Occupancy occupancy_at(const ChargeLadder& ladder, double V);

struct ReferenceModel {
    std::vector<ExcitonLine> lines;
    std::vector<StarkCalibration> calibrations;
    double intrinsic_nm = 240.0;
};

/// Line set: each entry either lists E0 / dipole / polarizability directly or
/// gives a "calibration" block. Throws SchemaError.
ReferenceModel parse_reference_lines(const std::string& json_text);
ReferenceModel load_reference_lines(const std::string& path);
ChargeLadder parse_charge_ladder(const std::string& json_text);
ChargeLadder load_charge_ladder(const std::string& path);

/// Monotone non-increasing background per wavelength pixel:
/// low + (high - low) / (1 + exp((V - V_mid) / width)).
struct BackgroundModel {
    double high = 0.0;
    double low = 0.0;
    double V_mid = 1.0;
    double width = 0.1;

    double at(double V) const;
    void validate() const;
};

struct MapOptions {
    double linewidth_ueV = 50.0;      // Lorentzian FWHM
    double line_counts = 1.0e4;       // integrated counts for brightness 1
    BackgroundModel background;
    bool poisson_noise = true;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    double intrinsic_nm = 240.0;
};

struct EmissionMap {
    std::vector<double> voltages;
    std::vector<double> wavelengths;
    std::vector<double> counts;    // row-major: counts[iv * wavelengths.size() + il]
    std::vector<double> expected;  // noiseless mean
    std::vector<std::set<Species>> column_species;
    std::uint64_t seed = 0;

    double at(std::size_t iv, std::size_t il) const { return counts[iv * wavelengths.size() + il]; }
};

/// Columns outside the ladder span carry background only. Each line is
/// integrated exactly over its pixel in energy, so a column sums to the line
/// strengths (minus tails beyond the window) plus the background.
EmissionMap synth_emission_map(const std::vector<ExcitonLine>& lines, const ChargeLadder& ladder,
                               const std::vector<double>& voltages, const std::vector<double>& wavelengths,
                               const MapOptions& opts = {});

/// '#' metadata, then a header row of wavelengths and one row per voltage.
void write_map_csv(std::ostream& out, const EmissionMap& map);

/// lambda(V) table with one column per line.
void write_stark_csv(std::ostream& out, const std::vector<ExcitonLine>& lines, const std::vector<double>& voltages,
                     double intrinsic_nm);

}  // namespace qdsim
