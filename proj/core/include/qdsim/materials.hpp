#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qdsim {

/// Caughey-Thomas doping-dependent mobility, cm^2/(V s), at 300 K, plus a
/// power-law temperature factor (300/T)^temperature_exponent.
struct MobilityParams {
    double mu_min = 0.0;
    double mu_max = 0.0;
    double N_ref = 1.0;       // cm^-3
    double exponent = 1.0;
    double temperature_exponent = 0.0;

    void validate(std::string_view context = {}) const;
};

/// Doping-dependent mobility at 300 K. Throws DomainError for N < 0.
double mobility(const MobilityParams& params, double total_doping_cm3);

/// Mobility including the (300/T)^gamma temperature factor.
double mobility(const MobilityParams& params, double total_doping_cm3, double temperature_K);

/// Material record with the band gap evaluated at `temperature_K`.
struct MaterialParams {
    std::string name;
    double temperature_K = 300.0;

    double Eg0 = 0.0;             // eV
    double varshni_alpha = 0.0;   // eV/K
    double varshni_beta = 0.0;    // K
    double Eg = 0.0;              // eV, Varshni gap at temperature_K

    double valence_band_offset = 0.0;  // eV, absolute Ev on the database scale
    double electron_affinity = 0.0;    // eV, vacuum_level - Ec(T)
    double eps_r = 1.0;
    double me = 1.0;  // DOS effective masses in units of m0
    double mh = 1.0;
    double radiative_B = 0.0;  // cm^3/s

    MobilityParams electron_mobility;
    MobilityParams hole_mobility;

    /// Absolute band edges on the valence-band-offset scale.
    double Ev() const { return valence_band_offset; }
    double Ec() const { return valence_band_offset + Eg; }

    /// Effective densities of states (cm^-3) at temperature_K.
    double Nc() const;
    double Nv() const;
    /// Intrinsic density in the non-degenerate limit (cm^-3).
    double intrinsic_density() const;

    void validate() const;
};

/// Varshni band gap Eg0 - alpha T^2 / (T + beta).
double varshni_gap(double Eg0, double alpha, double beta, double temperature_K);

/// Effective density of states 2 (m* m0 kT / 2 pi hbar^2)^{3/2}, in cm^-3.
double effective_density_of_states(double mass_ratio, double temperature_K);

/// Conduction- and valence-band offsets between two materials.
///   dEc = Ec(a) - Ec(b)   (positive: a is a barrier for electrons)
///   dEv = Ev(b) - Ev(a)   (positive: a is a barrier for holes)
/// so that dEc + dEv = Eg(a) - Eg(b).
struct BandOffsets {
    double dEc = 0.0;
    double dEv = 0.0;
};

BandOffsets band_offsets(const MaterialParams& a, const MaterialParams& b);

/// Material constants loaded from a key-value text database (see
/// data/materials.db for the schema). Immutable after construction.
class MaterialDatabase {
public:
    /// Parses database text. Throws SchemaError with a line reference.
    static MaterialDatabase parse(std::string_view text);
    static MaterialDatabase load(const std::string& path);
    /// The database compiled into the library from data/materials.db.
    static const MaterialDatabase& builtin();

    /// Throws LookupError naming the identifier for unknown materials and
    /// DomainError for temperatures outside [0, 400] K.
    MaterialParams lookup(std::string_view name, double temperature_K) const;

    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;
    double vacuum_level() const { return vacuum_level_; }

private:
    struct Record {
        std::map<std::string, double, std::less<>> values;
    };
    std::map<std::string, Record, std::less<>> records_;
    double vacuum_level_ = 0.0;
};

/// Shorthand for MaterialDatabase::builtin().lookup(name, T).
MaterialParams lookup_material(std::string_view name, double temperature_K);

}  // namespace qdsim
