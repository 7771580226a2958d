#pragma once

// CODATA 2018 exact / recommended values. Derived quantities are computed
// here once so every module converts units the same way.

namespace qdsim::constants {

inline constexpr double elementary_charge = 1.602176634e-19;   // C
inline constexpr double boltzmann = 1.380649e-23;              // J/K
inline constexpr double boltzmann_eV = 8.617333262e-5;         // eV/K
inline constexpr double planck = 6.62607015e-34;               // J s
inline constexpr double hbar = 1.054571817e-34;                // J s
inline constexpr double speed_of_light = 299792458.0;          // m/s
inline constexpr double electron_mass = 9.1093837015e-31;      // kg
inline constexpr double vacuum_permittivity = 8.8541878128e-12; // F/m
inline constexpr double vacuum_permittivity_cm = 8.8541878128e-14; // F/cm
inline constexpr double pi = 3.14159265358979323846;

// h*c in eV*nm, used for wavelength <-> photon energy.
inline constexpr double hc_eV_nm = planck * speed_of_light / elementary_charge * 1e9;

// 1 nm expressed in cm.
inline constexpr double nm_to_cm = 1e-7;

inline constexpr double thermal_voltage(double temperature_K) {
    return boltzmann_eV * temperature_K;
}

inline constexpr double wavelength_nm_from_energy_eV(double energy_eV) {
    return hc_eV_nm / energy_eV;
}

inline constexpr double energy_eV_from_wavelength_nm(double wavelength_nm) {
    return hc_eV_nm / wavelength_nm;
}

}  // namespace qdsim::constants
