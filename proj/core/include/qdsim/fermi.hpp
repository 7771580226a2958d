#pragma once

namespace qdsim {

/// Complete Fermi-Dirac integral of order 1/2, normalized so that
/// fermi_half(eta) -> exp(eta) as eta -> -inf:
///   F(eta) = (2/sqrt(pi)) * int_0^inf sqrt(e) / (1 + exp(e - eta)) de.
/// Uses the Bednarczyk & Bednarczyk analytic approximation
/// (relative error below 0.4% for all eta).
double fermi_half(double eta);

/// Exact derivative of the approximation above (not of the true integral),
/// so Newton iterations built on fermi_half stay consistent.
double fermi_half_derivative(double eta);

/// log(fermi_half(eta)), stable for large |eta|.
double log_fermi_half(double eta);

/// Ratio fermi_half(eta) / exp(eta), computed without overflow. Tends to 1 in
/// the non-degenerate limit.
double fermi_half_degeneracy(double eta);

/// Inverse of fermi_half: returns eta with fermi_half(eta) = value (> 0).
double inverse_fermi_half(double value);

}  // namespace qdsim
