#include "qdsim/fermi.hpp"

#include <cmath>
#include <limits>

#include "qdsim/constants.hpp"
#include "qdsim/errors.hpp"

namespace qdsim {

namespace {

const double kXiPrefactor = 3.0 * std::sqrt(constants::pi) / 4.0;

struct Nu {
    double value;
    double derivative;
};

// nu(eta) = eta^4 + 50 + 33.6 eta (1 - 0.68 exp(-0.17 (eta + 1)^2))
Nu nu(double eta) {
    const double s = eta + 1.0;
    const double g = std::exp(-0.17 * s * s);
    const double bracket = 1.0 - 0.68 * g;
    const double value = eta * eta * eta * eta + 50.0 + 33.6 * eta * bracket;
    const double dbracket = 0.68 * g * 0.34 * s;
    const double derivative = 4.0 * eta * eta * eta + 33.6 * bracket + 33.6 * eta * dbracket;
    return {value, derivative};
}

double xi(double eta) { return kXiPrefactor * std::pow(nu(eta).value, -0.375); }

}  // namespace

double fermi_half(double eta) {
    if (eta < -700.0) return std::exp(eta);
    return 1.0 / (std::exp(-eta) + xi(eta));
}

double log_fermi_half(double eta) {
    if (eta < 0.0) return eta - std::log1p(xi(eta) * std::exp(eta));
    return -std::log(std::exp(-eta) + xi(eta));
}

double fermi_half_degeneracy(double eta) {
    // F / e^eta = 1 / (1 + xi e^eta); overflow of the product yields 0.
    return 1.0 / (1.0 + xi(eta) * std::exp(eta));
}

double fermi_half_derivative(double eta) {
    if (eta < -700.0) return std::exp(eta);
    const Nu n = nu(eta);
    const double x = kXiPrefactor * std::pow(n.value, -0.375);
    const double dx = -0.375 * x / n.value * n.derivative;
    const double em = std::exp(-eta);
    const double denom = em + x;
    return (em - dx) / (denom * denom);
}

double inverse_fermi_half(double value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw DomainError("inverse_fermi_half: argument must be positive and finite");
    }
    double eta;
    if (value < 1.0) {
        eta = std::log(value) + value / std::sqrt(8.0);
    } else {
        eta = std::pow(value / (4.0 / (3.0 * std::sqrt(constants::pi))), 2.0 / 3.0);
        if (value < 10.0) eta = 0.5 * (eta + std::log(value) + value / std::sqrt(8.0));
    }
    // Newton on log F(eta) = log(value); log F is concave and increasing.
    const double target = std::log(value);
    for (int it = 0; it < 100; ++it) {
        const double f = fermi_half(eta);
        const double step = (log_fermi_half(eta) - target) * f / fermi_half_derivative(eta);
        eta -= step;
        if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(eta))) return eta;
    }
    return eta;
}

}  // namespace qdsim
