#pragma once

#include <cstddef>
#include <vector>

#include "qdsim/errors.hpp"

namespace qdsim {

/// Thomas algorithm for a tridiagonal system
///   lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i].
/// lower[0] and upper[n-1] are ignored. Intended for the diagonally
/// dominant M-matrices produced by box discretizations, so no pivoting.
template <typename T>
std::vector<T> solve_tridiagonal(const std::vector<T>& lower, const std::vector<T>& diag,
                                 const std::vector<T>& upper, const std::vector<T>& rhs) {
    const std::size_t n = diag.size();
    if (lower.size() != n || upper.size() != n || rhs.size() != n) {
        throw DomainError("solve_tridiagonal: inconsistent sizes");
    }
    if (n == 0) return {};
    std::vector<T> c(n), d(n);
    T denom = diag[0];
    if (denom == T(0)) throw DomainError("solve_tridiagonal: zero pivot");
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = diag[i] - lower[i] * c[i - 1];
        if (denom == T(0)) throw DomainError("solve_tridiagonal: zero pivot");
        c[i] = (i + 1 < n) ? upper[i] / denom : T(0);
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    std::vector<T> x(n);
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
    return x;
}

}  // namespace qdsim
