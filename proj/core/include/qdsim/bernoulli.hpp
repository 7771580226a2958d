#pragma once

#include <cmath>

namespace qdsim {

/// Bernoulli function B(x) = x / (exp(x) - 1), with B(0) = 1.
/// Near zero a Taylor series avoids the 0/0 cancellation; elsewhere expm1
/// keeps full relative precision. Satisfies B(-x) = B(x) + x.
template <typename T>
T bernoulli(T x) {
    using std::abs;
    using std::expm1;
    if (abs(x) < T(1e-4)) {
        const T x2 = x * x;
        return T(1) - x / T(2) + x2 / T(12) - x2 * x2 / T(720);
    }
    return x / expm1(x);
}

}  // namespace qdsim
