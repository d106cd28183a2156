#pragma once

#include <cmath>
#include <span>

namespace rsmfc {

/// phi1(z) = (e^z - 1) / z, continuously extended through z = 0.
/// expm1 keeps precision for moderate z; a 4-term Taylor series takes over
/// for |z| < 1e-5 where the quotient itself would lose digits.
inline double phi1(double z) {
    if (std::abs(z) < 1e-5) {
        return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0)));
    }
    return std::expm1(z) / z;
}

/// log(sum_i exp(xs_i)), max-shifted. Empty input yields -inf.
double log_sum_exp(std::span<const double> xs);

/// log((1/n) sum exp(xs_i)).
double log_mean_exp(std::span<const double> xs);

} // namespace rsmfc
