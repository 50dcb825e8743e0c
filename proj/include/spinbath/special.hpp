#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace spinbath {

inline constexpr double kPi = 3.14159265358979323846;

// Gamma at negative non-integer argument via the reflection identity
// Gamma(-x) = -pi / (sin(pi x) * Gamma(1+x)), x > 0 non-integer.
// Avoids relying on tgamma's negative-domain behavior.
inline double gamma_negative(double x) {
  if (!(x > 0.0) || x == std::floor(x)) {
    throw std::invalid_argument("gamma_negative: argument must be positive and non-integer, got " +
                                std::to_string(x));
  }
  return -kPi / (std::sin(kPi * x) * std::tgamma(1.0 + x));
}

// Volume of the unit D-ball, A_D = pi^{D/2} / Gamma(D/2 + 1).
inline double unit_ball_volume(int dimension) {
  if (dimension < 1 || dimension > 3) {
    throw std::invalid_argument("unit_ball_volume: dimension must be 1, 2 or 3");
  }
  return std::pow(kPi, 0.5 * dimension) / std::tgamma(0.5 * dimension + 1.0);
}

// Kolmogorov distribution tail Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2);
// the p-value of a KS statistic d over m samples is Q(d*(sqrt(m)+0.12+0.11/sqrt(m))).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 101; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-12 * (std::abs(sum) + 1e-300)) break;
  }
  return 2.0 * sum;
}

inline double ks_p_value(double d_statistic, std::size_t n_samples) {
  const double rn = std::sqrt(static_cast<double>(n_samples));
  return kolmogorov_q(d_statistic * (rn + 0.12 + 0.11 / rn));
}

}  // namespace spinbath
