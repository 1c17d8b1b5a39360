#pragma once

// Ratios of modified Bessel functions used by the directional families.

#include <cmath>
#include <limits>

#include "confgeom/errors.hpp"

namespace confgeom {

/// I_{nu+1}(x) / I_nu(x) by the Gauss continued fraction, evaluated with the
/// modified Lentz algorithm.
inline double bessel_i_ratio(double nu, double x) {
  if (!(x > 0.0) || nu < 0.0) throw ParameterError("bessel_i_ratio needs x > 0 and nu >= 0");
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  // ratio = 0 + 1 / (b1 + 1 / (b2 + ...)),  b_k = 2 (nu + k) / x
  double f = tiny;
  double c = f;
  double d = 0.0;
  for (int k = 1; k < 100000; ++k) {
    const double b = 2.0 * (nu + k) / x;
    const double a = 1.0;
    d = b + a * d;
    if (std::abs(d) < tiny) d = tiny;
    c = b + a / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) return f;
  }
  throw NoConvergenceError("bessel_i_ratio: continued fraction did not converge");
}

/// K_{nu+1}(x) / K_nu(x). Half-integer orders use the upward recurrence from
/// K_{3/2}/K_{1/2} = 1 + 1/x, which is stable for K.
inline double bessel_k_ratio(double nu, double x) {
  if (!(x > 0.0) || nu < 0.0) throw ParameterError("bessel_k_ratio needs x > 0 and nu >= 0");
  const double k = nu - 0.5;
  if (std::abs(k - std::round(k)) < 1e-12 && k > -0.5) {
    double ratio = 1.0 + 1.0 / x;
    for (int j = 1; j <= static_cast<int>(std::round(k)); ++j) {
      const double order = 0.5 + j;
      ratio = 1.0 / ratio + 2.0 * order / x;
    }
    return ratio;
  }
  const double num = std::cyl_bessel_k(nu + 1.0, x);
  const double den = std::cyl_bessel_k(nu, x);
  if (!std::isfinite(num) || !(den > 0.0)) throw EvaluationDomainError("bessel_k_ratio: K underflow");
  return num / den;
}

/// log I_nu(x) with the exponential scaling removed for large x.
inline double log_bessel_i(double nu, double x) {
  if (x > 600.0) {
    // Leading asymptotic terms are enough where the direct value overflows.
    const double mu = 4.0 * nu * nu;
    return x - 0.5 * std::log(2.0 * M_PI * x) + std::log1p(-(mu - 1.0) / (8.0 * x));
  }
  return std::log(std::cyl_bessel_i(nu, x));
}

inline double log_bessel_k(double nu, double x) {
  const double v = std::cyl_bessel_k(nu, x);
  if (!(v > 0.0) || !std::isfinite(v)) throw EvaluationDomainError("log_bessel_k out of range");
  return std::log(v);
}

}  // namespace confgeom
