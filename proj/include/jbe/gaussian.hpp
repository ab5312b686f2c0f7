#pragma once

#include <cmath>
#include <numbers>

#include "jbe/errors.hpp"

namespace jbe {

// Standard normal inverse CDF: rational approximation (relative error about
// 1e-9) polished with one Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("DomainError: probability must lie in (0, 1)");
  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                          1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                          6.680131188771972e+01,  -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                          -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                          3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct GaussianDist {
  double mean = 0.0;
  double sd = 0.0;

  double pdf(double x) const {
    if (!(sd > 0.0)) throw DomainError("DomainError: pdf needs sd > 0");
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
  }

  // Degenerate (sd = 0) distributions are a step at the mean.
  double cdf(double x) const {
    if (sd > 0.0) return normal_cdf((x - mean) / sd);
    return x < mean ? 0.0 : 1.0;
  }

  double quantile(double p) const {
    if (!(sd > 0.0)) throw DomainError("DomainError: quantile needs sd > 0");
    return mean + sd * normal_quantile(p);
  }

  // Differential entropy in nats.
  double entropy() const {
    if (!(sd > 0.0)) throw DomainError("DomainError: entropy needs sd > 0");
    return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sd * sd);
  }

  double mode() const noexcept { return mean; }
  double variance() const noexcept { return sd * sd; }
};

}  // namespace jbe
