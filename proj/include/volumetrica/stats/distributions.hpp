// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>

#include "volumetrica/error.hpp"
#include "volumetrica/numopt/gauss_legendre.hpp"

namespace volumetrica::stats {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Inverse of the standard normal CDF.
inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorCode::domain_error, "normal quantile needs p in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

inline double clamp_probability(double p) { return std::clamp(p, 0.0, 1.0); }

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  require(df > 0.0, ErrorCode::domain_error, "t distribution needs df > 0");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return clamp_probability(boost::math::ibeta(df / 2.0, 0.5, df / (df + t * t)));
}

/// Upper-tail probability of an F statistic.
inline double f_upper_p(double f, double df1, double df2) {
  require(df1 > 0.0 && df2 > 0.0, ErrorCode::domain_error, "F distribution needs positive df");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return clamp_probability(boost::math::ibeta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)));
}

/// Two-sided normal p-value; a zero statistic gives exactly 1.
inline double z_two_sided_p(double z) { return z == 0.0 ? 1.0 : clamp_probability(2.0 * normal_sf(std::abs(z))); }

namespace detail {

inline const numopt::QuadratureRule& gl64() {
  static const auto rule = numopt::gauss_legendre(64);
  return rule;
}

/// P(range of k standard normals < w).
inline double normal_range_cdf(double w, double k) {
  if (w <= 0.0) return 0.0;
  const double v = numopt::integrate(gl64(), -8.0, 8.0, [&](double z) {
    const double inner = normal_cdf(z) - normal_cdf(z - w);
    return inner > 0.0 ? normal_pdf(z) * std::pow(inner, k - 1.0) : 0.0;
  });
  return std::min(1.0, k * v);
}

}  // namespace detail

/// CDF of the studentized range for k groups and `df` error degrees of
/// freedom: the normal range CDF averaged over the scaled chi density of the
/// pooled standard deviation. Both integrals use 64-node Gauss-Legendre
/// panels; the outer one is split at the density mode.
inline double studentized_range_cdf(double q, double k, double df) {
  require(k >= 2.0, ErrorCode::domain_error, "studentized range needs k >= 2");
  require(df >= 1.0, ErrorCode::domain_error, "studentized range needs df >= 1");
  if (q <= 0.0) return 0.0;
  if (df > 25000.0) return detail::normal_range_cdf(q, k);
  // log density of s = sqrt(chi2_df / df)
  const double log_norm = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::log(2.0);
  auto density = [&](double s) {
    return s <= 0.0 ? 0.0 : std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
  };
  const double mode = std::sqrt((df - 1.0) / df);
  const double spread = 1.0 / std::sqrt(2.0 * df);
  const double lo = std::max(0.0, mode - 12.0 * spread);
  const double hi = mode + 12.0 * spread + (df < 10.0 ? 8.0 : 0.0);
  auto f = [&](double s) { return density(s) * detail::normal_range_cdf(q * s, k); };
  double total = 0.0;
  const double cuts[] = {lo, mode, hi};
  for (int i = 0; i < 2; ++i)
    if (cuts[i + 1] > cuts[i]) total += numopt::integrate(detail::gl64(), cuts[i], cuts[i + 1], f);
  return clamp_probability(total);
}

}  // namespace volumetrica::stats
