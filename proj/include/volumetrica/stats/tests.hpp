// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volumetrica/stats/distributions.hpp"

namespace volumetrica::stats {

struct TestResult {
  std::string name;
  double statistic = 0.0;
  std::optional<double> df1;
  std::optional<double> df2;
  double p = 1.0;
};

inline double mean(std::span<const double> x) {
  require(!x.empty(), ErrorCode::degenerate_input, "mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance with the n - 1 denominator.
inline double variance(std::span<const double> x) {
  require(x.size() >= 2, ErrorCode::degenerate_input, "variance needs at least 2 values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

inline double median(std::vector<double> x) {
  require(!x.empty(), ErrorCode::degenerate_input, "median of an empty sample");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

/// Linear-interpolation quantile on sorted data (position (n - 1) * q).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  require(!sorted.empty(), ErrorCode::degenerate_input, "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, ErrorCode::domain_error, "quantile level must be in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + (pos - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
}

// ---------------------------------------------------------------- Bland-Altman

struct BlandAltman {
  std::vector<double> differences;  // m - a
  double bias = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline BlandAltman bland_altman(std::span<const double> m, std::span<const double> a) {
  require(m.size() == a.size(), ErrorCode::shape_mismatch, "Bland-Altman needs paired samples of equal length");
  require(m.size() >= 2, ErrorCode::degenerate_input, "Bland-Altman needs at least 2 pairs");
  BlandAltman r;
  for (std::size_t i = 0; i < m.size(); ++i) r.differences.push_back(m[i] - a[i]);
  r.bias = mean(r.differences);
  r.sd = stddev(r.differences);
  r.lower = r.bias - 1.96 * r.sd;
  r.upper = r.bias + 1.96 * r.sd;
  return r;
}

// ---------------------------------------------------------------- t tests

inline TestResult paired_t(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::shape_mismatch, "paired t-test needs samples of equal length");
  require(x.size() >= 2, ErrorCode::degenerate_input, "paired t-test needs at least 2 pairs");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  const double sd = stddev(d);
  require(sd > 0.0, ErrorCode::degenerate_input, "paired differences have zero variance");
  const double n = static_cast<double>(d.size());
  TestResult r{"paired_t", mean(d) / (sd / std::sqrt(n)), n - 1.0, std::nullopt, 1.0};
  r.p = t_two_sided_p(r.statistic, *r.df1);
  return r;
}

/// Two-sample t-test with pooled variance.
inline TestResult student_t(std::span<const double> x, std::span<const double> y) {
  require(x.size() >= 2 && y.size() >= 2, ErrorCode::degenerate_input, "t-test needs at least 2 values per group");
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  const double pooled = ((nx - 1.0) * variance(x) + (ny - 1.0) * variance(y)) / (nx + ny - 2.0);
  require(pooled > 0.0, ErrorCode::degenerate_input, "both groups have zero variance");
  TestResult r{"student_t", (mean(x) - mean(y)) / std::sqrt(pooled * (1.0 / nx + 1.0 / ny)), nx + ny - 2.0,
               std::nullopt, 1.0};
  r.p = t_two_sided_p(r.statistic, *r.df1);
  return r;
}

// ---------------------------------------------------------------- anova

struct AnovaTable {
  double ss_between = 0.0;
  double ss_within = 0.0;
  double df_between = 0.0;
  double df_within = 0.0;
  TestResult test;
};

inline AnovaTable anova_table(std::span<const std::vector<double>> groups) {
  require(groups.size() >= 2, ErrorCode::degenerate_input, "anova needs at least 2 groups");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    require(g.size() >= 2, ErrorCode::degenerate_input, "anova needs at least 2 values per group");
    total += std::accumulate(g.begin(), g.end(), 0.0);
    n += g.size();
  }
  const double grand = total / static_cast<double>(n);
  AnovaTable t;
  for (const auto& g : groups) {
    const double m = mean(g);
    t.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) t.ss_within += (v - m) * (v - m);
  }
  t.df_between = static_cast<double>(groups.size() - 1);
  t.df_within = static_cast<double>(n - groups.size());
  require(t.ss_within > 0.0, ErrorCode::degenerate_input, "all groups have zero within-group variance");
  t.test = {"one_way_anova", (t.ss_between / t.df_between) / (t.ss_within / t.df_within), t.df_between, t.df_within, 1.0};
  t.test.p = f_upper_p(t.test.statistic, t.df_between, t.df_within);
  return t;
}

inline TestResult one_way_anova(std::span<const std::vector<double>> groups) { return anova_table(groups).test; }

struct PairwiseResult {
  std::size_t i = 0;
  std::size_t j = 0;
  double mean_difference = 0.0;  // mean_i - mean_j
  TestResult test;
  bool reject = false;
};

/// Tukey-Kramer honestly significant difference for every pair of groups.
inline std::vector<PairwiseResult> tukey_hsd(std::span<const std::vector<double>> groups, double alpha = 0.05) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::domain_error, "alpha must be in (0, 1)");
  const auto table = anova_table(groups);
  const double mse = table.ss_within / table.df_within;
  const double k = static_cast<double>(groups.size());
  std::vector<PairwiseResult> out;
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      PairwiseResult r{i, j, mean(groups[i]) - mean(groups[j]), {}, false};
      const double se = std::sqrt(0.5 * mse * (1.0 / static_cast<double>(groups[i].size()) +
                                               1.0 / static_cast<double>(groups[j].size())));
      const double q = std::abs(r.mean_difference) / se;
      r.test = {"tukey_hsd", q, k, table.df_within, clamp_probability(1.0 - studentized_range_cdf(q, k, table.df_within))};
      r.reject = r.test.p < alpha;
      out.push_back(r);
    }
  return out;
}

// ---------------------------------------------------------------- Levene

/// Brown-Forsythe form: anova on absolute deviations from the group medians.
inline TestResult levene(std::span<const std::vector<double>> groups) {
  require(groups.size() >= 2, ErrorCode::degenerate_input, "Levene's test needs at least 2 groups");
  std::vector<std::vector<double>> dev;
  for (const auto& g : groups) {
    const double med = median(g);
    std::vector<double> z;
    for (double v : g) z.push_back(std::abs(v - med));
    dev.push_back(std::move(z));
  }
  auto r = one_way_anova(dev);
  r.name = "levene_median";
  return r;
}

// ---------------------------------------------------------------- Shapiro-Wilk

namespace detail {

inline double poly(std::span<const double> c, double x) {
  double v = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) v = v * x + c[i];
  return v;
}

}  // namespace detail

/// Shapiro-Wilk W with Royston's approximations for the coefficients and the
/// normalising transform of W (valid for 3 <= n <= 5000).
inline TestResult shapiro_wilk(std::span<const double> data) {
  const std::size_t n = data.size();
  require(n >= 3 && n <= 5000, ErrorCode::domain_error, "Shapiro-Wilk needs 3 <= n <= 5000");
  std::vector<double> x(data.begin(), data.end());
  std::sort(x.begin(), x.end());
  require(x.back() - x.front() > 0.0, ErrorCode::degenerate_input, "Shapiro-Wilk needs non-constant data");
  const double dn = static_cast<double>(n);

  // a[i] pairs with x[n-1-i] - x[i].
  std::vector<double> a(n / 2);
  if (n == 3) {
    a[0] = std::numbers::sqrt2 / 2.0;
  } else {
    std::vector<double> m(n);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (dn + 0.25));
      summ2 += m[i] * m[i];
    }
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(dn);
    static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
    static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double a1 = detail::poly(c1, rsn) + m[n - 1] / ssumm2;
    std::size_t first;
    double fac;
    if (n > 5) {
      const double a2 = detail::poly(c2, rsn) + m[n - 2] / ssumm2;
      fac = std::sqrt((summ2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                      (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[0] = a1;
      a[1] = a2;
      first = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * a1 * a1));
      a[0] = a1;
      first = 1;
    }
    for (std::size_t i = first; i < n / 2; ++i) a[i] = m[n - 1 - i] / fac;
  }

  const double xm = mean(x);
  double ssq = 0.0;
  for (double v : x) ssq += (v - xm) * (v - xm);
  double num = 0.0;
  for (std::size_t i = 0; i < n / 2; ++i) num += a[i] * (x[n - 1 - i] - x[i]);
  const double w = std::min(1.0, num * num / ssq);

  TestResult r{"shapiro_wilk", w, dn, std::nullopt, 1.0};
  if (n == 3) {
    const double p = 6.0 / std::numbers::pi * (std::asin(std::sqrt(w)) - std::asin(std::sqrt(0.75)));
    r.p = clamp_probability(p);
    return r;
  }
  if (w >= 1.0) return r;
  double z;
  if (n <= 11) {
    static constexpr double g[] = {-2.273, 0.459};
    static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
    static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
    const double gamma = detail::poly(g, dn);
    const double mu = detail::poly(c3, dn);
    const double sigma = std::exp(detail::poly(c4, dn));
    const double lw = -std::log(gamma - std::log1p(-w));
    z = (lw - mu) / sigma;
  } else {
    static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
    static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
    const double ln = std::log(dn);
    const double mu = detail::poly(c5, ln);
    const double sigma = std::exp(detail::poly(c6, ln));
    z = (std::log1p(-w) - mu) / sigma;
  }
  r.p = clamp_probability(normal_sf(z));
  return r;
}

}  // namespace volumetrica::stats
