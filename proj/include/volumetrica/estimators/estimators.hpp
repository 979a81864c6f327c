// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volumetrica/core/volume.hpp"
#include "volumetrica/nn/segmentation.hpp"
#include "volumetrica/numopt/polynomial.hpp"

namespace volumetrica {

enum class Method { ml = 0, spherical = 1, area_based = 2, regression = 3 };

inline constexpr std::array<Method, 4> kAllMethods{Method::ml, Method::spherical, Method::area_based,
                                                   Method::regression};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ml: return "ml";
    case Method::spherical: return "spherical";
    case Method::area_based: return "area_based";
    case Method::regression: return "regression";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : kAllMethods)
    if (s == to_string(m)) return m;
  fail(ErrorCode::invalid_argument, "unknown method '" + s + "' (expected ml, spherical, area_based or regression)");
}

// ---------------------------------------------------------------- spherical

inline double spherical_estimate(double radius) {
  require(std::isfinite(radius) && radius > 0.0, ErrorCode::domain_error, "radius must be positive");
  return 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
}

/// Radius from the equivalent diameter of the largest slice.
inline double equivalent_radius(const SliceAreaSeries& series) { return max_equivalent_diameter(series) / 2.0; }

// ---------------------------------------------------------------- area based

/// Sum of slice area times thickness.
inline double area_based_estimate(const SliceAreaSeries& series) {
  require(!series.empty(), ErrorCode::degenerate_input, "area-based estimate needs at least one slice");
  validate(series);
  double v = 0.0;
  for (const auto& s : series.samples) v += s.area * series.thickness;
  return v;
}

// ---------------------------------------------------------------- regression

struct RegressionEstimate {
  double volume = 0.0;
  double raw_integral = 0.0;
  bool clamped = false;  // raw integral was negative
  numopt::FitResult fit;
  std::vector<std::pair<std::size_t, double>> mse_by_degree;  // (degree, mse)
  std::size_t d_min = numopt::kDefaultMinDegree;
};

/// Best-MSE polynomial through (position, area), integrated over the series span.
inline RegressionEstimate regression_estimate(const SliceAreaSeries& series, std::size_t d_min = numopt::kDefaultMinDegree,
                                              std::size_t d_max = numopt::kDefaultMaxDegree) {
  require(series.samples.size() >= 3, ErrorCode::underdetermined, "regression estimate needs at least 3 slices");
  validate(series);
  std::vector<numopt::Point> pts;
  for (const auto& s : series.samples) pts.push_back({s.position, s.area});
  const auto sel = numopt::select_degree(pts, std::min(d_min, pts.size() - 1), d_max);
  RegressionEstimate r;
  r.fit = sel.best;
  r.mse_by_degree = sel.mse_by_degree;
  r.d_min = std::min(d_min, pts.size() - 1);
  r.raw_integral = numopt::poly_integral(sel.best.polynomial, series.samples.front().position, series.samples.back().position);
  r.clamped = r.raw_integral < 0.0;
  r.volume = std::max(0.0, r.raw_integral);
  return r;
}

// ---------------------------------------------------------------- ml

inline double ml_estimate(const VoxelGrid& grid, const nn::Network& net, double threshold = nn::kDefaultMaskThreshold) {
  return nn::predict_volume(net, grid, threshold);
}

// ---------------------------------------------------------------- all methods

struct MethodResult {
  std::optional<double> volume;  // empty when the method failed
  std::string error;
  double seconds = 0.0;
  std::map<std::string, double> details;
  std::optional<numopt::FitResult> fit;  // regression only
};

struct EstimateReport {
  std::string case_id;
  std::map<Method, MethodResult> results;
  Spacing spacing;
  std::size_t slice_count = 0;
  std::optional<double> reference_volume;  // analytic ground truth when known
  double threshold = nn::kDefaultMaskThreshold;
  std::vector<std::string> warnings;

  std::optional<double> volume(Method m) const {
    auto it = results.find(m);
    return it == results.end() ? std::nullopt : it->second.volume;
  }
};

/// Inputs for one case. Manual methods read `series` (or derive it from
/// `mask`); the ML method reads `grid` and `network`.
struct EstimateCase {
  std::string id = "case";
  std::optional<VoxelGrid> grid;
  std::optional<BinaryMask> mask;
  std::optional<SliceAreaSeries> series;
  const nn::Network* network = nullptr;
  double threshold = nn::kDefaultMaskThreshold;
  std::optional<double> manual_radius;
  std::optional<double> reference_volume;
  std::size_t d_min = numopt::kDefaultMinDegree;
  std::size_t d_max = numopt::kDefaultMaxDegree;
};

namespace detail {

template <class F>
MethodResult timed(F&& f) {
  MethodResult r;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    f(r);
  } catch (const Error& e) {
    r.volume.reset();
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

inline EstimateReport estimate_all(const EstimateCase& c, std::span<const Method> methods = kAllMethods) {
  EstimateReport rep;
  rep.case_id = c.id;
  rep.threshold = c.threshold;
  rep.reference_volume = c.reference_volume;
  std::optional<SliceAreaSeries> series = c.series;
  if (!series && c.mask) series = slice_areas(*c.mask);
  if (c.grid) {
    rep.spacing = c.grid->spacing();
    rep.slice_count = c.grid->dims().nz;
  } else if (c.mask) {
    rep.spacing = c.mask->spacing();
    rep.slice_count = c.mask->dims().nz;
  } else if (series) {
    rep.spacing = {1.0, 1.0, series->thickness};
    rep.slice_count = series->samples.size();
  }
  auto need_series = [&] {
    require(series.has_value(), ErrorCode::invalid_argument, "no segmentation or slice areas for this case");
    return *series;
  };
  for (auto m : methods) {
    switch (m) {
      case Method::spherical:
        rep.results[m] = detail::timed([&](MethodResult& r) {
          const double radius = c.manual_radius ? *c.manual_radius : equivalent_radius(need_series());
          r.details["radius_mm"] = radius;
          r.details["manual_radius"] = c.manual_radius ? 1.0 : 0.0;
          r.volume = spherical_estimate(radius);
        });
        break;
      case Method::area_based:
        rep.results[m] = detail::timed([&](MethodResult& r) {
          const auto s = need_series();
          r.details["slices"] = static_cast<double>(s.samples.size());
          r.details["thickness_mm"] = s.thickness;
          r.volume = area_based_estimate(s);
        });
        break;
      case Method::regression:
        rep.results[m] = detail::timed([&](MethodResult& r) {
          const auto e = regression_estimate(need_series(), c.d_min, c.d_max);
          r.details["degree"] = static_cast<double>(e.fit.polynomial.degree);
          r.details["mse"] = e.fit.mse;
          r.details["raw_integral"] = e.raw_integral;
          r.details["clamped"] = e.clamped ? 1.0 : 0.0;
          r.details["ill_conditioned"] = e.fit.ill_conditioned ? 1.0 : 0.0;
          r.fit = e.fit;
          r.volume = e.volume;
        });
        break;
      case Method::ml:
        rep.results[m] = detail::timed([&](MethodResult& r) {
          require(c.grid.has_value(), ErrorCode::invalid_argument, "no image data for the ml estimator");
          require(c.network != nullptr, ErrorCode::invalid_argument, "no trained network for the ml estimator");
          r.details["threshold"] = c.threshold;
          r.volume = ml_estimate(*c.grid, *c.network, c.threshold);
        });
        break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------- discrepancy

/// |a - b| / ((a + b) / 2) * 100; zero when both are zero.
inline double relative_discrepancy(double a, double b) {
  require(a >= 0.0 && b >= 0.0, ErrorCode::domain_error, "volumes must be non-negative");
  const double mean = 0.5 * (a + b);
  return mean == 0.0 ? 0.0 : std::abs(a - b) / mean * 100.0;
}

struct DiscrepancyMatrix {
  std::vector<Method> methods;
  std::vector<std::vector<std::optional<double>>> mean_percent;  // empty optional: undefined
  std::vector<std::vector<std::size_t>> case_count;
};

/// Mean pairwise discrepancy across cases; cases where either method failed
/// are left out of that pair. The diagonal is undefined.
inline DiscrepancyMatrix discrepancy(std::span<const EstimateReport> reports,
                                     std::span<const Method> methods = kAllMethods) {
  require(!reports.empty(), ErrorCode::invalid_argument, "discrepancy needs at least one report");
  DiscrepancyMatrix d;
  d.methods.assign(methods.begin(), methods.end());
  const std::size_t k = methods.size();
  d.mean_percent.assign(k, std::vector<std::optional<double>>(k));
  d.case_count.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      std::vector<double> values;
      for (const auto& r : reports) {
        const auto a = r.volume(methods[i]), b = r.volume(methods[j]);
        if (a && b) values.push_back(relative_discrepancy(*a, *b));
      }
      // Summed in sorted order so the result does not depend on case order.
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double v : values) sum += v;
      const std::size_t n = values.size();
      d.case_count[i][j] = d.case_count[j][i] = n;
      if (n) d.mean_percent[i][j] = d.mean_percent[j][i] = sum / static_cast<double>(n);
    }
  return d;
}

}  // namespace volumetrica
