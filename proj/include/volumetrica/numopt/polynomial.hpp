// SPDX-License-Identifier: Apache-2.0
#pragma once

// Least-squares polynomial fitting with MSE-driven degree selection.
//
// Fits are solved on the centred/scaled abscissa u = (x - mid) / halfwidth,
// which keeps degree-8 fits on x in [1, 11] well conditioned; the solution is
// then expanded back into monomial coefficients of x.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "volumetrica/error.hpp"

namespace volumetrica::numopt {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Polynomial {
  std::size_t degree = 0;
  std::vector<double> coefficients;  // a0 .. a_degree, in x
  double domain_lo = 0.0;
  double domain_hi = 0.0;

  double operator()(double x) const {
    double acc = 0.0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * x + *it;
    return acc;
  }
};

struct FitResult {
  Polynomial polynomial;
  double mse = 0.0;
  bool ill_conditioned = false;
  double condition_number = 1.0;  // of the scaled design matrix
};

inline constexpr double kIllConditionedThreshold = 1e10;

namespace detail {

struct ScaledBasis {
  double mid;
  double half;
  double operator()(double x) const { return (x - mid) / half; }
};

inline ScaledBasis make_basis(std::span<const Point> pts) {
  auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(),
                                      [](const Point& a, const Point& b) { return a.x < b.x; });
  const double mid = 0.5 * (lo->x + hi->x);
  const double half = 0.5 * (hi->x - lo->x);
  return {mid, half > 0.0 ? half : 1.0};
}

inline Eigen::MatrixXd design_matrix(std::span<const Point> pts, std::size_t degree,
                                     const ScaledBasis& basis) {
  Eigen::MatrixXd v(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(degree + 1));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double u = basis(pts[i].x);
    double p = 1.0;
    for (std::size_t k = 0; k <= degree; ++k) {
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = p;
      p *= u;
    }
  }
  return v;
}

/// Expands sum_k c_k ((x - m)/h)^k into monomial coefficients of x.
inline std::vector<double> unscale(const Eigen::VectorXd& c, const ScaledBasis& basis) {
  const auto n = static_cast<std::size_t>(c.size());
  std::vector<double> a(n, 0.0);
  std::vector<double> row{1.0};  // binomial coefficients C(k, j)
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      std::vector<double> next(k + 1, 1.0);
      for (std::size_t j = 1; j < k; ++j) next[j] = row[j - 1] + row[j];
      row = std::move(next);
    }
    const double scale = c(static_cast<Eigen::Index>(k)) / std::pow(basis.half, static_cast<double>(k));
    for (std::size_t j = 0; j <= k; ++j)
      a[j] += scale * row[j] * std::pow(-basis.mid, static_cast<double>(k - j));
  }
  return a;
}

inline void check_points(std::span<const Point> pts, std::size_t degree) {
  require(pts.size() >= degree + 1, ErrorCode::underdetermined,
          "polynomial of degree " + std::to_string(degree) + " needs at least " +
              std::to_string(degree + 1) + " points");
  std::vector<double> xs;
  xs.reserve(pts.size());
  for (const auto& p : pts) {
    require(std::isfinite(p.x) && std::isfinite(p.y), ErrorCode::invalid_argument,
            "fit points must be finite");
    xs.push_back(p.x);
  }
  std::sort(xs.begin(), xs.end());
  require(std::adjacent_find(xs.begin(), xs.end()) == xs.end(), ErrorCode::duplicate_abscissa,
          "fit points contain duplicate x values");
}

}  // namespace detail

/// Least-squares fit by Householder QR on the scaled basis.
inline FitResult polyfit(std::span<const Point> pts, std::size_t degree) {
  detail::check_points(pts, degree);
  const auto basis = detail::make_basis(pts);
  const Eigen::MatrixXd v = detail::design_matrix(pts, degree, basis);
  Eigen::VectorXd y(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) y(static_cast<Eigen::Index>(i)) = pts[i].y;

  const Eigen::VectorXd c = v.householderQr().solve(y);
  const Eigen::VectorXd residual = v * c - y;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1)
                                            : std::numeric_limits<double>::infinity();

  FitResult out;
  out.polynomial.degree = degree;
  out.polynomial.coefficients = detail::unscale(c, basis);
  auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(),
                                      [](const Point& a, const Point& b) { return a.x < b.x; });
  out.polynomial.domain_lo = lo->x;
  out.polynomial.domain_hi = hi->x;
  out.mse = residual.squaredNorm() / static_cast<double>(pts.size());
  out.condition_number = cond;
  out.ill_conditioned = !(cond < kIllConditionedThreshold);
  return out;
}

struct DegreeSelection {
  FitResult best;
  std::vector<std::pair<std::size_t, double>> mse_by_degree;
};

inline constexpr std::size_t kDefaultMinDegree = 2;
inline constexpr std::size_t kDefaultMaxDegree = 8;

/// Fits every degree in [d_min, min(d_max, n - 1)] and keeps the smallest MSE.
/// An MSE only counts as smaller when it beats the incumbent by more than
/// 1e-12 (scaled by the data's mean square), so exact fits resolve to the
/// lowest degree.
inline DegreeSelection select_degree(std::span<const Point> pts,
                                     std::size_t d_min = kDefaultMinDegree,
                                     std::size_t d_max = kDefaultMaxDegree) {
  require(d_min <= d_max, ErrorCode::invalid_argument, "d_min exceeds d_max");
  require(pts.size() >= d_min + 1, ErrorCode::underdetermined,
          "degree selection needs at least d_min + 1 points");
  const std::size_t top = std::min(d_max, pts.size() - 1);
  double mean_sq = 0.0;
  for (const auto& p : pts) mean_sq += p.y * p.y;
  mean_sq /= static_cast<double>(pts.size());
  const double tie = 1e-12 * std::max(1.0, mean_sq);

  DegreeSelection sel;
  bool have = false;
  for (std::size_t d = d_min; d <= top; ++d) {
    auto fit = polyfit(pts, d);
    sel.mse_by_degree.emplace_back(d, fit.mse);
    if (!have || fit.mse < sel.best.mse - tie) {
      sel.best = std::move(fit);
      have = true;
    }
  }
  return sel;
}

/// Exact integral of p over [a, b].
inline double poly_integral(const Polynomial& p, double a, double b) {
  require(a <= b, ErrorCode::invalid_argument, "integration bounds must satisfy a <= b");
  double sum = 0.0;
  double pa = a, pb = b;
  for (std::size_t i = 0; i < p.coefficients.size(); ++i) {
    sum += p.coefficients[i] * (pb - pa) / static_cast<double>(i + 1);
    pa *= a;
    pb *= b;
  }
  return sum;
}

}  // namespace volumetrica::numopt
