// SPDX-License-Identifier: Apache-2.0
#pragma once

// Volume refinement: fit a parametric slice-area profile A(x; theta) to measured
// (typically network-derived) areas and report the model's analytic volume.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "volumetrica/core/volume.hpp"
#include "volumetrica/numopt/levenberg_marquardt.hpp"

namespace volumetrica::numopt {

/// Cross-sectional area of an ellipsoid with semi-axes (a, b, c) centred at z0
/// and sliced perpendicular to c: A(x) = pi a b max(0, 1 - ((x - z0)/c)^2).
struct EllipsoidProfile {
  static constexpr int kParams = 4;  // a, b, c, z0

  static double area(const Eigen::VectorXd& t, double x) {
    const double u = (x - t(3)) / t(2);
    const double q = 1.0 - u * u;
    return q > 0.0 ? std::numbers::pi * t(0) * t(1) * q : 0.0;
  }

  static Eigen::Vector4d gradient(const Eigen::VectorXd& t, double x) {
    const double u = (x - t(3)) / t(2);
    const double q = 1.0 - u * u;
    if (q <= 0.0) return Eigen::Vector4d::Zero();
    const double pab = std::numbers::pi * t(0) * t(1);
    return {std::numbers::pi * t(1) * q, std::numbers::pi * t(0) * q, pab * 2.0 * u * u / t(2),
            pab * 2.0 * u / t(2)};
  }

  static double volume(const Eigen::VectorXd& t) {
    return 4.0 / 3.0 * std::numbers::pi * std::abs(t(0) * t(1) * t(2));
  }

  /// Starting point that matches the series' centroid, extent and summed volume.
  static Eigen::VectorXd initial_guess(const SliceAreaSeries& s) {
    double sum = 0.0, moment = 0.0, first = 0.0, last = 0.0;
    bool seen = false;
    for (const auto& p : s.samples) {
      if (p.area <= 0.0) continue;
      if (!seen) first = p.position;
      last = p.position;
      seen = true;
      sum += p.area;
      moment += p.area * p.position;
    }
    const double z0 = moment / sum;
    const double c = 0.5 * (last - first) + s.thickness;
    const double ab = 3.0 * sum * s.thickness / (4.0 * std::numbers::pi * c);
    const double a = std::sqrt(ab);
    Eigen::VectorXd t(4);
    t << a, a, c, z0;
    return t;
  }
};

struct RefineResult {
  double volume = 0.0;
  Eigen::VectorXd theta;
  LMDiagnostics diagnostics;
};

template <class Model = EllipsoidProfile>
RefineResult refine_volume(const SliceAreaSeries& measured,
                           std::optional<Eigen::VectorXd> theta0 = std::nullopt,
                           const LMConfig& config = {}) {
  bool any = false;
  for (const auto& p : measured.samples) any = any || p.area > 0.0;
  require(any, ErrorCode::degenerate_input, "cannot refine a volume from all-zero areas");

  const auto& samples = measured.samples;
  const auto m = static_cast<Eigen::Index>(samples.size());
  auto residuals = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      r(i) = Model::area(t, s.position) - s.area;
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& t) {
    Eigen::MatrixXd j(m, Model::kParams);
    for (Eigen::Index i = 0; i < m; ++i)
      j.row(i) = Model::gradient(t, samples[static_cast<std::size_t>(i)].position).transpose();
    return j;
  };

  auto fit = levenberg_marquardt(residuals, jacobian, theta0.value_or(Model::initial_guess(measured)),
                                 config);
  RefineResult out;
  out.volume = Model::volume(fit.theta);
  out.theta = std::move(fit.theta);
  out.diagnostics = std::move(fit.diagnostics);
  return out;
}

}  // namespace volumetrica::numopt
