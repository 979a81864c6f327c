// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "volumetrica/error.hpp"

namespace volumetrica::stats {

struct LogisticModel {
  std::vector<double> coefficients;  // intercept first
  std::vector<double> std_errors;
  std::vector<double> odds_ratios;
  std::vector<double> or_lower;  // 95% interval
  std::vector<double> or_upper;
  std::size_t iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
};

inline constexpr double kLogisticRidge = 1e-8;
inline constexpr double kSeparationNorm = 30.0;

/// Newton (IRLS) maximum likelihood for log-odds = b0 + X b. `x` is row-major
/// with `predictors` columns; an intercept column is added.
inline LogisticModel logistic_fit(std::span<const double> x, std::size_t predictors, std::span<const int> y,
                                  std::size_t max_iter = 100, double tol = 1e-10) {
  const std::size_t n = y.size();
  require(x.size() == n * predictors, ErrorCode::shape_mismatch, "design matrix does not match the outcome count");
  std::size_t ones = 0;
  for (int v : y) {
    require(v == 0 || v == 1, ErrorCode::invalid_argument, "outcomes must be 0 or 1");
    ones += static_cast<std::size_t>(v);
  }
  require(ones > 0 && ones < n, ErrorCode::degenerate_input, "logistic regression needs both outcomes present");
  const std::size_t p = predictors + 1;
  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd target(n);
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < predictors; ++j) design(i, j + 1) = x[i * predictors + j];
    target(i) = y[i];
  }
  for (std::size_t j = 1; j < p; ++j)
    require(design.col(j).cwiseAbs().maxCoeff() > 0.0, ErrorCode::degenerate_input,
            "predictor " + std::to_string(j - 1) + " is identically zero");

  const Eigen::MatrixXd ridge = kLogisticRidge * Eigen::MatrixXd::Identity(p, p);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  LogisticModel m;
  Eigen::MatrixXd info;
  for (m.iterations = 1; m.iterations <= max_iter; ++m.iterations) {
    const Eigen::VectorXd eta = design * beta;
    const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    const Eigen::VectorXd w = mu.cwiseProduct((Eigen::VectorXd::Ones(n) - mu));
    info = design.transpose() * w.asDiagonal() * design + ridge;
    const Eigen::VectorXd step = info.ldlt().solve(design.transpose() * (target - mu));
    beta += step;
    require(beta.allFinite(), ErrorCode::numerical_failure, "logistic fit produced non-finite coefficients");
    if (beta.norm() > kSeparationNorm)
      fail(ErrorCode::separation, "coefficients diverge (norm > 30): the classes are perfectly separated");
    if (step.cwiseAbs().maxCoeff() < tol) {
      m.converged = true;
      break;
    }
  }
  m.iterations = std::min(m.iterations, max_iter);
  const Eigen::VectorXd eta = design * beta;
  const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
  info = design.transpose() * mu.cwiseProduct(Eigen::VectorXd::Ones(n) - mu).asDiagonal() * design + ridge;
  const Eigen::MatrixXd cov = info.inverse();
  for (std::size_t i = 0; i < n; ++i) {
    // log(1 + exp(eta)) evaluated without overflow
    const double e = eta(i);
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    m.log_likelihood += target(i) * e - softplus;
  }
  for (std::size_t j = 0; j < p; ++j) {
    const double b = beta(j), se = std::sqrt(cov(j, j));
    m.coefficients.push_back(b);
    m.std_errors.push_back(se);
    m.odds_ratios.push_back(std::exp(b));
    m.or_lower.push_back(std::exp(b - 1.96 * se));
    m.or_upper.push_back(std::exp(b + 1.96 * se));
  }
  return m;
}

}  // namespace volumetrica::stats
