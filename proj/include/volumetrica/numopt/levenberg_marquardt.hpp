// SPDX-License-Identifier: Apache-2.0
#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for nonlinear least squares:
//   theta <- theta - (J^T J + lambda I)^-1 J^T r
// lambda shrinks after an accepted step and grows after a rejected one.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volumetrica/error.hpp"

namespace volumetrica::numopt {

struct LMConfig {
  double lambda0 = 1e-3;
  double lambda_increase = 10.0;
  double lambda_decrease = 0.1;
  std::size_t max_iterations = 200;
  double residual_tolerance = 1e-10;
  double step_tolerance = 1e-10;
};

inline void validate(const LMConfig& c) {
  require(c.lambda0 > 0 && c.lambda_increase > 1.0 && c.lambda_decrease > 0 &&
              c.lambda_decrease < 1.0 && c.residual_tolerance > 0 && c.step_tolerance > 0,
          ErrorCode::invalid_argument, "invalid Levenberg-Marquardt configuration");
}

enum class LMStop { residual_tolerance, step_tolerance, max_iterations, no_progress };

inline const char* to_string(LMStop s) {
  switch (s) {
    case LMStop::residual_tolerance: return "residual-tolerance";
    case LMStop::step_tolerance: return "step-tolerance";
    case LMStop::max_iterations: return "max-iterations";
    case LMStop::no_progress: return "no-progress";
  }
  return "?";
}

struct LMDiagnostics {
  std::size_t iterations = 0;
  std::size_t accepted_steps = 0;
  double initial_norm = 0.0;
  double final_norm = 0.0;
  double final_lambda = 0.0;
  LMStop stop = LMStop::max_iterations;
  std::vector<double> accepted_norms;  // residual norm after each accepted step

  bool converged() const { return stop != LMStop::max_iterations; }
};

struct LMResult {
  Eigen::VectorXd theta;
  LMDiagnostics diagnostics;
};

// Escalating lambda past this point means no step can reduce the residual.
inline constexpr double kLambdaCap = 1e16;

template <class Residuals, class Jacobian>
LMResult levenberg_marquardt(Residuals&& residuals, Jacobian&& jacobian, Eigen::VectorXd theta,
                             const LMConfig& config = {}) {
  validate(config);
  const auto finite = [](const Eigen::VectorXd& v) { return v.allFinite(); };

  Eigen::VectorXd r = residuals(theta);
  require(finite(r), ErrorCode::numerical_failure, "residuals are not finite at the initial point");
  Eigen::MatrixXd jac = jacobian(theta);
  require(jac.rows() == r.size() && jac.cols() == theta.size(), ErrorCode::shape_mismatch,
          "jacobian dimensions do not match residuals and parameters");

  LMDiagnostics diag;
  diag.initial_norm = r.norm();
  double norm = diag.initial_norm;
  double lambda = config.lambda0;

  for (;;) {
    if (norm <= config.residual_tolerance) {
      diag.stop = LMStop::residual_tolerance;
      break;
    }
    if (diag.iterations >= config.max_iterations) {
      diag.stop = LMStop::max_iterations;
      break;
    }
    ++diag.iterations;

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    Eigen::MatrixXd damped = jtj;
    damped.diagonal().array() += lambda;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
    Eigen::VectorXd step = ldlt.solve(-jtr);
    if (ldlt.info() != Eigen::Success || !finite(step) || !ldlt.isPositive()) {
      lambda *= config.lambda_increase;
      if (lambda > kLambdaCap)
        fail(ErrorCode::numerical_failure, "damped normal matrix stays singular");
      continue;
    }
    if (step.norm() <= config.step_tolerance * (theta.norm() + config.step_tolerance)) {
      diag.stop = LMStop::step_tolerance;
      break;
    }
    const Eigen::VectorXd trial = theta + step;
    const Eigen::VectorXd trial_r = residuals(trial);
    const double trial_norm = finite(trial_r) ? trial_r.norm() : std::numeric_limits<double>::infinity();
    if (trial_norm < norm) {
      theta = trial;
      r = trial_r;
      norm = trial_norm;
      jac = jacobian(theta);
      lambda = std::max(lambda * config.lambda_decrease, 1e-300);
      ++diag.accepted_steps;
      diag.accepted_norms.push_back(norm);
    } else {
      lambda *= config.lambda_increase;
      if (lambda > kLambdaCap) {
        diag.stop = LMStop::no_progress;
        break;
      }
    }
  }
  diag.final_norm = norm;
  diag.final_lambda = lambda;
  return {std::move(theta), std::move(diag)};
}

}  // namespace volumetrica::numopt
