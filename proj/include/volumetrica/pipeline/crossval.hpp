// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "volumetrica/estimators/estimators.hpp"
#include "volumetrica/nn/segmentation.hpp"
#include "volumetrica/nn/train.hpp"
#include "volumetrica/pipeline/cohort.hpp"
#include "volumetrica/stats/resampling.hpp"

namespace volumetrica::pipeline {

struct TrainSettings {
  std::size_t epochs = 200;
  double learning_rate = nn::TrainConfig{}.learning_rate;
  nn::LossKind loss = nn::LossKind::bce;
  std::uint64_t seed = 0;
};

struct FoldModel {
  nn::Network network;
  nn::TrainingLog log;
  std::vector<std::size_t> train_cases;
};

/// Seed for fold f; fold models are independent of training order across folds.
inline std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return mix64(seed ^ (0xf01d + fold)); }

/// Trains a fresh 3D network on the given cases (supervised, target = mask).
inline FoldModel train_model(const std::vector<CohortCase>& cohort, const std::vector<std::size_t>& cases,
                             const TrainSettings& settings, std::uint64_t seed) {
  FoldModel m{nn::build_segmentation_net_3d(seed), {}, cases};
  std::vector<nn::Sample> samples;
  samples.reserve(cases.size());
  for (auto i : cases)
    samples.push_back({nn::network_input(cohort[i].phantom.grid, m.network),
                       nn::segmentation_target(cohort[i].phantom.mask, m.network)});
  nn::TrainConfig cfg;
  cfg.epochs = settings.epochs;
  cfg.learning_rate = settings.learning_rate;
  cfg.loss = settings.loss;
  cfg.seed = seed;
  m.log = nn::train(m.network, samples, cfg);
  return m;
}

/// One model per fold, each trained on the other k-1 folds.
inline std::vector<FoldModel> train_folds(const std::vector<CohortCase>& cohort, const stats::CVPlan& plan,
                                          const TrainSettings& settings) {
  require(plan.fold_of.size() == cohort.size(), ErrorCode::shape_mismatch, "CV plan does not match the cohort");
  std::vector<FoldModel> models;
  for (std::size_t f = 0; f < plan.k; ++f)
    models.push_back(train_model(cohort, plan.train_indices(f), settings, fold_seed(settings.seed, f)));
  return models;
}

struct CohortEvaluation {
  stats::CVPlan plan;
  std::vector<double> truth;
  std::vector<EstimateReport> reports;  // held-out estimates, cohort order
  stats::CVResult ml;                    // ML relative errors per fold and case
};

/// Held-out estimates: each case is scored by the model of the fold that
/// excluded it; the manual methods read the phantom mask.
inline CohortEvaluation evaluate_cohort(const std::vector<CohortCase>& cohort, const stats::CVPlan& plan,
                                        const std::vector<FoldModel>& models, double threshold) {
  require(models.size() == plan.k, ErrorCode::shape_mismatch, "one model per fold is required");
  CohortEvaluation ev;
  ev.plan = plan;
  for (const auto& c : cohort) ev.truth.push_back(c.phantom.analytic_volume);
  ev.reports.resize(cohort.size());
  auto pick = [&](const std::vector<std::size_t>& train_idx, std::size_t fold) {
    require(models[fold].train_cases == train_idx, ErrorCode::invalid_argument,
            "fold " + std::to_string(fold) + " model was trained on a different split");
    return &models[fold].network;
  };
  auto estimate = [&](const nn::Network* net, std::size_t i) {
    EstimateCase ec;
    ec.id = cohort[i].id;
    ec.grid = cohort[i].phantom.grid;
    ec.mask = cohort[i].phantom.mask;
    ec.network = net;
    ec.threshold = threshold;
    ec.reference_volume = cohort[i].phantom.analytic_volume;
    ev.reports[i] = estimate_all(ec);
    const auto v = ev.reports[i].volume(Method::ml);
    if (!v) fail(ErrorCode::numerical_failure, "ml estimate failed for " + ec.id + ": " +
                                                   ev.reports[i].results.at(Method::ml).error);
    return *v;
  };
  ev.ml = stats::cv_volume_error(ev.truth, plan, pick, estimate);
  return ev;
}

}  // namespace volumetrica::pipeline
