// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "volumetrica/core/random.hpp"
#include "volumetrica/stats/tests.hpp"

namespace volumetrica::stats {

inline constexpr std::size_t kDefaultResamples = 2000;
inline constexpr std::uint64_t kFoldStream = 0x4f1d;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the mean. Resample r draws from stream r of the
/// seed, so the interval is a pure function of (values, resamples, level, seed).
inline Interval bootstrap_ci(std::span<const double> values, std::size_t resamples = kDefaultResamples,
                             double level = 0.95, std::uint64_t seed = 0) {
  require(values.size() >= 2, ErrorCode::degenerate_input, "bootstrap needs at least 2 values");
  require(resamples >= 2, ErrorCode::invalid_argument, "bootstrap needs at least 2 resamples");
  require(level > 0.0 && level < 1.0, ErrorCode::domain_error, "confidence level must be in (0, 1)");
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    CounterRng rng(seed, r);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.below(n)];
    means[r] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  return {quantile_sorted(means, 0.5 * (1.0 - level)), quantile_sorted(means, 0.5 * (1.0 + level))};
}

struct CVPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_of;                // fold index per case
  std::vector<std::vector<std::size_t>> folds;     // test indices, ascending

  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) out.push_back(i);
    return out;
  }
};

/// Shuffles 0..n-1 and cuts it into k contiguous folds; the first n % k folds
/// take one extra case.
inline CVPlan kfold(std::size_t n, std::size_t k = 5, std::uint64_t seed = 0) {
  require(k >= 2, ErrorCode::invalid_argument, "k-fold needs k >= 2");
  require(n >= k, ErrorCode::invalid_argument,
          "k-fold needs at least k cases (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  CounterRng rng(seed, kFoldStream);
  const auto perm = permutation(n, rng);
  CVPlan plan{k, seed, std::vector<std::size_t>(n), std::vector<std::vector<std::size_t>>(k)};
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i, ++at) {
      plan.fold_of[perm[at]] = f;
      plan.folds[f].push_back(perm[at]);
    }
    std::sort(plan.folds[f].begin(), plan.folds[f].end());
  }
  return plan;
}

struct CVResult {
  std::vector<double> fold_errors;  // mean |v - truth| / truth per fold
  std::vector<double> case_errors;  // |v - truth| / truth per case (held-out estimate)
  std::vector<double> estimates;    // held-out volume per case
  double mean = 0.0;
  double sd = 0.0;
};

/// For each fold, `train(train_indices, fold)` returns a model and
/// `estimate(model, index)` the held-out volume of that case.
template <class Train, class Estimate>
CVResult cv_volume_error(std::span<const double> truth, const CVPlan& plan, Train&& train, Estimate&& estimate) {
  require(plan.fold_of.size() == truth.size(), ErrorCode::shape_mismatch, "CV plan does not match the cohort size");
  for (double t : truth) require(t > 0.0, ErrorCode::domain_error, "ground-truth volumes must be positive");
  CVResult r;
  r.case_errors.assign(truth.size(), 0.0);
  r.estimates.assign(truth.size(), 0.0);
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto model = train(plan.train_indices(f), f);
    double sum = 0.0;
    for (auto i : plan.folds[f]) {
      r.estimates[i] = estimate(model, i);
      r.case_errors[i] = std::abs(r.estimates[i] - truth[i]) / truth[i];
      sum += r.case_errors[i];
    }
    r.fold_errors.push_back(sum / static_cast<double>(plan.folds[f].size()));
  }
  r.mean = mean(r.fold_errors);
  r.sd = r.fold_errors.size() >= 2 ? stddev(r.fold_errors) : 0.0;
  return r;
}

}  // namespace volumetrica::stats
