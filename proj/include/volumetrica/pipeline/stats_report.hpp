// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "volumetrica/estimators/estimators.hpp"
#include "volumetrica/stats/resampling.hpp"

namespace volumetrica::pipeline {

/// Held-out volumes of a cohort, as produced by evaluation or read back from
/// an evaluation report.
struct CohortVolumes {
  std::vector<std::string> ids;
  std::vector<double> truth;
  std::vector<std::size_t> fold_of;
  std::size_t folds = 0;
  std::map<Method, std::vector<double>> volumes;  // every method, cohort order
};

struct StatsRow {
  std::string metric;
  std::optional<double> value;             // scalar metrics
  std::optional<stats::Interval> interval;  // interval metrics
  std::string unit;
  std::string remark;
  std::optional<double> statistic;
  std::optional<double> df1;
  std::optional<double> df2;
};

struct StatsReport {
  std::size_t cases = 0;
  std::size_t folds = 0;
  std::size_t resamples = stats::kDefaultResamples;
  std::uint64_t seed = 0;
  std::vector<StatsRow> rows;

  const StatsRow* find(const std::string& metric) const {
    for (const auto& r : rows)
      if (r.metric == metric) return &r;
    return nullptr;
  }
};

inline constexpr std::size_t kManualComparisons = 3;

/// |v - ref| / ref in percent, per case.
inline std::vector<double> percent_errors(std::span<const double> v, std::span<const double> ref) {
  require(v.size() == ref.size(), ErrorCode::shape_mismatch, "volume vectors differ in length");
  std::vector<double> e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    require(ref[i] > 0.0, ErrorCode::domain_error, "reference volumes must be positive");
    e[i] = std::abs(v[i] - ref[i]) / ref[i] * 100.0;
  }
  return e;
}

namespace detail {

inline StatsRow value_row(std::string metric, double v, std::string unit, std::string remark) {
  return {std::move(metric), v, std::nullopt, std::move(unit), std::move(remark), std::nullopt, std::nullopt, std::nullopt};
}

inline StatsRow interval_row(std::string metric, stats::Interval v, std::string unit, std::string remark) {
  return {std::move(metric), std::nullopt, v, std::move(unit), std::move(remark), std::nullopt, std::nullopt, std::nullopt};
}

inline StatsRow test_row(std::string metric, const stats::TestResult& t, double p, std::string remark) {
  return {std::move(metric), p, std::nullopt, "p", std::move(remark), t.statistic, t.df1, t.df2};
}

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

/// Cross-method validation report for the ML estimator. Errors are absolute
/// relative deviations in percent; manual methods are also reported against
/// the regression estimate.
inline StatsReport build_stats_report(const CohortVolumes& c, std::uint64_t seed,
                                      std::size_t resamples = stats::kDefaultResamples) {
  const std::size_t n = c.truth.size();
  require(n >= 3, ErrorCode::degenerate_input, "statistics need at least 3 cases");
  require(c.fold_of.size() == n && c.folds >= 2, ErrorCode::invalid_argument, "fold assignment missing");
  for (auto m : kAllMethods)
    require(c.volumes.count(m) && c.volumes.at(m).size() == n, ErrorCode::invalid_argument,
            std::string("missing held-out volumes for ") + to_string(m));

  StatsReport rep;
  rep.cases = n;
  rep.folds = c.folds;
  rep.resamples = resamples;
  rep.seed = seed;
  auto& rows = rep.rows;
  const auto& ml = c.volumes.at(Method::ml);
  const auto& reg = c.volumes.at(Method::regression);

  std::map<Method, std::vector<double>> err;
  for (auto m : kAllMethods) err[m] = percent_errors(c.volumes.at(m), c.truth);

  // Cross-validation of the ML error.
  std::vector<std::vector<double>> by_fold(c.folds);
  for (std::size_t i = 0; i < n; ++i) {
    require(c.fold_of[i] < c.folds, ErrorCode::invalid_argument, "fold index out of range");
    by_fold[c.fold_of[i]].push_back(err[Method::ml][i]);
  }
  std::vector<double> fold_means;
  for (const auto& f : by_fold) {
    require(!f.empty(), ErrorCode::invalid_argument, "empty cross-validation fold");
    fold_means.push_back(stats::mean(f));
  }
  const std::string k = std::to_string(c.folds);
  rows.push_back(detail::value_row("cv_mean_error", stats::mean(fold_means), "%",
                  k + "-fold CV, mean over folds of held-out ML relative error vs ground truth"));
  rows.push_back(detail::value_row("cv_sd_error", stats::stddev(fold_means), "%", "sd of per-fold mean error (n-1)"));
  rows.push_back(detail::interval_row("cv_error_ci95", stats::bootstrap_ci(err[Method::ml], resamples, 0.95, seed), "%",
                  "percentile bootstrap of the held-out case errors, " + std::to_string(resamples) + " resamples"));

  // Per-method mean error under both conventions.
  for (auto m : {Method::spherical, Method::area_based, Method::regression})
    rows.push_back(detail::value_row(std::string("mean_error_") + to_string(m) + "_vs_truth", stats::mean(err[m]), "%",
                                     "mean |V - V_true| / V_true"));
  for (auto m : {Method::spherical, Method::area_based, Method::ml})
    rows.push_back(detail::value_row(std::string("mean_error_") + to_string(m) + "_vs_regression",
                                     stats::mean(percent_errors(c.volumes.at(m), reg)), "%",
                                     "mean |V - V_reg| / V_reg"));

  // ML error against each manual method's error, Bonferroni-corrected.
  for (auto m : {Method::spherical, Method::area_based, Method::regression}) {
    const auto t = stats::paired_t(err[Method::ml], err[m]);
    const double p = std::min(1.0, t.p * static_cast<double>(kManualComparisons));
    const double diff = stats::mean(err[m]) - stats::mean(err[Method::ml]);
    rows.push_back(detail::test_row(std::string("paired_t_ml_vs_") + to_string(m), t, p,
                                    "paired t on case errors, Bonferroni x" + std::to_string(kManualComparisons) +
                                        "; manual minus ML mean error " + detail::fixed(diff) + " points"));
  }

  // One-way anova and Tukey HSD on the four methods' errors.
  std::vector<std::vector<double>> groups;
  for (auto m : kAllMethods) groups.push_back(err[m]);
  const auto f = stats::one_way_anova(groups);
  StatsRow anova{"anova_f", f.statistic, std::nullopt, "F", "", f.statistic, f.df1, f.df2};
  anova.remark = "F(" + detail::fixed(*f.df1, 0) + "," + detail::fixed(*f.df2, 0) + "), p = " +
                 detail::fixed(f.p, 6) + "; case errors of all four methods";
  rows.push_back(anova);
  for (const auto& t : stats::tukey_hsd(groups))
    rows.push_back(detail::test_row(std::string("tukey_") + to_string(kAllMethods[t.i]) + "_vs_" +
                                        to_string(kAllMethods[t.j]),
                                    t.test, t.test.p,
                                    "mean error difference " + detail::fixed(t.mean_difference) + " points"));

  // Agreement of ML with the regression estimate.
  const auto ba = stats::bland_altman(ml, reg);
  rows.push_back(detail::value_row("bland_altman_bias", ba.bias, "mm3", "mean of V_ml - V_reg"));
  rows.push_back(detail::interval_row("bland_altman_limits", {ba.lower, ba.upper}, "mm3",
                                      "bias -/+ 1.96 sd, sd = " + detail::fixed(ba.sd) + " mm3"));

  // Assumption checks.
  std::vector<double> residuals(n);
  for (std::size_t i = 0; i < n; ++i) residuals[i] = ml[i] - c.truth[i];
  const auto sw = stats::shapiro_wilk(residuals);
  rows.push_back(detail::test_row("shapiro_wilk_ml_residuals", sw, sw.p, "W on V_ml - V_true"));
  const auto lv = stats::levene(by_fold);
  rows.push_back(detail::test_row("levene_folds", lv, lv.p, "median-centred Levene across folds on ML errors"));
  return rep;
}

/// Collects held-out volumes from per-case reports.
inline CohortVolumes collect_volumes(std::span<const EstimateReport> reports, std::span<const double> truth,
                                     std::span<const std::size_t> fold_of, std::size_t folds) {
  require(reports.size() == truth.size() && truth.size() == fold_of.size(), ErrorCode::shape_mismatch,
          "reports, truth and fold assignment differ in length");
  CohortVolumes c;
  c.truth.assign(truth.begin(), truth.end());
  c.fold_of.assign(fold_of.begin(), fold_of.end());
  c.folds = folds;
  for (const auto& r : reports) {
    c.ids.push_back(r.case_id);
    for (auto m : kAllMethods) {
      const auto v = r.volume(m);
      require(v.has_value(), ErrorCode::invalid_argument,
              std::string(to_string(m)) + " volume missing for " + r.case_id);
      c.volumes[m].push_back(*v);
    }
  }
  return c;
}

}  // namespace volumetrica::pipeline
