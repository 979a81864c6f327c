// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "volumetrica/stats/tests.hpp"

namespace volumetrica::stats {

struct RocPoint {
  double threshold = 0.0;  // positive when score >= threshold
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // thresholds ascending
  double auc = 0.5;
};

struct YoudenPoint {
  double threshold = 0.0;
  double j = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

namespace detail {

inline void check_labels(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorCode::shape_mismatch, "scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, ErrorCode::invalid_argument, "labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  require(pos > 0 && pos < labels.size(), ErrorCode::degenerate_input, "ROC analysis needs both classes present");
  for (double s : scores) require(std::isfinite(s), ErrorCode::invalid_argument, "scores must be finite");
}

/// Mid-ranks (1-based) with ties sharing the average rank.
inline std::vector<double> midranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace detail

/// Mann-Whitney AUC (tied pairs count one half) and the empirical curve over
/// every observed score.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_labels(scores, labels);
  const auto rank = detail::midranks(scores);
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(labels.size()) - pos;
  RocCurve c;
  c.auc = std::clamp((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg), 0.0, 1.0);

  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  for (double t : thresholds) {
    double tp = 0.0, tn = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool predicted = scores[i] >= t;
      if (labels[i] && predicted) tp += 1.0;
      if (!labels[i] && !predicted) tn += 1.0;
    }
    c.points.push_back({t, tp / pos, tn / neg});
  }
  return c;
}

/// Threshold maximising sensitivity + specificity - 1; ties (within rounding)
/// go to the higher specificity.
inline YoudenPoint youden(const RocCurve& curve) {
  require(!curve.points.empty(), ErrorCode::degenerate_input, "empty ROC curve");
  constexpr double tie = 1e-12;
  YoudenPoint best{0.0, -2.0, 0.0, 0.0};
  for (const auto& p : curve.points) {
    const double j = p.sensitivity + p.specificity - 1.0;
    if (j > best.j + tie || (j >= best.j - tie && p.specificity > best.specificity))
      best = {p.threshold, j, p.sensitivity, p.specificity};
  }
  return best;
}

/// DeLong test for two correlated AUCs computed on the same cases.
inline TestResult delong_test(std::span<const double> a, std::span<const double> b, std::span<const int> labels) {
  detail::check_labels(a, labels);
  detail::check_labels(b, labels);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());

  auto psi = [](double x, double y) { return x > y ? 1.0 : x == y ? 0.5 : 0.0; };
  // Placement values: v10[i] over negatives for each positive, v01[j] over positives for each negative.
  auto placements = [&](std::span<const double> s, std::vector<double>& v10, std::vector<double>& v01) {
    v10.assign(pos.size(), 0.0);
    v01.assign(neg.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = 0; j < neg.size(); ++j) {
        const double v = psi(s[pos[i]], s[neg[j]]);
        v10[i] += v;
        v01[j] += v;
      }
    for (auto& v : v10) v /= n;
    for (auto& v : v01) v /= m;
    return std::accumulate(v10.begin(), v10.end(), 0.0) / m;
  };
  std::vector<double> a10, a01, b10, b01;
  const double auc_a = placements(a, a10, a01);
  const double auc_b = placements(b, b10, b01);

  auto cov = [](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2) return 0.0;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(x.size() - 1);
  };
  const double var = (cov(a10, a10) + cov(b10, b10) - 2.0 * cov(a10, b10)) / m +
                     (cov(a01, a01) + cov(b01, b01) - 2.0 * cov(a01, b01)) / n;
  const double diff = auc_a - auc_b;
  TestResult r{"delong", 0.0, std::nullopt, std::nullopt, 1.0};
  if (var > 0.0) {
    r.statistic = diff / std::sqrt(var);
  } else if (diff != 0.0) {
    r.statistic = std::copysign(INFINITY, diff);
  }
  r.p = std::isinf(r.statistic) ? 0.0 : z_two_sided_p(r.statistic);
  return r;
}

}  // namespace volumetrica::stats
