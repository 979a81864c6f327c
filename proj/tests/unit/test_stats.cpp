// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "stats_fixtures.hpp"
#include "volumetrica/core/random.hpp"
#include "volumetrica/stats/logistic.hpp"
#include "volumetrica/stats/resampling.hpp"
#include "volumetrica/stats/roc.hpp"

using namespace volumetrica;
using namespace volumetrica::stats;
namespace fx = fixtures::stats;

namespace {

std::vector<double> random_vector(CounterRng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

template <class F>
ErrorCode error_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::invalid_argument;
}

double pair_count_auc(std::span<const double> s, std::span<const int> y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / pairs;
}

}  // namespace

// ---------------------------------------------------------------- distributions

TEST(Distributions, StudentizedRangeMatchesReference) {
  const auto& v = fx::kPtukey;
  for (std::size_t i = 0; i < v.size(); i += 4)
    EXPECT_NEAR(studentized_range_cdf(v[i], v[i + 1], v[i + 2]), v[i + 3], 1e-8) << "q=" << v[i] << " k=" << v[i + 1];
  EXPECT_EQ(studentized_range_cdf(0.0, 3, 10), 0.0);
  EXPECT_NEAR(studentized_range_cdf(40.0, 3, 10), 1.0, 1e-6);
}

TEST(Distributions, TAndFTailsMatchReference) {
  for (std::size_t i = 0; i < fx::kTwoSidedT.size(); i += 3)
    EXPECT_NEAR(t_two_sided_p(fx::kTwoSidedT[i], fx::kTwoSidedT[i + 1]), fx::kTwoSidedT[i + 2], 1e-12);
  for (std::size_t i = 0; i < fx::kFUpper.size(); i += 4)
    EXPECT_NEAR(f_upper_p(fx::kFUpper[i], fx::kFUpper[i + 1], fx::kFUpper[i + 2]), fx::kFUpper[i + 3],
                1e-12 + 1e-9 * fx::kFUpper[i + 3]);
  EXPECT_EQ(t_two_sided_p(0.0, 5), 1.0);
  EXPECT_EQ(z_two_sided_p(0.0), 1.0);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
}

// ---------------------------------------------------------------- Bland-Altman

TEST(BlandAltmanTest, TrivialCases) {
  const std::vector<double> a{3, 1, 4, 1, 5};
  auto same = bland_altman(a, a);
  EXPECT_EQ(same.bias, 0.0);
  EXPECT_EQ(same.lower, 0.0);
  EXPECT_EQ(same.upper, 0.0);
  std::vector<double> m = a;
  for (auto& v : m) v += 5.0;
  auto shifted = bland_altman(m, a);
  EXPECT_EQ(shifted.bias, 5.0);
  EXPECT_EQ(shifted.sd, 0.0);
  EXPECT_EQ(shifted.lower, 5.0);
  EXPECT_EQ(shifted.upper, 5.0);
  EXPECT_EQ(error_code([&] { bland_altman(a, std::vector<double>{1.0}); }), ErrorCode::shape_mismatch);
  EXPECT_EQ(error_code([&] { bland_altman(std::vector<double>{1.0}, std::vector<double>{2.0}); }),
            ErrorCode::degenerate_input);
}

TEST(BlandAltmanTest, MatchesExtendedPrecisionFormula) {
  CounterRng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_vector(rng, 10, 100, 900), a = random_vector(rng, 10, 100, 900);
    long double sum = 0, ss = 0;
    for (std::size_t i = 0; i < 10; ++i) sum += (long double)m[i] - a[i];
    const long double bias = sum / 10;
    for (std::size_t i = 0; i < 10; ++i) ss += ((long double)m[i] - a[i] - bias) * ((long double)m[i] - a[i] - bias);
    const long double sd = std::sqrt(ss / 9);
    const auto r = bland_altman(m, a);
    EXPECT_NEAR(r.bias, (double)bias, 1e-12 * std::abs((double)bias) + 1e-12);
    EXPECT_NEAR(r.sd, (double)sd, 1e-12 * (double)sd);
    EXPECT_NEAR(r.lower, (double)(bias - 1.96L * sd), 1e-12 * (double)sd + 1e-12);
    EXPECT_NEAR(r.upper, (double)(bias + 1.96L * sd), 1e-12 * (double)sd + 1e-12);
    // Limits recompute exactly from the stored differences.
    const auto again = bland_altman(r.differences, std::vector<double>(10, 0.0));
    EXPECT_EQ(again.lower, r.lower);
    EXPECT_EQ(again.upper, r.upper);
  }
}

// ---------------------------------------------------------------- t, anova, Tukey

TEST(PairedT, MatchesReferenceAndRejectsZeroVariance) {
  const auto r = paired_t(fx::kPairedX, fx::kPairedY);
  EXPECT_NEAR(r.statistic, fx::kPairedT, 1e-10);
  EXPECT_NEAR(r.p, fx::kPairedP, 1e-12);
  EXPECT_EQ(*r.df1, 11.0);
  EXPECT_EQ(error_code([] { paired_t(fx::kPairedX, fx::kPairedX); }), ErrorCode::degenerate_input);
}

TEST(Anova, EqualGroupsGiveZeroF) {
  const std::vector<std::vector<double>> g{{1, 2, 3}, {1, 2, 3}, {3, 2, 1}};
  const auto r = one_way_anova(g);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p, 1.0);
  const std::vector<std::vector<double>> flat{{2, 2}, {2, 2}};
  EXPECT_EQ(error_code([&] { one_way_anova(flat); }), ErrorCode::degenerate_input);
}

TEST(Anova, MatchesSumOfSquaresOracle) {
  const std::vector<std::vector<double>> g{fx::kAnovaG1, fx::kAnovaG2, fx::kAnovaG3};
  // Total and within sums of squares by brute force; between is their difference.
  std::vector<double> all;
  for (const auto& x : g) all.insert(all.end(), x.begin(), x.end());
  long double grand = 0, sst = 0, ssw = 0;
  for (double v : all) grand += v;
  grand /= all.size();
  for (double v : all) sst += (v - grand) * (v - grand);
  for (const auto& x : g) {
    long double m = 0;
    for (double v : x) m += v;
    m /= x.size();
    for (double v : x) ssw += (v - m) * (v - m);
  }
  const double dfb = 2, dfw = static_cast<double>(all.size() - 3);
  const double f = static_cast<double>(((sst - ssw) / dfb) / (ssw / dfw));
  const auto r = one_way_anova(g);
  EXPECT_NEAR(r.statistic, f, 1e-9);
  EXPECT_NEAR(r.statistic, fx::kAnovaF, 1e-9);
  EXPECT_NEAR(r.p, fx::kAnovaP, 1e-12);
  EXPECT_EQ(*r.df1, 2.0);
  EXPECT_EQ(*r.df2, 12.0);
}

TEST(Anova, TwoGroupFEqualsTSquared) {
  CounterRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_vector(rng, 3 + rng.below(20), -2, 3), y = random_vector(rng, 3 + rng.below(20), -1, 4);
    const std::vector<std::vector<double>> g{x, y};
    const double t = student_t(x, y).statistic;
    EXPECT_NEAR(one_way_anova(g).statistic, t * t, 1e-9 * std::max(1.0, t * t));
    EXPECT_NEAR(one_way_anova(g).p, student_t(x, y).p, 1e-10);
  }
}

TEST(Tukey, MatchesReference) {
  const std::vector<std::vector<double>> g{fx::kAnovaG1, fx::kAnovaG2, fx::kAnovaG3};
  const auto r = tukey_hsd(g);
  ASSERT_EQ(r.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r[i].test.p, fx::kTukeyP[i], 1e-8);
  EXPECT_TRUE(r[0].reject);
  EXPECT_EQ(r[0].i, 0u);
  EXPECT_EQ(r[0].j, 1u);
  EXPECT_LT(r[0].mean_difference, 0.0);
}

// ---------------------------------------------------------------- normality and spread

TEST(ShapiroWilk, MatchesReference) {
  std::vector<double> lin;
  for (int i = 1; i <= 50; ++i) lin.push_back(i);
  const auto r = shapiro_wilk(lin);
  EXPECT_LT(r.statistic, 0.99);
  EXPECT_NEAR(r.statistic, fx::kSwLinear50W, 1e-8);
  EXPECT_NEAR(r.p, fx::kSwLinear50P, 1e-7);
  const std::pair<const std::vector<double>*, std::pair<double, double>> cases[] = {
      {&fx::kSwSmall, {fx::kSwSmallW, fx::kSwSmallP}},
      {&fx::kSwThree, {fx::kSwThreeW, fx::kSwThreeP}},
      {&fx::kSwSkew, {fx::kSwSkewW, fx::kSwSkewP}}};
  for (const auto& [x, ref] : cases) {
    const auto s = shapiro_wilk(*x);
    EXPECT_NEAR(s.statistic, ref.first, 1e-8) << x->size();
    EXPECT_NEAR(s.p, ref.second, 1e-7) << x->size();
  }
  EXPECT_EQ(error_code([] { shapiro_wilk(std::vector<double>{1, 2}); }), ErrorCode::domain_error);
  EXPECT_EQ(error_code([] { shapiro_wilk(std::vector<double>(5001, 1.0)); }), ErrorCode::domain_error);
}

TEST(Levene, MatchesReferenceAndEdgeCases) {
  const std::vector<std::vector<double>> g{fx::kAnovaG1, fx::kAnovaG2, fx::kAnovaG3};
  const auto r = levene(g);
  EXPECT_NEAR(r.statistic, fx::kLeveneW, 1e-10);
  EXPECT_NEAR(r.p, fx::kLeveneP, 1e-10);
  const std::vector<std::vector<double>> constant{{4, 4, 4}, {4, 4, 4}};
  EXPECT_EQ(error_code([&] { levene(constant); }), ErrorCode::degenerate_input);
  const std::vector<std::vector<double>> mirrored{{1, 2, 4, 7}, {-1, -2, -4, -7}, {11, 12, 14, 17}};
  EXPECT_NEAR(levene(mirrored).statistic, 0.0, 1e-9);
}

TEST(PValues, AlwaysInUnitInterval) {
  CounterRng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> g;
    for (int k = 0; k < 3; ++k) g.push_back(random_vector(rng, 4 + rng.below(10), 0, 1 + k * rng.uniform()));
    for (double p : {one_way_anova(g).p, levene(g).p, shapiro_wilk(g[0]).p, student_t(g[0], g[1]).p}) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
    for (const auto& t : tukey_hsd(g)) {
      EXPECT_GE(t.test.p, 0.0);
      EXPECT_LE(t.test.p, 1.0);
    }
  }
}

// ---------------------------------------------------------------- bootstrap and folds

TEST(Bootstrap, ConstantDeterministicAndQuantileConvention) {
  const std::vector<double> c(12, 3.25);
  const auto ci = bootstrap_ci(c, 500, 0.95, 1);
  EXPECT_EQ(ci.lo, 3.25);
  EXPECT_EQ(ci.hi, 3.25);
  CounterRng rng(8);
  const auto v = random_vector(rng, 40);
  const auto a = bootstrap_ci(v, 2000, 0.95, 42), b = bootstrap_ci(v, 2000, 0.95, 42);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_LT(a.lo, mean(v));
  EXPECT_GT(a.hi, mean(v));
  const auto d = bootstrap_ci(v, 2000, 0.95, 43);
  EXPECT_NE(a.lo, d.lo);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(quantile_sorted(fx::kQuantileProbe, std::array{0.025, 0.5, 0.975}[i]), fx::kQuantileProbeAt[i], 1e-12);
}

TEST(Bootstrap, CoversZeroForStandardNormal) {
  int covered = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    CounterRng rng(1000 + trial);
    std::vector<double> x(100);
    for (auto& v : x) v = rng.normal();
    const auto ci = bootstrap_ci(x, 2000, 0.95, trial);
    covered += ci.lo <= 0.0 && 0.0 <= ci.hi;
  }
  EXPECT_GE(covered, 90);
}

TEST(KFold, BalancedPartition) {
  const auto p10 = kfold(10, 5, 3);
  for (const auto& f : p10.folds) EXPECT_EQ(f.size(), 2u);
  const auto p11 = kfold(11, 5, 3);
  std::vector<std::size_t> sizes;
  for (const auto& f : p11.folds) sizes.push_back(f.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 2, 2, 2}));
  for (std::size_t n : {5u, 11u, 25u, 64u}) {
    const auto p = kfold(n, 5, n);
    std::vector<std::size_t> all;
    for (std::size_t f = 0; f < 5; ++f) {
      all.insert(all.end(), p.folds[f].begin(), p.folds[f].end());
      for (auto i : p.folds[f]) EXPECT_EQ(p.fold_of[i], f);
      EXPECT_EQ(p.train_indices(f).size() + p.folds[f].size(), n);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(all[i], i);
  }
  EXPECT_EQ(kfold(25, 5, 9).fold_of, kfold(25, 5, 9).fold_of);
  EXPECT_NE(kfold(25, 5, 9).fold_of, kfold(25, 5, 10).fold_of);
  EXPECT_EQ(error_code([] { kfold(4, 5, 0); }), ErrorCode::invalid_argument);
}

TEST(KFold, CrossValidatedErrorUsesOnlyTrainingFolds) {
  std::vector<double> truth;
  for (int i = 0; i < 11; ++i) truth.push_back(100.0 + 10.0 * i);
  const auto plan = kfold(truth.size(), 5, 1);
  // The "model" is the mean truth over its training cases; held-out cases must be absent.
  auto train = [&](const std::vector<std::size_t>& idx, std::size_t fold) {
    for (auto i : idx) EXPECT_NE(plan.fold_of[i], fold);
    return 1.1;
  };
  auto estimate = [&](double scale, std::size_t i) { return scale * truth[i]; };
  const auto r = cv_volume_error(truth, plan, train, estimate);
  ASSERT_EQ(r.fold_errors.size(), 5u);
  for (double e : r.fold_errors) EXPECT_NEAR(e, 0.1, 1e-12);
  EXPECT_NEAR(r.mean, 0.1, 1e-12);
  EXPECT_NEAR(r.sd, 0.0, 1e-12);
}

// ---------------------------------------------------------------- ROC

TEST(Roc, TrivialCurves) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  const auto c = roc_auc(s, y);
  EXPECT_EQ(c.auc, 1.0);
  EXPECT_EQ(youden(c).j, 1.0);
  EXPECT_EQ(youden(c).threshold, 0.8);
  EXPECT_EQ(roc_auc(std::vector<double>(4, 0.3), y).auc, 0.5);
  EXPECT_EQ(error_code([&] { roc_auc(s, std::vector<int>{1, 1, 1, 1}); }), ErrorCode::degenerate_input);
}

TEST(Roc, ToySetMatchesPairCounting) {
  const std::vector<double> s{0.3, 0.7, 0.7, 0.1, 0.9, 0.5, 0.5, 0.2, 0.8, 0.4, 0.6, 0.7};
  const std::vector<int> y{0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 1};
  EXPECT_NEAR(roc_auc(s, y).auc, pair_count_auc(s, y), 1e-12);
}

TEST(Roc, RankStatisticEqualsPairCountingOnRandomInputs) {
  CounterRng rng(12345);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(499);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const double grid = 1.0 + static_cast<double>(rng.below(50));  // coarse grids force ties
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = std::round(rng.uniform() * grid) / grid + 0.2 * y[i] * rng.uniform();
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(roc_auc(s, y).auc, pair_count_auc(s, y)) << trial;
  }
}

TEST(Roc, InvariantUnderMonotoneTransform) {
  CounterRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(60), t(60);
    std::vector<int> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
      y[i] = static_cast<int>(i % 3 == 0);
      s[i] = std::round(10 * (rng.uniform() + 0.3 * y[i])) / 10;
      t[i] = std::exp(3 * s[i]) - 7;
    }
    const auto a = roc_auc(s, y), b = roc_auc(t, y);
    EXPECT_EQ(a.auc, b.auc);
    const auto ya = youden(a), yb = youden(b);
    EXPECT_EQ(ya.j, yb.j);
    EXPECT_NEAR(std::exp(3 * ya.threshold) - 7, yb.threshold, 1e-12);
    for (std::size_t i = 1; i < a.points.size(); ++i)
      EXPECT_LE(a.points[i].sensitivity, a.points[i - 1].sensitivity);
  }
}

TEST(Roc, YoudenTieGoesToHigherSpecificity) {
  // Thresholds 0.4 and 0.6 both give J = 2/3.
  const std::vector<double> s{0.1, 0.4, 0.5, 0.6, 0.9, 0.3};
  const std::vector<int> y{0, 1, 0, 1, 1, 0};
  const auto best = youden(roc_auc(s, y));
  EXPECT_NEAR(best.j, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(best.threshold, 0.6);
  EXPECT_EQ(best.specificity, 1.0);
}

// ---------------------------------------------------------------- DeLong

TEST(DeLong, IdenticalScoresGiveUnitP) {
  const std::vector<int> y{1, 0, 1, 0, 1, 1, 0};
  const std::vector<double> s{0.9, 0.1, 0.4, 0.5, 0.7, 0.3, 0.2};
  const auto r = delong_test(s, s, y);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(DeLong, MatchesReference) {
  std::vector<int> y(fx::kDelongLabels.begin(), fx::kDelongLabels.end());
  const auto anti = delong_test(fx::kDelongPerfect, fx::kDelongAnti, y);
  EXPECT_EQ(anti.statistic, fx::kDelongAntiZ);
  EXPECT_EQ(anti.p, fx::kDelongAntiP);
  const auto mixed = delong_test(fx::kDelongMixedA, fx::kDelongMixedB, y);
  EXPECT_NEAR(mixed.statistic, fx::kDelongMixedZ, 1e-12);
  EXPECT_NEAR(mixed.p, fx::kDelongMixedP, 1e-12);
}

TEST(DeLong, NullPValuesRoughlyUniform) {
  std::vector<double> p;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    CounterRng rng(500 + trial);
    std::vector<double> a(200), b(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    p.push_back(delong_test(a, b, y).p);
  }
  std::sort(p.begin(), p.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lo = static_cast<double>(i) / 100.0, hi = static_cast<double>(i + 1) / 100.0;
    ks = std::max({ks, std::abs(p[i] - lo), std::abs(p[i] - hi)});
  }
  EXPECT_LT(ks, 0.2);
}

// ---------------------------------------------------------------- logistic

TEST(Logistic, InterceptOnlyClosedForm) {
  std::vector<int> y(23, 0);
  for (int i = 0; i < 9; ++i) y[i] = 1;
  const auto m = logistic_fit({}, 0, y);
  EXPECT_TRUE(m.converged);
  EXPECT_NEAR(m.coefficients[0], std::log(9.0 / 14.0), 1e-8);
  EXPECT_NEAR(m.odds_ratios[0], 9.0 / 14.0, 1e-8);
  EXPECT_LT(m.or_lower[0], m.odds_ratios[0]);
  EXPECT_GT(m.or_upper[0], m.odds_ratios[0]);
}

TEST(Logistic, ScoreEquationsVanishAtOptimum) {
  CounterRng rng(21);
  const std::size_t n = 200;
  std::vector<double> x(2 * n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = rng.normal();
    x[2 * i + 1] = rng.uniform(0, 3);
    const double eta = -0.5 + 1.2 * x[2 * i] - 0.8 * x[2 * i + 1];
    y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta));
  }
  const auto m = logistic_fit(x, 2, y);
  ASSERT_TRUE(m.converged);
  double g[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const double eta = m.coefficients[0] + m.coefficients[1] * x[2 * i] + m.coefficients[2] * x[2 * i + 1];
    const double r = y[i] - 1.0 / (1.0 + std::exp(-eta));
    g[0] += r;
    g[1] += r * x[2 * i];
    g[2] += r * x[2 * i + 1];
  }
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-8);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.odds_ratios[j], std::exp(m.coefficients[j]), 1e-12);
  EXPECT_GT(m.coefficients[1], 0.0);
  EXPECT_LT(m.coefficients[2], 0.0);
}

TEST(Logistic, IndependentOutcomeSlopeCoversZero) {
  CounterRng rng(2);
  const std::size_t n = 300;
  std::vector<double> x(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    y[i] = static_cast<int>(i % 2);
  }
  shuffle(std::span<int>(y), rng);
  const auto m = logistic_fit(x, 1, y);
  EXPECT_LT(m.or_lower[1], 1.0);
  EXPECT_GT(m.or_upper[1], 1.0);
}

TEST(Logistic, SeparationAndBadInput) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  EXPECT_EQ(error_code([&] { logistic_fit(x, 1, y); }), ErrorCode::separation);
  EXPECT_EQ(error_code([&] { logistic_fit(std::vector<double>(6, 0.0), 1, y); }), ErrorCode::degenerate_input);
  EXPECT_EQ(error_code([&] { logistic_fit(x, 1, std::vector<int>(6, 1)); }), ErrorCode::degenerate_input);
}
