#!/usr/bin/env python3
"""Regenerates tests/unit/stats_fixtures.hpp from scipy reference values."""
import sys

import numpy as np
from scipy import stats

OUT = sys.argv[1] if len(sys.argv) > 1 else "tests/unit/stats_fixtures.hpp"


def arr(v):
    return "{" + ", ".join(repr(float(x)) for x in v) + "}"


def delong(a, b, labels):
    """Fast DeLong on two score vectors sharing labels; returns (z, p)."""
    labels = np.asarray(labels)
    pos, neg = labels == 1, labels == 0
    m, n = pos.sum(), neg.sum()

    def placements(s):
        x, y = s[pos], s[neg]
        psi = (x[:, None] > y[None, :]) + 0.5 * (x[:, None] == y[None, :])
        return psi.mean(axis=1), psi.mean(axis=0), psi.mean()

    v10a, v01a, auc_a = placements(np.asarray(a, float))
    v10b, v01b, auc_b = placements(np.asarray(b, float))
    s10 = np.cov(np.vstack([v10a, v10b]))
    s01 = np.cov(np.vstack([v01a, v01b]))
    var = (s10[0, 0] + s10[1, 1] - 2 * s10[0, 1]) / m + (s01[0, 0] + s01[1, 1] - 2 * s01[0, 1]) / n
    diff = auc_a - auc_b
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / np.sqrt(var) if var > 0 else (0.0 if diff == 0 else np.inf * np.sign(diff))
    p = 2 * stats.norm.sf(abs(z))
    return float(z), float(p)


lines = ["// Generated by scripts/gen_stats_fixtures.py from scipy " + __import__("scipy").__version__ + ".",
         "#pragma once", "", "#include <cmath>", "#include <vector>", "", "namespace fixtures::stats {", ""]


def emit(name, value):
    if isinstance(value, (list, tuple, np.ndarray)):
        lines.append(f"inline const std::vector<double> {name}{arr(value)};")
    else:
        lines.append(f"inline constexpr double {name} = {float(value)!r};")


# Shapiro-Wilk.
lin = np.arange(1, 51, dtype=float)
w, p = stats.shapiro(lin)
emit("kSwLinear50W", w); emit("kSwLinear50P", p)
rng = np.random.default_rng(11)
sw_small = np.round(rng.normal(10, 2, 7), 4)
w, p = stats.shapiro(sw_small)
emit("kSwSmall", sw_small); emit("kSwSmallW", w); emit("kSwSmallP", p)
sw_three = [1.0, 2.0, 4.0]
w, p = stats.shapiro(sw_three)
emit("kSwThree", sw_three); emit("kSwThreeW", w); emit("kSwThreeP", p)
sw_skew = np.round(rng.exponential(1.0, 30), 4)
w, p = stats.shapiro(sw_skew)
emit("kSwSkew", sw_skew); emit("kSwSkewW", w); emit("kSwSkewP", p)

# t tests and anova.
x = np.round(rng.normal(5, 1, 12), 4)
y = np.round(x + rng.normal(0.4, 0.5, 12), 4)
r = stats.ttest_rel(x, y)
emit("kPairedX", x); emit("kPairedY", y); emit("kPairedT", r.statistic); emit("kPairedP", r.pvalue)
g1 = [4.2, 4.8, 5.1, 3.9, 4.5]
g2 = [5.6, 6.1, 5.9, 6.3]
g3 = [4.9, 5.2, 5.0, 5.5, 5.3, 4.7]
r = stats.f_oneway(g1, g2, g3)
emit("kAnovaG1", g1); emit("kAnovaG2", g2); emit("kAnovaG3", g3)
emit("kAnovaF", r.statistic); emit("kAnovaP", r.pvalue)
r = stats.levene(g1, g2, g3, center="median")
emit("kLeveneW", r.statistic); emit("kLeveneP", r.pvalue)
th = stats.tukey_hsd(g1, g2, g3)
emit("kTukeyP", [th.pvalue[0, 1], th.pvalue[0, 2], th.pvalue[1, 2]])

# Studentized range CDF (q, k, df, cdf).
ptk = []
for q, k, df in [(3.5, 3, 10), (2.0, 4, 20), (4.2, 5, 12), (1.0, 2, 5), (5.0, 3, 3), (3.0, 6, 120), (3.3, 3, 1000)]:
    ptk += [q, k, df, stats.studentized_range.cdf(q, k, df)]
emit("kPtukey", ptk)

# t and F survival values (stat, df1, df2, p).
emit("kTwoSidedT", [v for t, d in [(2.1, 7), (0.3, 30), (5.5, 3)] for v in (t, d, 2 * stats.t.sf(t, d))])
emit("kFUpper", [v for f, a, b in [(3.2, 2, 15), (0.7, 4, 40), (12.0, 3, 96)] for v in (f, a, b, stats.f.sf(f, a, b))])

# DeLong.
lab8 = [1, 1, 1, 1, 0, 0, 0, 0]
perfect = [0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1]
anti = [1 - s for s in perfect]
z, p = delong(perfect, anti, lab8)
emit("kDelongLabels", lab8); emit("kDelongPerfect", perfect); emit("kDelongAnti", anti)
emit("kDelongAntiZ", z); emit("kDelongAntiP", p)
sa = [0.9, 0.35, 0.7, 0.6, 0.4, 0.8, 0.2, 0.1]
sb = [0.6, 0.7, 0.3, 0.65, 0.5, 0.2, 0.4, 0.35]
z, p = delong(sa, sb, lab8)
emit("kDelongMixedA", sa); emit("kDelongMixedB", sb); emit("kDelongMixedZ", z); emit("kDelongMixedP", p)

# Bootstrap percentile uses numpy's default (linear) quantile.
emit("kQuantileProbe", [1.0, 3.0, 4.0, 10.0])
emit("kQuantileProbeAt", [np.quantile([1.0, 3.0, 4.0, 10.0], q) for q in (0.025, 0.5, 0.975)])

lines += ["", "}  // namespace fixtures::stats", ""]
open(OUT, "w").write("\n".join(lines).replace("inf", "INFINITY"))
