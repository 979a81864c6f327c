// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.
// usage: volumetrica_acceptance <volumetrica cli> <scratch dir>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dicom_fixtures.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "volumetrica/core/phantom.hpp"
#include "volumetrica/dicom/series.hpp"
#include "volumetrica/estimators/estimators.hpp"
#include "volumetrica/nn/serialize.hpp"
#include "volumetrica/numopt/levenberg_marquardt.hpp"
#include "volumetrica/numopt/refine.hpp"
#include "volumetrica/stats/resampling.hpp"
#include "volumetrica/stats/roc.hpp"
#include "volumetrica/stats/tests.hpp"

using namespace volumetrica;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { notes += (notes.empty() ? "" : ", ") + s; }
  std::string notes;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// Sphere phantom on the smallest odd grid with a margin, so the centre is a voxel centre.
Phantom centred_sphere(double r, double s) {
  PhantomSpec spec;
  spec.radius = r;
  auto n = static_cast<std::size_t>(std::ceil(2 * r / s)) + 6;
  n += 1 - n % 2;
  return make_phantom(spec, {n, n, n}, {s, s, s});
}

// ---------------------------------------------------------------- 1

Outcome worked_sample() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  EstimateCase c;
  c.series = fixtures::sample_series();
  c.manual_radius = 6.0;
  const std::array manual{Method::spherical, Method::area_based, Method::regression};
  auto rep = estimate_all(c, manual);
  const double elapsed = seconds_since(t0);
  const auto sph = rep.volume(Method::spherical), area = rep.volume(Method::area_based),
             reg = rep.volume(Method::regression);
  if (!sph || !area || !reg) {
    o.check(false, "a manual method failed");
    return o;
  }
  const auto& fit = *rep.results[Method::regression].fit;
  o.check(std::abs(*area - 797.0) <= 0.05, "area-based " + fmt("%.4f", *area));
  o.check(std::abs(*sph - 904.779) <= 0.001, "spherical " + fmt("%.6f", *sph));
  o.check(fit.polynomial.degree == 8, "degree " + std::to_string(fit.polynomial.degree));
  o.check(std::abs(*reg - 737.2175) <= 1.0, "regression " + fmt("%.4f", *reg));
  o.check(rel(fit.mse, 10.0889) <= 0.02, "mse " + fmt("%.4f", fit.mse));
  o.check(elapsed < 1.0, "runtime " + fmt("%.3f s", elapsed));
  o.note("area " + fmt("%.2f", *area) + ", spherical " + fmt("%.4f", *sph) + ", regression " + fmt("%.4f", *reg) +
         " (degree " + std::to_string(fit.polynomial.degree) + ", mse " + fmt("%.4f", fit.mse) + "), " +
         fmt("%.3f s", elapsed));
  return o;
}

// ---------------------------------------------------------------- 2

Outcome architecture() {
  Outcome o;
  const auto net2 = nn::build_segmentation_net_2d();
  const auto rows = nn::summary(net2);
  std::size_t total = 0, trainable = 0;
  for (const auto& layer : net2.layers)
    if (const auto* conv = std::get_if<nn::ConvLayer>(&layer)) trainable += conv->weights.size() + conv->bias.size();
  total = nn::param_count(net2);
  o.check(total == 353 && trainable == 353 && total - trainable == 0,
          "2D counts " + std::to_string(total) + "/" + std::to_string(trainable));
  const std::vector<nn::Shape> expect{{1024, 1024, 32}, {512, 512, 32}, {512, 512, 1}};
  std::vector<nn::Shape> got;
  for (std::size_t i = 1; i < rows.size(); ++i) got.push_back(rows[i].output_shape);
  o.check(got == expect, "2D layer shapes differ");
  const auto p3 = nn::param_count(nn::build_segmentation_net_3d());
  o.check(p3 == 929, "3D count " + std::to_string(p3));
  o.note("2D " + std::to_string(total) + " total / " + std::to_string(trainable) + " trainable / " +
         std::to_string(total - trainable) + " non-trainable, 3D " + std::to_string(p3));
  return o;
}

// ---------------------------------------------------------------- 3

Outcome gradients() {
  using namespace gradcheck;
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const auto net3 = randomised(nn::build_segmentation_net_3d(101, 8, 8, 8), 102);
  const auto x3 = random_tensor({8, 8, 8, 1}, 103, 0, 1);
  const auto t3 = random_tensor({4, 4, 4, 1}, 104, 0, 1);
  const auto net2 = randomised(nn::build_segmentation_net_2d(201, 16, 16), 202);
  const auto x2 = random_tensor({16, 16, 1}, 203, 0, 1);
  const auto t2 = random_tensor({8, 8, 1}, 204, 0, 1);
  for (auto kind : {nn::LossKind::mse, nn::LossKind::bce}) {
    worst = std::max(worst, max_gradient_error(net3, x3, t3, kind));
    worst = std::max(worst, max_gradient_error(net2, x2, t2, kind));
  }
  const double elapsed = seconds_since(t0);
  o.check(worst < 1e-5, "max relative error " + fmt("%.3e", worst));
  o.check(elapsed < 60.0, "runtime " + fmt("%.1f s", elapsed));
  o.note("max relative error " + fmt("%.2e", worst) + ", " + fmt("%.2f s", elapsed));
  return o;
}

// ---------------------------------------------------------------- 4

Outcome phantom_oracles(const std::optional<nn::Network>& model) {
  Outcome o;
  double worst_voxel = 0.0, worst_manual = 0.0;
  for (double r : {5.0, 8.0, 10.0})
    for (double s : {0.5, 0.75, 1.0}) {
      const auto ph = centred_sphere(r, s);
      worst_voxel = std::max(worst_voxel, rel(voxel_volume(ph.mask), ph.analytic_volume));
      EstimateCase c;
      c.mask = ph.mask;
      const std::array manual{Method::spherical, Method::area_based, Method::regression};
      auto rep = estimate_all(c, manual);
      for (auto m : manual) {
        const auto v = rep.volume(m);
        if (!v) {
          o.check(false, std::string(to_string(m)) + " failed: " + rep.results[m].error);
          continue;
        }
        worst_manual = std::max(worst_manual, rel(*v, ph.analytic_volume));
      }
    }
  o.check(worst_voxel < 0.02, "voxel volume off by " + fmt("%.2f%%", 100 * worst_voxel));
  o.check(worst_manual < 0.05, "manual estimate off by " + fmt("%.2f%%", 100 * worst_manual));

  // Oblate ellipsoid a = b = 2c; the ML estimate needs the trained model.
  PhantomSpec spec;
  spec.shape = PhantomShape::ellipsoid;
  spec.semi_axes = {10, 10, 5};
  const auto ph = make_phantom(spec, {32, 32, 32}, {1, 1, 1});
  EstimateCase c;
  c.grid = ph.grid;
  c.mask = ph.mask;
  if (model) c.network = &*model;
  auto rep = estimate_all(c);
  const auto sph = rep.volume(Method::spherical);
  std::string others;
  for (auto m : {Method::area_based, Method::regression, Method::ml}) {
    const auto v = rep.volume(m);
    if (!v || !sph) {
      o.check(false, std::string(to_string(m)) + " unavailable on the ellipsoid" +
                         (rep.results[m].error.empty() ? "" : ": " + rep.results[m].error));
      continue;
    }
    o.check(*sph > *v, std::string("spherical not above ") + to_string(m));
    others += std::string(others.empty() ? "" : " ") + to_string(m) + " " + fmt("%.0f", *v);
  }
  o.note("voxel worst " + fmt("%.2f%%", 100 * worst_voxel) + ", manual worst " + fmt("%.2f%%", 100 * worst_manual) +
         "; oblate spherical " + fmt("%.0f", sph.value_or(NAN)) + " vs " + others);
  return o;
}

// ---------------------------------------------------------------- 5

Outcome statistics() {
  Outcome o;
  std::size_t auc_mismatch = 0;
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    CounterRng rng(7000 + trial);
    const std::size_t n = 4 + rng.below(40);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(12));  // coarse grid forces ties
      labels[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
    }
    double pairs = 0.0, wins = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (labels[i] == 1 && labels[j] == 0) {
          pairs += 1;
          wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    if (stats::roc_auc(scores, labels).auc != wins / pairs) ++auc_mismatch;
  }
  o.check(auc_mismatch == 0, std::to_string(auc_mismatch) + " AUC mismatches");

  double anova_err = 0.0, ba_err = 0.0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    CounterRng rng(9000 + trial);
    std::vector<std::vector<double>> groups(2 + rng.below(4));
    for (auto& g : groups) {
      g.resize(3 + rng.below(10));
      for (auto& v : g) v = rng.normal() * 3.0 + static_cast<double>(rng.below(3));
    }
    long double grand = 0, count = 0;
    for (const auto& g : groups)
      for (double v : g) grand += v, count += 1;
    grand /= count;
    long double ssb = 0, ssw = 0;
    for (const auto& g : groups) {
      long double m = 0;
      for (double v : g) m += v;
      m /= static_cast<long double>(g.size());
      ssb += static_cast<long double>(g.size()) * (m - grand) * (m - grand);
      for (double v : g) ssw += (v - m) * (v - m);
    }
    const long double k = static_cast<long double>(groups.size());
    const double f = static_cast<double>((ssb / (k - 1)) / (ssw / (count - k)));
    anova_err = std::max(anova_err, rel(stats::one_way_anova(groups).statistic, f));

    std::vector<double> a(10 + rng.below(30)), b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = 800 + 100 * rng.normal();
      b[i] = a[i] + 5 + 20 * rng.normal();
    }
    long double md = 0;
    for (std::size_t i = 0; i < a.size(); ++i) md += static_cast<long double>(a[i]) - b[i];
    md /= static_cast<long double>(a.size());
    long double sd = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const long double d = static_cast<long double>(a[i]) - b[i] - md;
      sd += d * d;
    }
    sd = std::sqrt(sd / static_cast<long double>(a.size() - 1));
    const auto ba = stats::bland_altman(a, b);
    ba_err = std::max({ba_err, std::abs(ba.bias - static_cast<double>(md)),
                       std::abs(ba.lower - static_cast<double>(md - 1.96L * sd)),
                       std::abs(ba.upper - static_cast<double>(md + 1.96L * sd))});
  }
  o.check(anova_err <= 1e-9, "ANOVA F relative error " + fmt("%.2e", anova_err));
  o.check(ba_err <= 1e-12, "Bland-Altman error " + fmt("%.2e", ba_err));

  std::vector<double> x(30);
  CounterRng rng(1234);
  for (auto& v : x) v = rng.normal();
  const auto c1 = stats::bootstrap_ci(x, 2000, 0.95, 5), c2 = stats::bootstrap_ci(x, 2000, 0.95, 5);
  o.check(c1.lo == c2.lo && c1.hi == c2.hi, "bootstrap not deterministic");
  o.check(stats::kfold(25, 5, 3).fold_of == stats::kfold(25, 5, 3).fold_of, "kfold not deterministic");
  o.note("200 AUC trials exact, ANOVA rel err " + fmt("%.1e", anova_err) + ", Bland-Altman abs err " +
         fmt("%.1e", ba_err) + " mm3");
  return o;
}

// ---------------------------------------------------------------- 6

Outcome dicom_round_trip() {
  Outcome o;
  CounterRng rng(6006);
  std::size_t bad = 0;
  for (int i = 0; i < 100; ++i) {
    const auto ds = dicom_fixtures::random_dataset(rng);
    const auto bytes = dicom::write_file(ds);
    const auto back = dicom::parse_file(bytes);
    if (!(back == ds) || dicom::write_file(back) != bytes) ++bad;
  }
  o.check(bad == 0, std::to_string(bad) + " of 100 files did not round trip");

  auto slice = [](double z) {
    auto ds = dicom_fixtures::minimal_slice();
    ds.set_ds(dicom::tags::kImagePosition, {0.0, 0.0, z});
    return ds;
  };
  const auto s = dicom::read_series({slice(2.0), slice(0.0), slice(1.0)});
  std::vector<std::size_t> order;
  for (const auto& e : s.geometry.slice_order) order.push_back(e.input_index);
  o.check(order == std::vector<std::size_t>{1, 2, 0}, "shuffled series not re-sorted by z");
  o.check(s.geometry.sort_key == dicom::SliceSortKey::image_position_z, "sort key is not z position");

  const auto plain = dicom::read_series({dicom_fixtures::minimal_slice(), dicom_fixtures::minimal_slice()});
  o.check(plain.grid.spacing() == Spacing{1.0, 1.0, 1.0}, "missing spacing did not default to 1.0 mm");
  const bool warned = std::any_of(plain.warnings.begin(), plain.warnings.end(), [](const std::string& w) {
    return w.find("assigning default values") != std::string::npos;
  });
  o.check(warned, "no default-spacing warning");
  o.note("100 files bit-exact, z order restored, default spacing warned");
  return o;
}

// ---------------------------------------------------------------- 8

struct ExpDecay {
  std::vector<double> x, y;
  Eigen::VectorXd residuals(const Eigen::VectorXd& t) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) r(static_cast<Eigen::Index>(i)) = t(0) * std::exp(-t(1) * x[i]) - y[i];
    return r;
  }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& t) const {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(x.size()), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = std::exp(-t(1) * x[i]);
      j(static_cast<Eigen::Index>(i), 0) = e;
      j(static_cast<Eigen::Index>(i), 1) = -t(0) * x[i] * e;
    }
    return j;
  }
};

bool monotone(const numopt::LMDiagnostics& d) {
  double prev = d.initial_norm;
  for (double n : d.accepted_norms) {
    if (n > prev) return false;
    prev = n;
  }
  return true;
}

Outcome levenberg_marquardt_fits() {
  Outcome o;
  ExpDecay p;
  for (int i = 0; i < 30; ++i) {
    p.x.push_back(0.15 * i);
    p.y.push_back(4.2 * std::exp(-0.63 * 0.15 * i));
  }
  Eigen::VectorXd t0(2);
  t0 << 1.0, 0.1;
  auto e = numopt::levenberg_marquardt([&](auto& t) { return p.residuals(t); },
                                       [&](auto& t) { return p.jacobian(t); }, t0);
  const double exp_err = std::max(rel(e.theta(0), 4.2), rel(e.theta(1), 0.63));
  o.check(e.diagnostics.converged() && e.diagnostics.iterations <= 200, "exponential fit did not converge");
  o.check(exp_err < 1e-6, "exponential parameters off by " + fmt("%.2e", exp_err));
  o.check(monotone(e.diagnostics), "exponential residual increased");

  // Ellipsoid profile: only the product a*b is identifiable from areas.
  const double a = 6.5, b = 4.0, c = 5.5, z0 = 12.25;
  SliceAreaSeries s;
  s.thickness = 0.5;
  for (double z = z0 - c - 1.0; z <= z0 + c + 1.0; z += 0.5)
    s.samples.push_back({z, std::numbers::pi * a * b * std::max(0.0, 1.0 - (z - z0) * (z - z0) / (c * c))});
  auto r = numopt::refine_volume(s);
  const double ell_err = std::max({rel(r.theta(0) * r.theta(1), a * b), rel(std::abs(r.theta(2)), c),
                                   rel(r.theta(3), z0)});
  o.check(r.diagnostics.converged() && r.diagnostics.iterations <= 200, "ellipsoid fit did not converge");
  o.check(ell_err < 1e-6, "ellipsoid parameters off by " + fmt("%.2e", ell_err));
  o.check(monotone(r.diagnostics), "ellipsoid residual increased");
  o.note("exponential rel err " + fmt("%.1e", exp_err) + " in " + std::to_string(e.diagnostics.iterations) +
         " iterations, ellipsoid rel err " + fmt("%.1e", ell_err) + " in " +
         std::to_string(r.diagnostics.iterations));
  return o;
}

// ---------------------------------------------------------------- 7

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + cli + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

Outcome end_to_end(const std::string& cli, const fs::path& scratch, std::optional<nn::Network>& model) {
  Outcome o;
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  const auto log = scratch / "cli.log";
  const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::pair<std::string, std::string>> steps{
      {"phantom", "phantom --cohort 25 --seed 2024 --out " + q(scratch / "cohort")},
      {"train", "train --input " + q(scratch / "cohort" / "manifest.json") +
                    " --folds 5 --epochs 200 --seed 2024 --out " + q(scratch / "train")},
      {"eval", "eval --input " + q(scratch / "train" / "train.json") + " --out " + q(scratch / "eval.json")},
      {"compare", "compare --input " + q(scratch / "eval.json") + " --out " + q(scratch / "compare.json")},
      {"stats", "stats --input " + q(scratch / "eval.json") + " --seed 2024 --out " + q(scratch / "stats.json")}};
  for (const auto& [name, args] : steps) {
    const int rc = run_cli(cli, args, log);
    if (rc != 0) {
      o.check(false, name + " exited " + std::to_string(rc) + " (see " + log.string() + ")");
      return o;
    }
  }
  const double elapsed = seconds_since(t0);
  o.check(elapsed < 300.0, "runtime " + fmt("%.1f s", elapsed));

  const auto eval = read_json(scratch / "eval.json");
  const double ml_error = eval["ml_cv"]["mean_percent"].get<double>();
  o.check(ml_error < 20.0, "held-out ML error " + fmt("%.2f%%", ml_error));

  const auto stats = read_json(scratch / "stats.json");
  const std::vector<std::string> required{
      "cv_mean_error",          "cv_sd_error",          "cv_error_ci95",
      "paired_t_ml_vs_spherical", "paired_t_ml_vs_area_based", "paired_t_ml_vs_regression",
      "anova_f",                "bland_altman_bias",    "bland_altman_limits",
      "mean_error_spherical_vs_truth", "mean_error_area_based_vs_truth", "mean_error_regression_vs_truth"};
  std::size_t nonfinite = 0;
  std::vector<std::string> seen;
  for (const auto& row : stats["rows"]) {
    seen.push_back(row["metric"].get<std::string>());
    const auto& v = row["value"];
    const auto finite = [](const nlohmann::json& x) { return x.is_number() && std::isfinite(x.get<double>()); };
    if (v.is_array() ? !(finite(v[0]) && finite(v[1])) : !finite(v)) ++nonfinite;
  }
  for (const auto& m : required)
    o.check(std::find(seen.begin(), seen.end(), m) != seen.end(), "missing row " + m);
  o.check(nonfinite == 0, std::to_string(nonfinite) + " non-finite rows");
  o.check(read_json(scratch / "compare.json")["matrix"]["methods"].size() == 4, "discrepancy matrix incomplete");

  // A fold model on a sphere outside the cohort, matched to the 880 mm3 sample.
  model = nn::load_network((scratch / "train" / "fold_0.vnn").string());
  PhantomSpec spec;
  spec.radius = 5.944;
  const auto ph = make_phantom(spec, {33, 33, 33}, {0.75, 0.75, 0.75});
  const double v = ml_estimate(ph.grid, *model);
  o.check(rel(v, ph.analytic_volume) < 0.15, "held-out 880 mm3 sphere: ML " + fmt("%.1f", v));
  o.note(fmt("%.1f s", elapsed) + ", CV ML error " + fmt("%.2f%%", ml_error) + ", " + std::to_string(seen.size()) +
         " finite rows, 880 mm3 sphere -> " + fmt("%.1f", v) + " mm3 (analytic " +
         fmt("%.1f", ph.analytic_volume) + ")");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <volumetrica cli> <scratch dir>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path scratch = argv[2];

  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what(), {}};
    }
  };
  std::optional<nn::Network> model;
  std::vector<Outcome> results(8);
  results[0] = guarded(worked_sample);
  results[1] = guarded(architecture);
  results[2] = guarded(gradients);
  results[4] = guarded(statistics);
  results[5] = guarded(dicom_round_trip);
  results[7] = guarded(levenberg_marquardt_fits);
  results[6] = guarded([&] { return end_to_end(cli, scratch, model); });
  results[3] = guarded([&] { return phantom_oracles(model); });

  static const char* names[8] = {"worked sample",      "architecture",        "gradient check",
                                 "phantom oracles",    "statistics oracles",  "DICOM round trip",
                                 "end-to-end cohort",  "Levenberg-Marquardt"};
  bool all = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    all = all && r.pass;
    std::printf("criterion %zu %-20s %s  %s\n", i + 1, names[i], r.pass ? "PASS" : "FAIL",
                r.pass ? r.notes.c_str() : r.detail.c_str());
  }
  return all ? 0 : 1;
}
