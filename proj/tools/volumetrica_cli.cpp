// SPDX-License-Identifier: Apache-2.0
// volumetrica command-line tool. Exit codes: 0 success, 1 runtime or model
// failure, 2 usage or configuration error.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "volumetrica/core/container.hpp"
#include "volumetrica/dicom/codec.hpp"
#include "volumetrica/dicom/series.hpp"
#include "volumetrica/nn/serialize.hpp"
#include "volumetrica/pipeline/crossval.hpp"
#include "volumetrica/pipeline/report_json.hpp"

namespace fs = std::filesystem;
using namespace volumetrica;
using pipeline::Json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Raised for bad flags, unreadable inputs and invalid configurations.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::vector<std::string> inputs;
  std::string out;
  std::string methods;
  double threshold = nn::kDefaultMaskThreshold;
  std::optional<std::uint64_t> seed_flag;
  std::size_t epochs = 200;
  std::size_t folds = 5;
  std::string format = "json";
  std::string plot_csv;
  std::size_t cohort = 0;
  std::optional<double> radius;
  std::string network;
  double learning_rate = nn::TrainConfig{}.learning_rate;

  std::uint64_t seed = 0;  // effective seed
};

// ---------------------------------------------------------------- helpers

template <class F>
auto input_stage(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::uint64_t resolve_seed(const Options& o) {
  if (o.seed_flag) return *o.seed_flag;
  if (const char* env = std::getenv("VOLUMETRICA_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used, 0);
      if (used != std::string_view(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("VOLUMETRICA_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

/// Canonical configuration; output destinations are excluded so that the
/// hash only changes with settings that affect results.
Json config_json(const Options& o) {
  return {{"command", o.command}, {"inputs", o.inputs},   {"methods", o.methods}, {"threshold", o.threshold},
          {"seed", o.seed},       {"epochs", o.epochs},   {"folds", o.folds},     {"format", o.format},
          {"cohort", o.cohort},   {"radius", o.radius ? Json(*o.radius) : Json(nullptr)},
          {"network", o.network}, {"learning_rate", o.learning_rate}};
}

Bytes read_input(const std::string& path) {
  return input_stage([&] { return read_file_bytes(path); });
}

pipeline::InputChecksum checksum(const std::string& path, const Bytes& bytes) {
  return {path, bytes.size(), pipeline::crc32(bytes)};
}

pipeline::InputChecksum checksum_file(const std::string& path) { return checksum(path, read_input(path)); }

pipeline::Provenance provenance(const Options& o, std::vector<pipeline::InputChecksum> inputs) {
  return {o.command, o.seed, pipeline::hex(pipeline::crc64(config_json(o).dump()), 16), std::move(inputs)};
}

/// Writes through a temporary file and renames it into place.
void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) fail(ErrorCode::io_error, "cannot write '" + path + "'");
    f << text;
    if (!f) fail(ErrorCode::io_error, "write failed for '" + path + "'");
  }
  fs::rename(tmp, path);
}

void write_bytes(const std::string& path, const Bytes& bytes) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_bytes(path + ".tmp", bytes);
  fs::rename(path + ".tmp", path);
}

/// Single-report commands write to --out, or stdout when it is absent.
void emit(const Options& o, const std::string& text) {
  if (o.out.empty())
    std::cout << text;
  else
    write_text(o.out, text);
}

std::string dump(const Json& j) { return j.dump(2, ' ', false, Json::error_handler_t::replace) + "\n"; }

Json read_json(const std::string& path, const Bytes& bytes) {
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const std::exception& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

const std::string& single_input(const Options& o) {
  if (o.inputs.size() != 1) throw UsageError(o.command + " needs exactly one --input");
  return o.inputs.front();
}

void require_dir_out(const Options& o) {
  if (o.out.empty()) throw UsageError(o.command + " needs --out <directory>");
}

std::string plot_series_csv(const std::vector<std::pair<std::string, SliceAreaSeries>>& series,
                            const std::vector<std::optional<numopt::FitResult>>& fits) {
  std::ostringstream out;
  out << "case_id,position_mm,area_mm2,fit_mm2\n";
  for (std::size_t c = 0; c < series.size(); ++c)
    for (const auto& s : series[c].second.samples) {
      out << pipeline::csv_escape(series[c].first) << ',' << pipeline::csv_number(s.position) << ','
          << pipeline::csv_number(s.area) << ',';
      if (fits[c]) out << pipeline::csv_number(fits[c]->polynomial(s.position));
      out << '\n';
    }
  return out.str();
}

std::vector<Method> parse_methods(const std::string& list) {
  if (list.empty()) return {kAllMethods.begin(), kAllMethods.end()};
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto m = input_stage([&] { return parse_method(item); });
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw UsageError("--methods selects no method");
  return out;
}

// ---------------------------------------------------------------- cohort manifests

struct ManifestCase {
  std::string id;
  double analytic_volume = 0.0;
  VoxelGrid grid;
  BinaryMask mask;
};

struct Manifest {
  std::vector<ManifestCase> cases;
  std::vector<pipeline::InputChecksum> checksums;
};

/// Loads a phantom manifest and the containers it names (paths relative to it).
Manifest load_manifest(const std::string& path) {
  Manifest m;
  const Bytes raw = read_input(path);
  m.checksums.push_back(checksum(path, raw));
  const Json j = read_json(path, raw);
  if (j.value("schema", "") != "volumetrica.phantom_manifest/1")
    throw UsageError("'" + path + "' is not a phantom manifest");
  const fs::path base = fs::path(path).parent_path();
  for (const auto& c : j.at("cases")) {
    ManifestCase mc;
    mc.id = c.at("id").get<std::string>();
    mc.analytic_volume = c.at("analytic_volume_mm3").get<double>();
    for (const char* key : {"grid", "mask"}) {
      const std::string file = (base / c.at(key).get<std::string>()).string();
      const Bytes bytes = read_input(file);
      m.checksums.push_back(checksum(file, bytes));
      const auto vol = input_stage([&] { return decode_volume(bytes); });
      if (std::string(key) == "grid") {
        mc.grid = input_stage([&] { return as_grid(vol); });
      } else {
        if (!std::holds_alternative<BinaryMask>(vol)) throw UsageError("'" + file + "' is not a mask container");
        mc.mask = std::get<BinaryMask>(vol);
      }
    }
    m.cases.push_back(std::move(mc));
  }
  if (m.cases.empty()) throw UsageError("manifest '" + path + "' lists no cases");
  return m;
}

std::vector<pipeline::CohortCase> as_cohort(const Manifest& m) {
  std::vector<pipeline::CohortCase> out;
  for (const auto& c : m.cases) out.push_back({c.id, {}, {c.grid, c.mask, c.analytic_volume, true}});
  return out;
}

// ---------------------------------------------------------------- phantom

Json manifest_case(const std::string& id, const PhantomSpec& spec, const Phantom& p, const std::string& grid_file,
                   const Bytes& grid, const std::string& mask_file, const Bytes& mask) {
  const auto& d = p.grid.dims();
  const auto& s = p.grid.spacing();
  return {{"id", id},
          {"shape", to_string(spec.shape)},
          {"semi_axes_mm", spec.semi_axes},
          {"analytic_volume_mm3", p.analytic_volume},
          {"closed_form", p.volume_closed_form},
          {"voxel_volume_mm3", voxel_volume(p.mask)},
          {"dims", {d.nx, d.ny, d.nz}},
          {"spacing_mm", {s.sx, s.sy, s.sz}},
          {"grid", grid_file},
          {"grid_crc32", pipeline::hex(pipeline::crc32(grid), 8)},
          {"mask", mask_file},
          {"mask_crc32", pipeline::hex(pipeline::crc32(mask), 8)}};
}

int cmd_phantom(const Options& o) {
  require_dir_out(o);
  std::vector<std::pair<std::string, PhantomSpec>> specs;
  std::vector<Phantom> phantoms;
  std::vector<pipeline::InputChecksum> inputs;
  if (o.cohort > 0) {
    if (!o.inputs.empty()) throw UsageError("--cohort generates its own specs; drop --input");
    pipeline::CohortConfig cfg;
    cfg.cases = o.cohort;
    cfg.seed = o.seed;
    for (auto& c : input_stage([&] { return pipeline::make_cohort(cfg); })) {
      specs.emplace_back(c.id, c.spec);
      phantoms.push_back(std::move(c.phantom));
    }
  } else {
    const auto& path = single_input(o);
    const Bytes raw = read_input(path);
    inputs.push_back(checksum(path, raw));
    auto cfg = input_stage([&] { return parse_phantom_config(std::string(raw.begin(), raw.end())); });
    if (o.seed_flag || std::getenv("VOLUMETRICA_SEED")) cfg.spec.seed = o.seed;
    phantoms.push_back(input_stage([&] { return make_phantom(cfg.spec, cfg.dims, cfg.spacing); }));
    specs.emplace_back("phantom", cfg.spec);
  }
  Json cases = Json::array();
  std::vector<std::pair<std::string, SliceAreaSeries>> profiles;
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    const auto& id = specs[i].first;
    const Bytes grid = encode_volume(phantoms[i].grid), mask = encode_volume(phantoms[i].mask);
    write_bytes((fs::path(o.out) / (id + ".grid.volv")).string(), grid);
    write_bytes((fs::path(o.out) / (id + ".mask.volv")).string(), mask);
    cases.push_back(manifest_case(id, specs[i].second, phantoms[i], id + ".grid.volv", grid, id + ".mask.volv", mask));
    profiles.emplace_back(id, slice_areas(phantoms[i].mask));
  }
  const Json report = pipeline::wrap_report("volumetrica.phantom_manifest/1", provenance(o, inputs),
                                            {{"cases", cases}});
  write_text((fs::path(o.out) / "manifest.json").string(), dump(report));
  if (!o.plot_csv.empty())
    write_text(o.plot_csv, plot_series_csv(profiles, std::vector<std::optional<numopt::FitResult>>(profiles.size())));
  return 0;
}

// ---------------------------------------------------------------- parse / ingest

Json element_value(const dicom::Dataset& ds, const dicom::Element& e) {
  if (dicom::is_string_vr(e.vr)) return *ds.get_string(e.tag);
  if ((e.vr == "US" || e.vr == "SS") && e.value.size() == 2) {
    const auto u = static_cast<std::uint16_t>(e.value[0] | (e.value[1] << 8));
    return e.vr == "US" ? Json(u) : Json(static_cast<std::int16_t>(u));
  }
  return std::to_string(e.value.size()) + " bytes";
}

int cmd_parse(const Options& o) {
  const auto& path = single_input(o);
  const Bytes raw = read_input(path);
  if (raw.empty()) throw UsageError("'" + path + "' is empty");
  const auto ds = input_stage([&] { return dicom::parse_file(raw); });
  Json elements = Json::array();
  for (const auto& [tag, e] : ds.elements)
    elements.push_back({{"tag", dicom::to_string(tag)},
                        {"vr", e.vr},
                        {"length", e.value.size()},
                        {"value", element_value(ds, e)}});
  const Json report = pipeline::wrap_report(
      "volumetrica.parse_report/1", provenance(o, {checksum(path, raw)}),
      {{"transfer_syntax", ds.transfer_syntax}, {"conformant", ds.conformant}, {"elements", elements}});
  emit(o, dump(report));
  return 0;
}

std::vector<pipeline::InputChecksum> directory_checksums(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<pipeline::InputChecksum> out;
  for (const auto& f : files) out.push_back(checksum_file(f.string()));
  return out;
}

int cmd_ingest(const Options& o) {
  require_dir_out(o);
  const auto& dir = single_input(o);
  const auto series = input_stage([&] { return dicom::load_directory(dir); });
  const Bytes grid = encode_volume(series.grid);
  write_bytes((fs::path(o.out) / "grid.volv").string(), grid);
  const auto& g = series.geometry;
  Json order = Json::array();
  for (const auto& s : g.slice_order) order.push_back({{"input_index", s.input_index}, {"key", s.key}});
  const auto& d = series.grid.dims();
  const Json report = pipeline::wrap_report(
      "volumetrica.ingest_report/1", provenance(o, directory_checksums(dir)),
      {{"grid", "grid.volv"},
       {"grid_crc32", pipeline::hex(pipeline::crc32(grid), 8)},
       {"dims", {d.nx, d.ny, d.nz}},
       {"spacing_mm", {g.sx, g.sy, g.slice_thickness}},
       {"sort_key", to_string(g.sort_key)},
       {"uniform_gaps", g.uniform_gaps},
       {"slice_order", order},
       {"warnings", series.warnings}});
  write_text((fs::path(o.out) / "ingest.json").string(), dump(report));
  return 0;
}

// ---------------------------------------------------------------- estimate

SliceAreaSeries read_series_csv(const std::string& path, const Bytes& raw) {
  std::istringstream in(std::string(raw.begin(), raw.end()));
  std::string line;
  std::vector<double> pos, area;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "position_mm,area_mm2") throw UsageError("'" + path + "': header must be position_mm,area_mm2");
      continue;
    }
    const auto comma = line.find(',');
    try {
      std::size_t u1 = 0, u2 = 0;
      const std::string a = line.substr(0, comma), b = comma == std::string::npos ? "" : line.substr(comma + 1);
      pos.push_back(std::stod(a, &u1));
      area.push_back(std::stod(b, &u2));
      if (u1 != a.size() || u2 != b.size()) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw UsageError("'" + path + "' line " + std::to_string(lineno) + ": expected two numbers");
    }
  }
  if (pos.empty()) throw UsageError("'" + path + "' has no samples");
  SliceAreaSeries s;
  s.thickness = pos.size() > 1 ? pos[1] - pos[0] : 1.0;
  for (std::size_t i = 0; i < pos.size(); ++i) s.samples.push_back({pos[i], area[i]});
  input_stage([&] {
    validate(s);
    for (double a : area) require(a >= 0.0 && std::isfinite(a), ErrorCode::invalid_argument, "areas must be >= 0");
    return 0;
  });
  return s;
}

/// Stand-in segmentation for image inputs without a mask: voxels above the
/// midpoint of the grid's intensity range.
BinaryMask midrange_mask(const VoxelGrid& g) {
  const auto [lo, hi] = std::minmax_element(g.data().begin(), g.data().end());
  return threshold(g, 0.5 * (*lo + *hi));
}

int cmd_estimate(const Options& o) {
  const auto methods = parse_methods(o.methods);
  const auto& path = single_input(o);
  std::vector<pipeline::InputChecksum> inputs;
  std::vector<EstimateCase> cases;
  std::optional<nn::Network> net;
  if (!o.network.empty()) {
    const Bytes raw = read_input(o.network);
    inputs.push_back(checksum(o.network, raw));
    net = input_stage([&] { return nn::decode_network(raw); });
  }
  auto base_case = [&](std::string id) {
    EstimateCase c;
    c.id = std::move(id);
    c.threshold = o.threshold;
    c.manual_radius = o.radius;
    c.network = net ? &*net : nullptr;
    return c;
  };
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    const auto series = input_stage([&] { return dicom::load_directory(path); });
    auto dir_inputs = directory_checksums(path);
    inputs.insert(inputs.end(), dir_inputs.begin(), dir_inputs.end());
    auto c = base_case(fs::path(path).filename().string());
    c.grid = series.grid;
    c.mask = midrange_mask(series.grid);
    cases.push_back(std::move(c));
  } else if (path.ends_with(".csv")) {
    const Bytes raw = read_input(path);
    inputs.push_back(checksum(path, raw));
    auto c = base_case(fs::path(path).stem().string());
    c.series = read_series_csv(path, raw);
    cases.push_back(std::move(c));
  } else if (path.ends_with(".json")) {
    auto m = load_manifest(path);
    inputs.insert(inputs.end(), m.checksums.begin(), m.checksums.end());
    for (auto& mc : m.cases) {
      auto c = base_case(mc.id);
      c.grid = std::move(mc.grid);
      c.mask = std::move(mc.mask);
      c.reference_volume = mc.analytic_volume;
      cases.push_back(std::move(c));
    }
  } else {
    const Bytes raw = read_input(path);
    inputs.push_back(checksum(path, raw));
    const auto vol = input_stage([&] { return decode_volume(raw); });
    auto c = base_case(fs::path(path).stem().string());
    if (const auto* m = std::get_if<BinaryMask>(&vol)) {
      c.mask = *m;
      c.grid = as_grid(vol);
    } else {
      c.grid = std::get<VoxelGrid>(vol);
      c.mask = midrange_mask(*c.grid);
    }
    cases.push_back(std::move(c));
  }

  std::vector<EstimateReport> reports;
  bool any_ok = false;
  std::vector<std::pair<std::string, SliceAreaSeries>> profiles;
  std::vector<std::optional<numopt::FitResult>> fits;
  for (const auto& c : cases) {
    reports.push_back(estimate_all(c, methods));
    for (const auto& [m, r] : reports.back().results) any_ok |= r.volume.has_value();
    profiles.emplace_back(c.id, c.series ? *c.series : slice_areas(*c.mask));
    const auto it = reports.back().results.find(Method::regression);
    fits.push_back(it != reports.back().results.end() ? it->second.fit : std::nullopt);
  }
  if (o.format == "csv") {
    emit(o, pipeline::estimates_csv(reports));
  } else {
    Json list = Json::array();
    for (const auto& r : reports) list.push_back(pipeline::to_json(r));
    Json methods_json = Json::array();
    for (auto m : methods) methods_json.push_back(to_string(m));
    emit(o, dump(pipeline::wrap_report("volumetrica.estimate_report/1", provenance(o, inputs),
                                       {{"methods", methods_json}, {"reports", list}})));
  }
  if (!o.plot_csv.empty()) write_text(o.plot_csv, plot_series_csv(profiles, fits));
  if (!any_ok) {
    for (const auto& r : reports)
      for (const auto& [m, res] : r.results) std::cerr << r.case_id << ' ' << to_string(m) << ": " << res.error << '\n';
    return kExitRuntime;
  }
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const Options& o) {
  require_dir_out(o);
  const auto& path = single_input(o);
  const auto manifest = load_manifest(path);
  const auto cohort = as_cohort(manifest);
  const std::size_t n = cohort.size();
  if (o.folds == 0 || o.folds > n)
    throw UsageError("--folds must be between 1 and the number of cases (" + std::to_string(n) + ")");
  if (o.epochs == 0) throw UsageError("--epochs must be at least 1");
  if (!(o.learning_rate >= 0.0) || !std::isfinite(o.learning_rate))
    throw UsageError("--learning-rate must be finite and non-negative");
  pipeline::TrainSettings settings;
  settings.epochs = o.epochs;
  settings.learning_rate = o.learning_rate;
  settings.seed = o.seed;

  stats::CVPlan plan;
  std::vector<pipeline::FoldModel> models;
  if (o.folds == 1) {
    plan = {1, o.seed, std::vector<std::size_t>(n, 0), {}};
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    models.push_back(pipeline::train_model(cohort, all, settings, pipeline::fold_seed(o.seed, 0)));
  } else {
    plan = stats::kfold(n, o.folds, o.seed);
    models = pipeline::train_folds(cohort, plan, settings);
  }

  std::ostringstream loss;
  loss.precision(17);
  loss << "fold,epoch,loss\n";
  Json model_list = Json::array();
  for (std::size_t f = 0; f < models.size(); ++f) {
    const std::string file = o.folds == 1 ? "model.vnn" : "fold_" + std::to_string(f) + ".vnn";
    const Bytes bytes = nn::encode_network(models[f].network);
    write_bytes((fs::path(o.out) / file).string(), bytes);
    const auto& log = models[f].log.epoch_loss;
    for (std::size_t e = 0; e < log.size(); ++e) loss << f << ',' << e + 1 << ',' << log[e] << '\n';
    model_list.push_back({{"fold", f},
                          {"file", file},
                          {"crc32", pipeline::hex(pipeline::crc32(bytes), 8)},
                          {"train_cases", models[f].train_cases},
                          {"initial_loss", log.front()},
                          {"final_loss", log.back()}});
  }
  write_text((fs::path(o.out) / "loss.csv").string(), loss.str());
  if (!o.plot_csv.empty()) write_text(o.plot_csv, loss.str());
  const Json report = pipeline::wrap_report(
      "volumetrica.train_report/1", provenance(o, manifest.checksums),
      {{"manifest", fs::absolute(path).lexically_normal().string()},
       {"cases", n},
       {"folds", o.folds},
       {"epochs", o.epochs},
       {"learning_rate", o.learning_rate},
       {"loss", to_string(settings.loss)},
       {"optimizer", "adam"},
       {"fold_of", plan.fold_of},
       {"models", model_list}});
  write_text((fs::path(o.out) / "train.json").string(), dump(report));
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Options& o) {
  const auto& path = single_input(o);
  const Bytes raw = read_input(path);
  const Json tr = read_json(path, raw);
  if (tr.value("schema", "") != "volumetrica.train_report/1") throw UsageError("'" + path + "' is not a train report");
  std::vector<pipeline::InputChecksum> inputs{checksum(path, raw)};
  const std::size_t k = tr.at("folds").get<std::size_t>();
  if (k < 2) throw UsageError("eval needs a cross-validated training run (--folds >= 2)");
  const auto manifest = load_manifest(tr.at("manifest").get<std::string>());
  inputs.insert(inputs.end(), manifest.checksums.begin(), manifest.checksums.end());
  const auto cohort = as_cohort(manifest);
  const auto plan = input_stage([&] { return stats::kfold(cohort.size(), k, tr.at("provenance").at("seed").get<std::uint64_t>()); });
  if (plan.fold_of != tr.at("fold_of").get<std::vector<std::size_t>>())
    throw UsageError("fold assignment in '" + path + "' does not match its seed");
  std::vector<pipeline::FoldModel> models;
  for (const auto& m : tr.at("models")) {
    const std::string file = (fs::path(path).parent_path() / m.at("file").get<std::string>()).string();
    const Bytes bytes = read_input(file);
    inputs.push_back(checksum(file, bytes));
    models.push_back({input_stage([&] { return nn::decode_network(bytes); }), {},
                      m.at("train_cases").get<std::vector<std::size_t>>()});
  }
  const auto ev = pipeline::evaluate_cohort(cohort, plan, models, o.threshold);

  Json cases = Json::array();
  std::ostringstream csv;
  csv << "case_id,fold,truth_mm3";
  for (auto m : kAllMethods) csv << ',' << to_string(m) << "_mm3";
  csv << ",ml_error_percent\n";
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    Json vols, errs;
    csv << cohort[i].id << ',' << plan.fold_of[i] << ',' << pipeline::csv_number(ev.truth[i]);
    for (auto m : kAllMethods) {
      const double v = *ev.reports[i].volume(m);
      vols[to_string(m)] = v;
      errs[to_string(m)] = std::abs(v - ev.truth[i]) / ev.truth[i] * 100.0;
      csv << ',' << pipeline::csv_number(v);
    }
    csv << ',' << pipeline::csv_number(ev.ml.case_errors[i] * 100.0) << '\n';
    cases.push_back({{"id", cohort[i].id},
                     {"fold", plan.fold_of[i]},
                     {"truth_mm3", ev.truth[i]},
                     {"volumes_mm3", vols},
                     {"errors_percent", errs}});
  }
  std::vector<double> fold_pct;
  for (double e : ev.ml.fold_errors) fold_pct.push_back(e * 100.0);
  const Json report = pipeline::wrap_report(
      "volumetrica.eval_report/1", provenance(o, inputs),
      {{"folds", k},
       {"threshold", o.threshold},
       {"cases", cases},
       {"ml_cv", {{"fold_errors_percent", fold_pct}, {"mean_percent", ev.ml.mean * 100.0}, {"sd_percent", ev.ml.sd * 100.0}}}});
  emit(o, o.format == "csv" ? csv.str() : dump(report));
  if (!o.plot_csv.empty()) write_text(o.plot_csv, csv.str());
  return 0;
}

// ---------------------------------------------------------------- compare / stats

struct EvalInput {
  pipeline::CohortVolumes volumes;
  std::vector<EstimateReport> reports;
  std::vector<pipeline::InputChecksum> inputs;
};

EvalInput load_eval(const Options& o) {
  const auto& path = single_input(o);
  const Bytes raw = read_input(path);
  const Json j = read_json(path, raw);
  EvalInput in;
  in.inputs.push_back(checksum(path, raw));
  const auto schema = j.value("schema", "");
  try {
    if (schema == "volumetrica.eval_report/1") {
      auto& v = in.volumes;
      v.folds = j.at("folds").get<std::size_t>();
      for (const auto& c : j.at("cases")) {
        EstimateReport r;
        r.case_id = c.at("id").get<std::string>();
        r.reference_volume = c.at("truth_mm3").get<double>();
        v.ids.push_back(r.case_id);
        v.truth.push_back(*r.reference_volume);
        v.fold_of.push_back(c.at("fold").get<std::size_t>());
        for (auto m : kAllMethods) {
          const double vol = c.at("volumes_mm3").at(to_string(m)).get<double>();
          v.volumes[m].push_back(vol);
          r.results[m].volume = vol;
        }
        in.reports.push_back(std::move(r));
      }
    } else if (schema == "volumetrica.estimate_report/1") {
      for (const auto& rj : j.at("reports")) {
        EstimateReport r;
        r.case_id = rj.at("case_id").get<std::string>();
        for (const auto& [name, res] : rj.at("methods").items()) {
          const auto m = parse_method(name);
          if (!res.at("volume_mm3").is_null()) r.results[m].volume = res.at("volume_mm3").get<double>();
        }
        in.reports.push_back(std::move(r));
      }
    } else {
      throw UsageError("'" + path + "' is neither an eval nor an estimate report");
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + path + "' is malformed: " + e.what());
  }
  if (in.reports.empty()) throw UsageError("'" + path + "' contains no cases");
  return in;
}

int cmd_compare(const Options& o) {
  const auto methods = parse_methods(o.methods);
  const auto in = load_eval(o);
  const auto d = discrepancy(in.reports, methods);
  if (o.format == "csv")
    emit(o, pipeline::discrepancy_csv(d));
  else
    emit(o, dump(pipeline::wrap_report("volumetrica.discrepancy_report/1", provenance(o, in.inputs),
                                       {{"cases", in.reports.size()}, {"matrix", pipeline::to_json(d)}})));
  if (!o.plot_csv.empty()) write_text(o.plot_csv, pipeline::discrepancy_csv(d));
  return 0;
}

int cmd_stats(const Options& o) {
  const auto in = load_eval(o);
  if (in.volumes.truth.empty()) throw UsageError("stats needs an eval report (ground truth and folds)");
  const auto rep = pipeline::build_stats_report(in.volumes, o.seed);
  if (o.format == "csv")
    emit(o, pipeline::stats_csv(rep));
  else
    emit(o, dump(pipeline::wrap_report("volumetrica.stats_report/1", provenance(o, in.inputs),
                                       pipeline::to_json(rep))));
  if (!o.plot_csv.empty()) {
    const auto& ml = in.volumes.volumes.at(Method::ml);
    const auto& reg = in.volumes.volumes.at(Method::regression);
    std::ostringstream out;
    out << "case_id,mean_mm3,difference_mm3\n";
    for (std::size_t i = 0; i < ml.size(); ++i)
      out << in.volumes.ids[i] << ',' << pipeline::csv_number(0.5 * (ml[i] + reg[i])) << ','
          << pipeline::csv_number(ml[i] - reg[i]) << '\n';
    write_text(o.plot_csv, out.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volumetrica: nodule volume estimation and method comparison"};
  app.set_version_flag("--version", VOLUMETRICA_VERSION);
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed_value = 0;

  auto add = [&](const std::string& name, const std::string& help) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--input", o.inputs, "input file or directory");
    c->add_option("--out", o.out, "output file (reports) or directory (phantom, ingest, train)");
    c->add_option("--seed", seed_value, "random seed (falls back to VOLUMETRICA_SEED, then 0)");
    c->add_option("--format", o.format, "report format")->check(CLI::IsMember({"json", "csv"}));
    c->add_option("--emit-plot-csv", o.plot_csv, "also write the plot data as CSV to this path");
    return c;
  };
  auto* phantom = add("phantom", "generate a phantom (or a cohort) as VOLV containers plus a manifest");
  phantom->add_option("--cohort", o.cohort, "generate this many mixed-shape cohort phantoms");
  add("parse", "dump a DICOM file's elements");
  add("ingest", "assemble a DICOM slice directory into a VOLV grid");
  auto* estimate = add("estimate", "estimate volumes from a slice-area CSV, manifest, VOLV file or DICOM directory");
  estimate->add_option("--methods", o.methods, "comma-separated: ml,spherical,area_based,regression");
  estimate->add_option("--threshold", o.threshold, "ML mask threshold in (0, 1)");
  estimate->add_option("--radius", o.radius, "manual radius (mm) for the spherical method");
  estimate->add_option("--network", o.network, "trained network container for the ML method");
  auto* train = add("train", "train 3D segmentation networks on a cohort manifest");
  train->add_option("--epochs", o.epochs, "training epochs");
  train->add_option("--folds", o.folds, "cross-validation folds (1 trains one model on every case)");
  train->add_option("--learning-rate", o.learning_rate, "Adam learning rate");
  auto* eval = add("eval", "held-out estimates for every case of a cross-validated training run");
  eval->add_option("--threshold", o.threshold, "ML mask threshold in (0, 1)");
  auto* compare = add("compare", "pairwise discrepancy matrix between methods");
  compare->add_option("--methods", o.methods, "comma-separated method subset");
  add("stats", "statistical validation report from an eval report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  for (auto* sub : app.get_subcommands()) o.command = sub->get_name();
  if (app.get_subcommand(o.command)->count("--seed")) o.seed_flag = seed_value;

  try {
    o.seed = resolve_seed(o);
    if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");
    if (o.command == "phantom") return cmd_phantom(o);
    if (o.command == "parse") return cmd_parse(o);
    if (o.command == "ingest") return cmd_ingest(o);
    if (o.command == "estimate") return cmd_estimate(o);
    if (o.command == "train") return cmd_train(o);
    if (o.command == "eval") return cmd_eval(o);
    if (o.command == "compare") return cmd_compare(o);
    if (o.command == "stats") return cmd_stats(o);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "volumetrica " << o.command << ": malformed input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "volumetrica " << o.command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "volumetrica " << o.command << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "volumetrica " << o.command << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
