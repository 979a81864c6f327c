// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <boost/crc.hpp>
#include <json.hpp>

#include "volumetrica/estimators/estimators.hpp"
#include "volumetrica/pipeline/stats_report.hpp"

#ifndef VOLUMETRICA_VERSION
#define VOLUMETRICA_VERSION "0.0.0"
#endif

namespace volumetrica::pipeline {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = VOLUMETRICA_VERSION;

// ---------------------------------------------------------------- provenance

inline std::string hex(std::uint64_t v, int width) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%0*llx", width, static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

/// CRC-64/XZ of a string.
inline std::uint64_t crc64(std::string_view s) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  crc.process_bytes(s.data(), s.size());
  return crc.checksum();
}

struct InputChecksum {
  std::string path;
  std::size_t bytes = 0;
  std::uint32_t crc = 0;
};

struct Provenance {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;  // CRC-64 of the canonical run configuration
  std::vector<InputChecksum> inputs;
};

inline Json to_json(const Provenance& p) {
  Json inputs = Json::array();
  for (const auto& i : p.inputs) inputs.push_back({{"path", i.path}, {"bytes", i.bytes}, {"crc32", hex(i.crc, 8)}});
  return {{"tool", "volumetrica"}, {"version", kToolVersion}, {"command", p.command},
          {"seed", p.seed},        {"config_hash", p.config_hash}, {"inputs", inputs}};
}

// ---------------------------------------------------------------- fits and estimates

inline Json to_json(const numopt::FitResult& f) {
  return {{"degree", f.polynomial.degree},
          {"coefficients", f.polynomial.coefficients},
          {"mse", f.mse},
          {"domain", {f.polynomial.domain_lo, f.polynomial.domain_hi}},
          {"ill_conditioned", f.ill_conditioned},
          {"condition_number", f.condition_number}};
}

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

/// `timings` off drops wall times so repeated runs compare byte for byte.
inline Json to_json(const EstimateReport& r, bool timings = true) {
  Json methods = Json::object();
  for (const auto& [m, res] : r.results) {
    Json j;
    j["status"] = res.volume ? "ok" : "error";
    j["volume_mm3"] = optional_number(res.volume);
    if (!res.volume) j["error"] = res.error;
    if (timings) j["seconds"] = res.seconds;
    j["details"] = res.details;
    if (res.fit) j["fit"] = to_json(*res.fit);
    methods[to_string(m)] = j;
  }
  return {{"case_id", r.case_id},
          {"spacing_mm", {r.spacing.sx, r.spacing.sy, r.spacing.sz}},
          {"slice_count", r.slice_count},
          {"threshold", r.threshold},
          {"reference_volume_mm3", optional_number(r.reference_volume)},
          {"methods", methods},
          {"warnings", r.warnings}};
}

inline Json to_json(const DiscrepancyMatrix& d) {
  Json names = Json::array(), matrix = Json::array(), counts = Json::array();
  for (auto m : d.methods) names.push_back(to_string(m));
  for (std::size_t i = 0; i < d.methods.size(); ++i) {
    Json row = Json::array();
    for (const auto& v : d.mean_percent[i]) row.push_back(optional_number(v));
    matrix.push_back(row);
    counts.push_back(d.case_count[i]);
  }
  return {{"methods", names}, {"mean_percent", matrix}, {"case_count", counts}};
}

inline Json to_json(const StatsRow& r) {
  Json j;
  j["metric"] = r.metric;
  if (r.interval)
    j["value"] = {r.interval->lo, r.interval->hi};
  else
    j["value"] = optional_number(r.value);
  j["unit"] = r.unit;
  j["remark"] = r.remark;
  if (r.statistic) j["statistic"] = *r.statistic;
  if (r.df1) j["df"] = r.df2 ? Json{*r.df1, *r.df2} : Json{*r.df1};
  return j;
}

inline Json to_json(const StatsReport& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) rows.push_back(to_json(r));
  return {{"cases", s.cases}, {"folds", s.folds}, {"bootstrap_resamples", s.resamples}, {"rows", rows}};
}

/// Wraps a payload with its schema id and provenance block.
inline Json wrap_report(const std::string& schema, const Provenance& p, Json payload) {
  Json out;
  out["schema"] = schema;
  out["provenance"] = to_json(p);
  for (auto& [k, v] : payload.items()) out[k] = std::move(v);
  return out;
}

// ---------------------------------------------------------------- CSV

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

/// One row per case, one volume column per method (empty when it failed).
inline std::string estimates_csv(std::span<const EstimateReport> reports) {
  std::ostringstream out;
  out << "case_id,reference_mm3";
  for (auto m : kAllMethods) out << ',' << to_string(m) << "_mm3";
  out << '\n';
  for (const auto& r : reports) {
    out << csv_escape(r.case_id) << ',' << (r.reference_volume ? csv_number(*r.reference_volume) : "");
    for (auto m : kAllMethods) {
      const auto v = r.volume(m);
      out << ',' << (v ? csv_number(*v) : "");
    }
    out << '\n';
  }
  return out.str();
}

inline std::string discrepancy_csv(const DiscrepancyMatrix& d) {
  std::ostringstream out;
  out << "method";
  for (auto m : d.methods) out << ',' << to_string(m);
  out << '\n';
  for (std::size_t i = 0; i < d.methods.size(); ++i) {
    out << to_string(d.methods[i]);
    for (const auto& v : d.mean_percent[i]) out << ',' << (v ? csv_number(*v) : "");
    out << '\n';
  }
  return out.str();
}

inline std::string stats_csv(const StatsReport& s) {
  std::ostringstream out;
  out << "metric,value,lower,upper,unit,statistic,remark\n";
  for (const auto& r : s.rows) {
    out << r.metric << ',' << (r.value ? csv_number(*r.value) : "") << ','
        << (r.interval ? csv_number(r.interval->lo) + ',' + csv_number(r.interval->hi) : std::string(","))
        << ',' << r.unit << ',' << (r.statistic ? csv_number(*r.statistic) : "") << ',' << csv_escape(r.remark)
        << '\n';
  }
  return out.str();
}

}  // namespace volumetrica::pipeline
