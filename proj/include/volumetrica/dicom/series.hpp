// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "volumetrica/core/volume.hpp"
#include "volumetrica/dicom/codec.hpp"

namespace volumetrica::dicom {

enum class SliceSortKey { image_position_z, instance_number, input_order };

inline const char* to_string(SliceSortKey k) {
  switch (k) {
    case SliceSortKey::image_position_z: return "image_position_z";
    case SliceSortKey::instance_number: return "instance_number";
    case SliceSortKey::input_order: return "input_order";
  }
  return "?";
}

struct SliceOrderEntry {
  std::size_t input_index = 0;
  double key = 0.0;
};

struct SeriesGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double sx = 1.0;  // column spacing
  double sy = 1.0;  // row spacing
  double slice_thickness = 1.0;
  SliceSortKey sort_key = SliceSortKey::input_order;
  std::vector<SliceOrderEntry> slice_order;
  bool uniform_gaps = true;  // z positions evenly spaced (only meaningful with positions)
};

struct Series {
  VoxelGrid grid;
  SeriesGeometry geometry;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> decode_pixels(const Dataset& ds, std::size_t count, std::size_t index) {
  const auto bits = ds.get_us(tags::kBitsAllocated).value_or(16);
  const auto signed_repr = ds.get_us(tags::kPixelRepresentation).value_or(0) == 1;
  require(bits == 8 || bits == 16 || bits == 32, ErrorCode::unsupported_syntax,
          "slice " + std::to_string(index) + ": unsupported BitsAllocated " + std::to_string(bits));
  const auto& raw = ds.find(tags::kPixelData)->value;
  const std::size_t width = bits / 8u;
  require(raw.size() >= count * width, ErrorCode::geometry_mismatch,
          "slice " + std::to_string(index) + ": PixelData holds " + std::to_string(raw.size()) + " bytes, need " +
              std::to_string(count * width));
  const double slope = ds.has(tags::kRescaleSlope) ? ds.get_ds(tags::kRescaleSlope)->at(0) : 1.0;
  const double intercept = ds.has(tags::kRescaleIntercept) ? ds.get_ds(tags::kRescaleIntercept)->at(0) : 0.0;
  std::vector<double> out(count);
  ByteReader r(raw);
  for (std::size_t i = 0; i < count; ++i) {
    double stored;
    if (width == 1) {
      const auto v = r.u8();
      stored = signed_repr ? static_cast<double>(static_cast<std::int8_t>(v)) : static_cast<double>(v);
    } else if (width == 2) {
      const auto v = r.u16();
      stored = signed_repr ? static_cast<double>(static_cast<std::int16_t>(v)) : static_cast<double>(v);
    } else {
      const auto v = r.u32();
      stored = signed_repr ? static_cast<double>(static_cast<std::int32_t>(v)) : static_cast<double>(v);
    }
    out[i] = slope * stored + intercept;
  }
  return out;
}

inline double positive_value(const Dataset& ds, Tag t, std::size_t which, const char* name) {
  const auto v = ds.get_ds(t);
  require(v->size() > which, ErrorCode::malformed, std::string(name) + " has too few values");
  const double x = (*v)[which];
  require(x > 0.0, ErrorCode::malformed, std::string(name) + " must be positive");
  return x;
}

}  // namespace detail

/// Assembles a volume from single-frame slices. Slices lacking Rows, Columns
/// or PixelData are skipped with a warning.
inline Series read_series(const std::vector<Dataset>& datasets) {
  Series out;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& ds = datasets[i];
    if (ds.has(tags::kRows) && ds.has(tags::kColumns) && ds.has(tags::kPixelData))
      usable.push_back(i);
    else
      out.warnings.push_back("skipping slice " + std::to_string(i) + ": missing Rows, Columns or PixelData");
  }
  require(!usable.empty(), ErrorCode::no_valid_images, "No valid DICOM images found");

  auto& g = out.geometry;
  const auto& first = datasets[usable.front()];
  g.rows = *first.get_us(tags::kRows);
  g.cols = *first.get_us(tags::kColumns);
  require(g.rows > 0 && g.cols > 0, ErrorCode::malformed, "Rows and Columns must be positive");
  for (auto i : usable) {
    const auto& ds = datasets[i];
    require(*ds.get_us(tags::kRows) == g.rows && *ds.get_us(tags::kColumns) == g.cols, ErrorCode::geometry_mismatch,
            "slice " + std::to_string(i) + " is " + std::to_string(*ds.get_us(tags::kRows)) + "x" +
                std::to_string(*ds.get_us(tags::kColumns)) + ", expected " + std::to_string(g.rows) + "x" +
                std::to_string(g.cols));
  }

  // PixelSpacing lists the row spacing (between rows, i.e. along y) first.
  if (first.has(tags::kPixelSpacing)) {
    g.sy = detail::positive_value(first, tags::kPixelSpacing, 0, "PixelSpacing");
    g.sx = detail::positive_value(first, tags::kPixelSpacing, 1, "PixelSpacing");
    for (auto i : usable) {
      const auto& ds = datasets[i];
      const bool same = ds.has(tags::kPixelSpacing) && *ds.get_ds(tags::kPixelSpacing) == *first.get_ds(tags::kPixelSpacing);
      require(same, ErrorCode::geometry_mismatch, "slice " + std::to_string(i) + " has a different PixelSpacing");
    }
  } else {
    out.warnings.push_back("PixelSpacing missing, assigning default values (1.0 mm)");
  }
  if (first.has(tags::kSliceThickness)) {
    g.slice_thickness = detail::positive_value(first, tags::kSliceThickness, 0, "SliceThickness");
  } else {
    out.warnings.push_back("SliceThickness missing, assigning default values (1.0 mm)");
  }

  const bool all_positions = std::all_of(usable.begin(), usable.end(), [&](std::size_t i) {
    return datasets[i].has(tags::kImagePosition);
  });
  const bool all_instances = std::all_of(usable.begin(), usable.end(), [&](std::size_t i) {
    return datasets[i].has(tags::kInstanceNumber);
  });
  g.sort_key = all_positions ? SliceSortKey::image_position_z
               : all_instances ? SliceSortKey::instance_number
                               : SliceSortKey::input_order;
  for (std::size_t n = 0; n < usable.size(); ++n) {
    const auto& ds = datasets[usable[n]];
    double key = static_cast<double>(n);
    if (g.sort_key == SliceSortKey::image_position_z) {
      const auto p = *ds.get_ds(tags::kImagePosition);
      require(p.size() == 3, ErrorCode::malformed, "ImagePositionPatient must have three values");
      key = p[2];
    } else if (g.sort_key == SliceSortKey::instance_number) {
      key = static_cast<double>(*ds.get_is(tags::kInstanceNumber));
    }
    g.slice_order.push_back({usable[n], key});
  }
  std::stable_sort(g.slice_order.begin(), g.slice_order.end(),
                   [](const SliceOrderEntry& a, const SliceOrderEntry& b) { return a.key < b.key; });

  if (g.sort_key == SliceSortKey::image_position_z && g.slice_order.size() > 2) {
    const double gap0 = g.slice_order[1].key - g.slice_order[0].key;
    for (std::size_t k = 2; k < g.slice_order.size(); ++k) {
      const double gap = g.slice_order[k].key - g.slice_order[k - 1].key;
      if (std::abs(gap - gap0) > 1e-6 * std::max(1.0, std::abs(gap0))) g.uniform_gaps = false;
    }
    if (!g.uniform_gaps) out.warnings.push_back("slice positions are not evenly spaced");
  }

  const std::size_t per_slice = g.rows * g.cols;
  std::vector<double> values;
  values.reserve(per_slice * usable.size());
  for (const auto& entry : g.slice_order) {
    auto px = detail::decode_pixels(datasets[entry.input_index], per_slice, entry.input_index);
    values.insert(values.end(), px.begin(), px.end());
  }
  out.grid = VoxelGrid({g.cols, g.rows, usable.size()}, {g.sx, g.sy, g.slice_thickness}, std::move(values));
  return out;
}

/// Parses every regular file in a directory (sorted by name). Files that fail
/// to parse are skipped with a warning.
inline Series load_directory(const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  require(fs::is_directory(path, ec), ErrorCode::io_error, "'" + path + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Dataset> datasets;
  std::vector<std::string> warnings;
  for (const auto& f : files) {
    try {
      datasets.push_back(read_file(f.string()));
    } catch (const Error& e) {
      warnings.push_back("skipping " + f.filename().string() + ": " + e.what());
    }
  }
  auto series = read_series(datasets);
  warnings.insert(warnings.end(), series.warnings.begin(), series.warnings.end());
  series.warnings = std::move(warnings);
  return series;
}

/// One 16-bit signed slice per z with stored = round((v - intercept) / slope),
/// clamped to the int16 range.
inline std::vector<Dataset> grid_to_datasets(const VoxelGrid& grid, double slope = 1.0 / 1024.0,
                                             double intercept = 0.0) {
  require(slope > 0.0 && std::isfinite(slope) && std::isfinite(intercept), ErrorCode::invalid_argument,
          "rescale slope must be positive");
  const auto& d = grid.dims();
  const auto& s = grid.spacing();
  require(d.nx <= 0xFFFF && d.ny <= 0xFFFF, ErrorCode::size_limit, "slice too large for Rows/Columns");
  std::vector<Dataset> out;
  for (std::size_t z = 0; z < d.nz; ++z) {
    Dataset ds;
    ds.set_string(tags::kSopClass, "UI", "1.2.840.10008.5.1.4.1.1.2");
    ds.set_string(tags::kSopInstance, "UI", "2.25." + std::to_string(z + 1));
    ds.set_string(tags::kModality, "CS", "CT");
    ds.set_ds(tags::kSliceThickness, {s.sz});
    ds.set_is(tags::kInstanceNumber, static_cast<long>(z + 1));
    ds.set_ds(tags::kImagePosition, {0.0, 0.0, static_cast<double>(z) * s.sz});
    ds.set_us(tags::kSamplesPerPixel, 1);
    ds.set_string(tags::kPhotometric, "CS", "MONOCHROME2");
    ds.set_us(tags::kRows, static_cast<std::uint16_t>(d.ny));
    ds.set_us(tags::kColumns, static_cast<std::uint16_t>(d.nx));
    ds.set_ds(tags::kPixelSpacing, {s.sy, s.sx});
    ds.set_us(tags::kBitsAllocated, 16);
    ds.set_us(tags::kBitsStored, 16);
    ds.set_us(tags::kHighBit, 15);
    ds.set_us(tags::kPixelRepresentation, 1);
    ds.set_ds(tags::kRescaleIntercept, {intercept});
    ds.set_ds(tags::kRescaleSlope, {slope});
    ByteWriter px;
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double stored = std::round((grid.at(x, y, z) - intercept) / slope);
        px.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(stored, -32768.0, 32767.0))));
      }
    ds.set(tags::kPixelData, "OW", px.take());
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace volumetrica::dicom
