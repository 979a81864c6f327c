// SPDX-License-Identifier: Apache-2.0
#pragma once

// Voxel grids, binary masks and the geometric measurements taken on them.
//
// Memory layout is row-major with z outermost and x fastest:
//   index(x, y, z) = (z * ny + y) * nx + x
// Voxel (x, y, z) has its centre at (x * sx, y * sy, z * sz) in millimetres.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "volumetrica/error.hpp"

namespace volumetrica {

struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double voxel_volume() const { return sx * sy * sz; }
  double pixel_area() const { return sx * sy; }

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

inline void validate(const Spacing& s) {
  for (double v : {s.sx, s.sy, s.sz})
    require(std::isfinite(v) && v > 0.0, ErrorCode::invalid_argument,
            "voxel spacing must be positive and finite");
}

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t slice_count() const { return nx * ny; }

  friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::size_t voxel_index(const Dims& d, std::size_t x, std::size_t y, std::size_t z) {
  return (z * d.ny + y) * d.nx + x;
}

/// Scalar intensity volume.
class VoxelGrid {
 public:
  VoxelGrid() = default;

  VoxelGrid(Dims dims, Spacing spacing, std::vector<double> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate(spacing_);
    require(data_.size() == dims_.count(), ErrorCode::shape_mismatch,
            "voxel data length does not match grid dimensions");
    for (double v : data_)
      require(std::isfinite(v), ErrorCode::invalid_argument, "voxel values must be finite");
  }

  VoxelGrid(Dims dims, Spacing spacing, double fill = 0.0)
      : VoxelGrid(dims, spacing, std::vector<double>(dims.count(), fill)) {}

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const double> data() const { return data_; }

  double at(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[voxel_index(dims_, x, y, z)];
  }

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<double> data_;
};

/// Boolean volume stored as one byte per voxel (0 or 1).
class BinaryMask {
 public:
  BinaryMask() = default;

  BinaryMask(Dims dims, Spacing spacing, std::vector<std::uint8_t> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate(spacing_);
    require(data_.size() == dims_.count(), ErrorCode::shape_mismatch,
            "mask data length does not match grid dimensions");
    for (auto& v : data_) v = v ? 1 : 0;
  }

  BinaryMask(Dims dims, Spacing spacing)
      : BinaryMask(dims, spacing, std::vector<std::uint8_t>(dims.count(), 0)) {}

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::uint8_t> data() const { return data_; }

  bool at(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[voxel_index(dims_, x, y, z)] != 0;
  }

  std::span<const std::uint8_t> slice(std::size_t z) const {
    return std::span<const std::uint8_t>(data_).subspan(z * dims_.slice_count(),
                                                        dims_.slice_count());
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::uint8_t> data_;
};

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  require(a.dims() == b.dims(), ErrorCode::shape_mismatch, "mask dimensions differ");
  std::vector<std::uint8_t> out(a.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] | b.data()[i];
  return BinaryMask(a.dims(), a.spacing(), std::move(out));
}

/// Voxels strictly above `level`.
inline BinaryMask threshold(const VoxelGrid& grid, double level) {
  std::vector<std::uint8_t> out(grid.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grid.data()[i] > level ? 1 : 0;
  return BinaryMask(grid.dims(), grid.spacing(), std::move(out));
}

struct SliceSample {
  double position = 0.0;  // mm along z
  double area = 0.0;      // mm^2

  friend bool operator==(const SliceSample&, const SliceSample&) = default;
};

/// Cross-sectional area as a function of axial position, sampled once per slice.
struct SliceAreaSeries {
  std::vector<SliceSample> samples;
  double thickness = 1.0;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
};

/// Throws invalid_argument unless positions increase in steps of `thickness`.
inline void validate(const SliceAreaSeries& series) {
  require(std::isfinite(series.thickness) && series.thickness > 0.0,
          ErrorCode::invalid_argument, "slice thickness must be positive");
  for (std::size_t i = 0; i < series.samples.size(); ++i) {
    const auto& s = series.samples[i];
    require(std::isfinite(s.position) && std::isfinite(s.area) && s.area >= 0.0,
            ErrorCode::invalid_argument, "slice areas must be finite and non-negative");
    if (i == 0) continue;
    const double gap = s.position - series.samples[i - 1].position;
    require(gap > 0.0, ErrorCode::invalid_argument, "slice positions must be strictly increasing");
    require(std::abs(gap - series.thickness) <= 1e-9 * series.thickness,
            ErrorCode::invalid_argument, "slice gap differs from slice thickness");
  }
}

/// Builds a series at positions first, first + t, ... from a list of areas.
inline SliceAreaSeries make_series(std::span<const double> areas, double thickness,
                                   double first_position = 0.0) {
  SliceAreaSeries series;
  series.thickness = thickness;
  for (std::size_t i = 0; i < areas.size(); ++i)
    series.samples.push_back({first_position + static_cast<double>(i) * thickness, areas[i]});
  validate(series);
  return series;
}

inline double voxel_volume(const BinaryMask& mask) {
  return static_cast<double>(mask.count()) * mask.spacing().voxel_volume();
}

/// One sample per slice between the first and last slice touching the mask.
/// Interior empty slices are kept with area 0.
inline SliceAreaSeries slice_areas(const BinaryMask& mask) {
  const auto& d = mask.dims();
  const auto& s = mask.spacing();
  std::vector<std::size_t> counts(d.nz, 0);
  for (std::size_t z = 0; z < d.nz; ++z) {
    auto sl = mask.slice(z);
    counts[z] = static_cast<std::size_t>(std::count(sl.begin(), sl.end(), std::uint8_t{1}));
  }
  SliceAreaSeries series;
  series.thickness = s.sz;
  auto first = std::find_if(counts.begin(), counts.end(), [](auto c) { return c > 0; });
  if (first == counts.end()) return series;
  auto last = std::find_if(counts.rbegin(), counts.rend(), [](auto c) { return c > 0; }).base();
  for (auto it = first; it != last; ++it) {
    const auto z = static_cast<std::size_t>(it - counts.begin());
    series.samples.push_back({static_cast<double>(z) * s.sz,
                              static_cast<double>(*it) * s.pixel_area()});
  }
  return series;
}

/// Area of the ellipse with the same second central moments as the true pixels
/// of one slice. For a filled ellipse the moments are (a^2/4, b^2/4), so the
/// semi-axes come back as 2*sqrt(lambda).
inline double ellipse_fit_area(std::span<const std::uint8_t> slice, std::size_t nx,
                               std::size_t ny, double sx, double sy) {
  require(slice.size() == nx * ny, ErrorCode::shape_mismatch, "slice size mismatch");
  double n = 0, mx = 0, my = 0;
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x)
      if (slice[y * nx + x]) {
        n += 1;
        mx += static_cast<double>(x);
        my += static_cast<double>(y);
      }
  require(n >= 3, ErrorCode::degenerate_input, "ellipse fit needs at least 3 pixels");
  mx /= n;
  my /= n;
  double cxx = 0, cyy = 0, cxy = 0;
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x)
      if (slice[y * nx + x]) {
        const double dx = static_cast<double>(x) - mx;
        const double dy = static_cast<double>(y) - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
      }
  cxx /= n;
  cyy /= n;
  cxy /= n;
  const double mean = 0.5 * (cxx + cyy);
  const double diff = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
  const double l1 = mean + diff;
  const double l2 = std::max(mean - diff, 0.0);
  return std::numbers::pi * (2.0 * std::sqrt(l1)) * (2.0 * std::sqrt(l2)) * sx * sy;
}

inline double ellipse_fit_area(const BinaryMask& mask, std::size_t z) {
  return ellipse_fit_area(mask.slice(z), mask.dims().nx, mask.dims().ny, mask.spacing().sx,
                          mask.spacing().sy);
}

/// Diameter of the circle whose area equals the largest slice area.
inline double max_equivalent_diameter(const SliceAreaSeries& series) {
  double amax = 0.0;
  for (const auto& s : series.samples) amax = std::max(amax, s.area);
  require(amax > 0.0, ErrorCode::degenerate_input, "series has no positive area");
  return 2.0 * std::sqrt(amax / std::numbers::pi);
}

/// Largest in-plane caliper distance over all slices, measured between pixel
/// centres and widened by one mean pixel size.
inline double max_feret_diameter(const BinaryMask& mask) {
  const auto& d = mask.dims();
  const auto& s = mask.spacing();
  double best = -1.0;
  std::vector<std::pair<double, double>> edge;
  for (std::size_t z = 0; z < d.nz; ++z) {
    edge.clear();
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        if (!mask.at(x, y, z)) continue;
        const bool boundary = x == 0 || y == 0 || x + 1 == d.nx || y + 1 == d.ny ||
                              !mask.at(x - 1, y, z) || !mask.at(x + 1, y, z) ||
                              !mask.at(x, y - 1, z) || !mask.at(x, y + 1, z);
        if (boundary) edge.emplace_back(static_cast<double>(x) * s.sx, static_cast<double>(y) * s.sy);
      }
    for (std::size_t i = 0; i < edge.size(); ++i)
      for (std::size_t j = i; j < edge.size(); ++j)
        best = std::max(best, std::hypot(edge[i].first - edge[j].first,
                                         edge[i].second - edge[j].second));
  }
  require(best >= 0.0, ErrorCode::degenerate_input, "mask is empty");
  return best + 0.5 * (s.sx + s.sy);
}

/// Consolidation-to-tumour ratio.
inline double ctr(double d_solid, double d_total) {
  require(std::isfinite(d_solid) && std::isfinite(d_total) && d_total > 0.0 &&
              d_solid >= 0.0 && d_solid <= d_total,
          ErrorCode::domain_error, "ctr requires 0 <= d_solid <= d_total and d_total > 0");
  return d_solid / d_total;
}

}  // namespace volumetrica
