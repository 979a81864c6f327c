// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "volumetrica/core/volume.hpp"
#include "volumetrica/nn/tensor.hpp"

namespace volumetrica::nn {

namespace detail {

struct AxisMap {
  std::vector<std::size_t> lo;
  std::vector<double> frac;
};

// Align-corners sampling: target index i maps to i * (S - 1) / (T - 1).
inline AxisMap axis_map(std::size_t source, std::size_t target, const char* axis) {
  require(target >= 1, ErrorCode::invalid_argument, std::string("target extent along ") + axis + " must be positive");
  require(source >= 1, ErrorCode::degenerate_input, std::string("source extent along ") + axis + " is zero");
  AxisMap m;
  m.lo.resize(target);
  m.frac.assign(target, 0.0);
  if (source == target) {
    for (std::size_t i = 0; i < target; ++i) m.lo[i] = i;
    return m;
  }
  require(source >= 2, ErrorCode::degenerate_input,
          std::string("cannot interpolate a single-sample axis (") + axis + ")");
  for (std::size_t i = 0; i < target; ++i) {
    const double pos = target == 1 ? 0.5 * static_cast<double>(source - 1)
                                   : static_cast<double>(i * (source - 1)) / static_cast<double>(target - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= source - 1) lo = source - 2;
    m.lo[i] = lo;
    m.frac[i] = pos - static_cast<double>(lo);
  }
  return m;
}

}  // namespace detail

/// Trilinear resampling of raw z-major samples (nz, ny, nx) onto
/// `target` = (d, h, w); returns a (d, h, w, 1) tensor clamped to the input range.
inline Tensor resize_samples(std::span<const double> data, const Dims& dims, std::array<std::size_t, 3> target) {
  require(data.size() == dims.count() && !data.empty(), ErrorCode::shape_mismatch,
          "sample count does not match dimensions");
  const auto mz = detail::axis_map(dims.nz, target[0], "z");
  const auto my = detail::axis_map(dims.ny, target[1], "y");
  const auto mx = detail::axis_map(dims.nx, target[2], "x");
  const auto [mn, mxv] = std::minmax_element(data.begin(), data.end());
  const double lo_v = *mn, hi_v = *mxv;
  Tensor out({target[0], target[1], target[2], 1});
  auto at = [&](std::size_t z, std::size_t y, std::size_t x) { return data[voxel_index(dims, x, y, z)]; };
  std::size_t o = 0;
  for (std::size_t k = 0; k < target[0]; ++k) {
    const std::size_t z0 = mz.lo[k], z1 = std::min(z0 + 1, dims.nz - 1);
    const double fz = mz.frac[k];
    for (std::size_t j = 0; j < target[1]; ++j) {
      const std::size_t y0 = my.lo[j], y1 = std::min(y0 + 1, dims.ny - 1);
      const double fy = my.frac[j];
      for (std::size_t i = 0; i < target[2]; ++i, ++o) {
        const std::size_t x0 = mx.lo[i], x1 = std::min(x0 + 1, dims.nx - 1);
        const double fx = mx.frac[i];
        double v;
        if (fx == 0.0 && fy == 0.0 && fz == 0.0) {
          v = at(z0, y0, x0);
        } else {
          const double c00 = at(z0, y0, x0) * (1 - fx) + at(z0, y0, x1) * fx;
          const double c01 = at(z0, y1, x0) * (1 - fx) + at(z0, y1, x1) * fx;
          const double c10 = at(z1, y0, x0) * (1 - fx) + at(z1, y0, x1) * fx;
          const double c11 = at(z1, y1, x0) * (1 - fx) + at(z1, y1, x1) * fx;
          const double c0 = c00 * (1 - fy) + c01 * fy;
          const double c1 = c10 * (1 - fy) + c11 * fy;
          v = c0 * (1 - fz) + c1 * fz;
        }
        out[o] = std::clamp(v, lo_v, hi_v);
      }
    }
  }
  return out;
}

inline constexpr std::array<std::size_t, 3> kNetworkExtent{32, 32, 32};

/// Resamples a grid onto a (d, h, w) lattice, default 32^3.
inline Tensor resize_volume(const VoxelGrid& grid, std::array<std::size_t, 3> target = kNetworkExtent) {
  return resize_samples(grid.data(), grid.dims(), target);
}

inline Tensor resize_mask(const BinaryMask& mask, std::array<std::size_t, 3> target = kNetworkExtent) {
  std::vector<double> v(mask.data().begin(), mask.data().end());
  return resize_samples(v, mask.dims(), target);
}

}  // namespace volumetrica::nn
