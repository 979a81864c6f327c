// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "volumetrica/core/volume.hpp"
#include "volumetrica/nn/network.hpp"
#include "volumetrica/nn/resize.hpp"

namespace volumetrica::nn {

inline constexpr double kDefaultMaskThreshold = 0.5;

/// Spatial (d, h, w) of a (d, h, w, c) or (h, w, c) tensor.
inline std::array<std::size_t, 3> spatial_extent(const Shape& s) {
  require(s.size() == 3 || s.size() == 4, ErrorCode::shape_mismatch,
          "expected an image tensor, got " + shape_string(s));
  if (s.size() == 3) return {1, s[0], s[1]};
  return {s[0], s[1], s[2]};
}

/// mask = pred > threshold, on a lattice with the given voxel spacing.
inline BinaryMask extract_tumor_mask(const Tensor& pred, double threshold = kDefaultMaskThreshold,
                                     Spacing spacing = {1, 1, 1}) {
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::invalid_argument, "threshold must lie in (0, 1)");
  const auto [d, h, w] = spatial_extent(pred.shape());
  require(pred.shape().back() == 1, ErrorCode::shape_mismatch, "prediction must have one channel");
  std::vector<std::uint8_t> bits(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) bits[i] = pred[i] > threshold;
  return BinaryMask({w, h, d}, spacing, std::move(bits));
}

/// Physical volume of a prediction mask whose lattice spans the same extent
/// as a source grid of `source` voxels at `source_spacing`. Each mask voxel
/// covers (nx/ox)(ny/oy)(nz/oz) source voxels.
inline double cnn_volume(const BinaryMask& mask, const Dims& source, const Spacing& source_spacing) {
  validate(source_spacing);
  const Dims& o = mask.dims();
  require(o.count() > 0 && source.count() > 0, ErrorCode::invalid_argument, "empty geometry");
  const double scale = (static_cast<double>(source.nx) / static_cast<double>(o.nx)) *
                       (static_cast<double>(source.ny) / static_cast<double>(o.ny)) *
                       (static_cast<double>(source.nz) / static_cast<double>(o.nz));
  double volume = 0.0;
  for (std::size_t z = 0; z < o.nz; ++z) {
    const auto slice = mask.slice(z);
    const auto pixels = static_cast<double>(std::count(slice.begin(), slice.end(), std::uint8_t{1}));
    volume += pixels * source_spacing.sx * source_spacing.sy * source_spacing.sz;
  }
  return volume * scale;
}

/// Mask given at the mask's own geometry.
inline double cnn_volume(const BinaryMask& mask) { return cnn_volume(mask, mask.dims(), mask.spacing()); }

/// Supervised target for a network: the mask resampled to the input lattice,
/// then block-averaged down to the network's output lattice.
inline Tensor segmentation_target(const BinaryMask& mask, const Network& net) {
  const auto in = spatial_extent(net.input_shape);
  const Shape out_shape = output_shape(net);
  const auto out = spatial_extent(out_shape);
  Tensor resized = resize_mask(mask, in);
  for (std::size_t a = 0; a < 3; ++a)
    require(out[a] > 0 && in[a] % out[a] == 0, ErrorCode::shape_mismatch,
            "network output lattice does not tile its input");
  const int rank = net.input_shape.size() == 3 ? 2 : 3;
  if (rank == 2) resized = Tensor({in[1], in[2], 1}, std::vector<double>(resized.data().begin(), resized.data().end()));
  Tensor t = avg_pool(resized, {in[0] / out[0], in[1] / out[1], in[2] / out[2]}, rank);
  return Tensor(out_shape, std::vector<double>(t.data().begin(), t.data().end()));
}

/// Network input for a grid: resampled to the input lattice and min-max
/// normalised to [0, 1] (a constant grid maps to zeros).
inline Tensor network_input(const VoxelGrid& grid, const Network& net) {
  const auto in = spatial_extent(net.input_shape);
  Tensor t = resize_volume(grid, in);
  double lo = t.size() ? t[0] : 0.0, hi = lo;
  for (double v : t.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  const double span = hi - lo;
  for (auto& v : t.data()) v = span > 0 ? (v - lo) / span : 0.0;
  return Tensor(net.input_shape, std::vector<double>(t.data().begin(), t.data().end()));
}

/// Full inference path: resample, predict, threshold, and scale back to the
/// grid's physical extent.
inline double predict_volume(const Network& net, const VoxelGrid& grid, double threshold = kDefaultMaskThreshold) {
  require(net.input_shape.size() == 4, ErrorCode::invalid_argument, "volume inference needs a 3D network");
  const Tensor pred = forward(net, network_input(grid, net));
  return cnn_volume(extract_tumor_mask(pred, threshold), grid.dims(), grid.spacing());
}

}  // namespace volumetrica::nn
