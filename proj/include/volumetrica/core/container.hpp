// SPDX-License-Identifier: Apache-2.0
#pragma once

// "VOLV" volume container (all fields little-endian):
//
//   offset  size  field
//   0       4     magic "VOLV"
//   4       4     u32 version (1)
//   8       1     u8 dtype: 0 = f64 intensities, 1 = u8 mask (0/1)
//   9       3     reserved, zero
//   12      12    u32 nx, ny, nz
//   24      24    f64 sx, sy, sz (mm)
//   48      ...   payload, nx*ny*nz elements, z outermost, x fastest

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "volumetrica/core/bytes.hpp"
#include "volumetrica/core/volume.hpp"

namespace volumetrica {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class VolumeDType : std::uint8_t { f64 = 0, mask_u8 = 1 };

namespace detail {

inline void write_header(ByteWriter& w, VolumeDType type, const Dims& d, const Spacing& s) {
  w.text("VOLV");
  w.u32(kContainerVersion);
  w.u8(static_cast<std::uint8_t>(type));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  for (auto n : {d.nx, d.ny, d.nz}) {
    require(n <= 0xffffffffu, ErrorCode::size_limit, "dimension exceeds 32 bits");
    w.u32(static_cast<std::uint32_t>(n));
  }
  w.f64(s.sx);
  w.f64(s.sy);
  w.f64(s.sz);
}

}  // namespace detail

inline Bytes encode_volume(const VoxelGrid& grid) {
  ByteWriter w;
  detail::write_header(w, VolumeDType::f64, grid.dims(), grid.spacing());
  for (double v : grid.data()) w.f64(v);
  return w.take();
}

inline Bytes encode_volume(const BinaryMask& mask) {
  ByteWriter w;
  detail::write_header(w, VolumeDType::mask_u8, mask.dims(), mask.spacing());
  w.raw(mask.data());
  return w.take();
}

using Volume = std::variant<VoxelGrid, BinaryMask>;

inline Volume decode_volume(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.text(4) != "VOLV") throw ParseError(ErrorCode::malformed, "missing VOLV magic", 0);
  const auto version = r.u32();
  if (version != kContainerVersion)
    throw ParseError(ErrorCode::malformed, "unsupported VOLV version " + std::to_string(version), 4);
  const auto type = r.u8();
  r.raw(3);
  Dims d;
  d.nx = r.u32();
  d.ny = r.u32();
  d.nz = r.u32();
  Spacing s{r.f64(), r.f64(), r.f64()};
  const std::size_t n = d.count();
  if (type == static_cast<std::uint8_t>(VolumeDType::f64)) {
    if (r.remaining() / 8 < n) throw ParseError(ErrorCode::truncated, "payload shorter than header", r.pos());
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    return VoxelGrid(d, s, std::move(values));
  }
  if (type == static_cast<std::uint8_t>(VolumeDType::mask_u8)) {
    auto raw = r.raw(n);
    return BinaryMask(d, s, std::vector<std::uint8_t>(raw.begin(), raw.end()));
  }
  throw ParseError(ErrorCode::malformed, "unknown VOLV dtype " + std::to_string(type), 8);
}

inline VoxelGrid as_grid(const Volume& v) {
  if (const auto* g = std::get_if<VoxelGrid>(&v)) return *g;
  const auto& m = std::get<BinaryMask>(v);
  std::vector<double> values(m.data().begin(), m.data().end());
  return VoxelGrid(m.dims(), m.spacing(), std::move(values));
}

}  // namespace volumetrica
