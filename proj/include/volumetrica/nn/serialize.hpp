// SPDX-License-Identifier: Apache-2.0
#pragma once

// "VNN1" network container (little-endian):
//   magic "VNN1" | u32 version | u32 input rank r | r x u32 input extents | u32 layer count
//   per layer: u8 kind (0 conv, 1 avgpool) | u8 rank | u8 activation | u8 reserved
//              | 3 x u32 extents (kd, kh, kw) | u32 in | u32 out
//              | conv only: (kd*kh*kw*in*out) x f64 weights, out x f64 bias

#include <cstdint>
#include <span>
#include <string>

#include "volumetrica/core/bytes.hpp"
#include "volumetrica/nn/network.hpp"

namespace volumetrica::nn {

inline constexpr std::uint32_t kNetworkFormatVersion = 1;
inline constexpr std::uint32_t kMaxSerializedExtent = 1u << 20;

inline Bytes encode_network(const Network& net) {
  output_shapes(net);
  ByteWriter w;
  w.text("VNN1");
  w.u32(kNetworkFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.input_shape.size()));
  for (auto e : net.input_shape) w.u32(static_cast<std::uint32_t>(e));
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      w.u8(0);
      w.u8(static_cast<std::uint8_t>(conv->rank));
      w.u8(static_cast<std::uint8_t>(conv->activation));
      w.u8(0);
      for (auto k : conv->kernel) w.u32(static_cast<std::uint32_t>(k));
      w.u32(static_cast<std::uint32_t>(conv->in_channels));
      w.u32(static_cast<std::uint32_t>(conv->out_channels));
      for (double v : conv->weights) w.f64(v);
      for (double v : conv->bias) w.f64(v);
    } else {
      const auto& pool = std::get<AvgPoolLayer>(layer);
      w.u8(1);
      w.u8(static_cast<std::uint8_t>(pool.rank));
      w.u8(0);
      w.u8(0);
      for (auto k : pool.pool) w.u32(static_cast<std::uint32_t>(k));
      w.u32(0);
      w.u32(0);
    }
  }
  return w.take();
}

inline Network decode_network(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.text(4) != "VNN1") throw ParseError(ErrorCode::malformed, "missing VNN1 magic", 0);
  if (const auto v = r.u32(); v != kNetworkFormatVersion)
    throw ParseError(ErrorCode::malformed, "unsupported VNN1 version " + std::to_string(v), 4);
  auto bounded = [&](std::uint32_t v, const char* what) {
    if (v > kMaxSerializedExtent)
      throw ParseError(ErrorCode::size_limit, std::string(what) + " too large", r.pos() - 4);
    return static_cast<std::size_t>(v);
  };
  Network net;
  const auto rank = r.u32();
  if (rank != 3 && rank != 4) throw ParseError(ErrorCode::malformed, "input rank must be 3 or 4", r.pos() - 4);
  for (std::uint32_t i = 0; i < rank; ++i) net.input_shape.push_back(bounded(r.u32(), "input extent"));
  const auto n_layers = bounded(r.u32(), "layer count");
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::size_t start = r.pos();
    const auto kind = r.u8();
    const int lrank = r.u8();
    const auto act = r.u8();
    r.u8();
    std::array<std::size_t, 3> k{};
    for (auto& e : k) e = bounded(r.u32(), "kernel extent");
    const auto in = bounded(r.u32(), "channel count");
    const auto out = bounded(r.u32(), "channel count");
    if (lrank != 2 && lrank != 3) throw ParseError(ErrorCode::malformed, "layer rank must be 2 or 3", start + 1);
    if (kind == 1) {
      net.layers.emplace_back(AvgPoolLayer{lrank, k});
      continue;
    }
    if (kind != 0) throw ParseError(ErrorCode::malformed, "unknown layer kind", start);
    if (act > 2) throw ParseError(ErrorCode::malformed, "unknown activation", start + 2);
    for (auto e : k)
      if (e % 2 == 0) throw ParseError(ErrorCode::malformed, "kernel extents must be odd", start + 4);
    ConvLayer c;
    c.rank = lrank;
    c.kernel = k;
    c.in_channels = in;
    c.out_channels = out;
    c.activation = static_cast<Activation>(act);
    const std::size_t nw = c.weight_count();
    if (r.remaining() / 8 < nw + out)
      throw ParseError(ErrorCode::truncated, "layer parameters shorter than declared", r.pos());
    c.weights.resize(nw);
    for (auto& v : c.weights) v = r.f64();
    c.bias.resize(out);
    for (auto& v : c.bias) v = r.f64();
    net.layers.emplace_back(std::move(c));
  }
  if (!r.at_end()) throw ParseError(ErrorCode::malformed, "trailing bytes after network", r.pos());
  try {
    output_shapes(net);
  } catch (const Error& e) {
    throw ParseError(ErrorCode::malformed, std::string("inconsistent network: ") + e.what(), 0);
  }
  return net;
}

inline void save_network(const Network& net, const std::string& path) { write_file_bytes(path, encode_network(net)); }

inline Network load_network(const std::string& path) { return decode_network(read_file_bytes(path)); }

}  // namespace volumetrica::nn
