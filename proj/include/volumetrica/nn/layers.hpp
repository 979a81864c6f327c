// SPDX-License-Identifier: Apache-2.0
#pragma once

// Convolution and pooling kernels. Rank-2 layers run through the same code as
// rank-3 ones with a depth of 1.
//
// Convolution is cross-correlation with "same" zero padding; kernels are stored
// as (kd, kh, kw, in, out) so the innermost loop runs over output channels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "volumetrica/core/random.hpp"
#include "volumetrica/nn/tensor.hpp"

namespace volumetrica::nn {

enum class Activation : std::uint8_t { none = 0, relu = 1, sigmoid = 2 };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::none: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline double sigmoid(double z) {
  // Clamped so outputs stay strictly inside (0, 1) even when exp saturates.
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, lo, hi);
}

struct ConvLayer {
  int rank = 3;
  std::array<std::size_t, 3> kernel{1, 1, 1};  // (kd, kh, kw); kd == 1 for rank 2
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Activation activation = Activation::none;
  std::vector<double> weights;  // kd*kh*kw*in*out
  std::vector<double> bias;     // out

  std::size_t taps() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t weight_count() const { return taps() * in_channels * out_channels; }
  std::size_t param_count() const { return out_channels * (in_channels * taps() + 1); }
};

struct AvgPoolLayer {
  int rank = 3;
  std::array<std::size_t, 3> pool{2, 2, 2};  // (pd, ph, pw); pd == 1 for rank 2
};

struct Extent {
  std::size_t d = 1, h = 1, w = 1;
  std::size_t voxels() const { return d * h * w; }
};

/// Spatial extent and channel count of a channels-last image tensor.
inline std::pair<Extent, std::size_t> image_extent(const Shape& s, int rank) {
  require(s.size() == static_cast<std::size_t>(rank) + 1, ErrorCode::shape_mismatch,
          "expected a rank-" + std::to_string(rank) + " image tensor, got " + shape_string(s));
  if (rank == 2) return {{1, s[0], s[1]}, s[2]};
  return {{s[0], s[1], s[2]}, s[3]};
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
inline ConvLayer make_conv(int rank, std::array<std::size_t, 3> kernel, std::size_t in,
                           std::size_t out, Activation act, CounterRng& rng) {
  require(rank == 2 || rank == 3, ErrorCode::invalid_argument, "convolution rank must be 2 or 3");
  if (rank == 2) kernel[0] = 1;
  for (auto k : kernel)
    require(k % 2 == 1, ErrorCode::invalid_argument, "kernel extents must be odd");
  require(in > 0 && out > 0, ErrorCode::invalid_argument, "channel counts must be positive");
  ConvLayer l;
  l.rank = rank;
  l.kernel = kernel;
  l.in_channels = in;
  l.out_channels = out;
  l.activation = act;
  const double taps = static_cast<double>(l.taps());
  const double limit = std::sqrt(6.0 / (taps * static_cast<double>(in) + taps * static_cast<double>(out)));
  l.weights.resize(l.weight_count());
  for (auto& w : l.weights) w = rng.uniform(-limit, limit);
  l.bias.assign(out, 0.0);
  return l;
}

inline void apply_activation(Activation act, std::span<const double> z, std::span<double> a) {
  switch (act) {
    case Activation::none:
      std::copy(z.begin(), z.end(), a.begin());
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = sigmoid(z[i]);
      break;
  }
}

/// Multiplies `grad` in place by the activation derivative evaluated at (z, a).
inline void activation_backward(Activation act, std::span<const double> z, std::span<const double> a,
                                std::span<double> grad) {
  switch (act) {
    case Activation::none:
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < z.size(); ++i)
        if (!(z[i] > 0.0)) grad[i] = 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < z.size(); ++i) grad[i] *= a[i] * (1.0 - a[i]);
      break;
  }
}

namespace detail {

/// Inputs with at most this fraction of nonzero values take the scatter path.
inline constexpr double kSparseFraction = 0.25;

inline bool is_sparse(const Tensor& t) {
  const auto nz = static_cast<std::size_t>(std::count_if(t.data().begin(), t.data().end(), [](double v) { return v != 0.0; }));
  return static_cast<double>(nz) <= kSparseFraction * static_cast<double>(t.size());
}

/// Calls f(value, in_channel, tap, output_voxel) for every nonzero input value
/// and every kernel tap whose output voxel lies inside the ("same") extent.
template <class F>
void for_each_tap(const ConvLayer& layer, const Extent& e, std::size_t cin, const double* x, F&& f) {
  const auto [kd, kh, kw] = layer.kernel;
  const long pd = static_cast<long>(kd / 2), ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const long ed = static_cast<long>(e.d), eh = static_cast<long>(e.h), ew = static_cast<long>(e.w);
  for (long id = 0; id < ed; ++id)
    for (long ih = 0; ih < eh; ++ih)
      for (long iw = 0; iw < ew; ++iw) {
        const double* xin = x + static_cast<std::size_t>((id * eh + ih) * ew + iw) * cin;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double v = xin[ci];
          if (v == 0.0) continue;
          for (std::size_t a = 0; a < kd; ++a) {
            const long od = id + pd - static_cast<long>(a);
            if (od < 0 || od >= ed) continue;
            for (std::size_t b = 0; b < kh; ++b) {
              const long oh = ih + ph - static_cast<long>(b);
              if (oh < 0 || oh >= eh) continue;
              for (std::size_t c = 0; c < kw; ++c) {
                const long ow = iw + pw - static_cast<long>(c);
                if (ow < 0 || ow >= ew) continue;
                f(v, ci, (a * kh + b) * kw + c, static_cast<std::size_t>((od * eh + oh) * ew + ow));
              }
            }
          }
        }
      }
}

}  // namespace detail

/// Pre-activation output of a convolution layer.
inline Tensor conv_preactivation(const ConvLayer& layer, const Tensor& input) {
  const auto [e, cin] = image_extent(input.shape(), layer.rank);
  require(cin == layer.in_channels, ErrorCode::shape_mismatch,
          "convolution expects " + std::to_string(layer.in_channels) + " input channels, got " +
              std::to_string(cin));
  const std::size_t co = layer.out_channels;
  Shape out_shape = input.shape();
  out_shape.back() = co;
  Tensor out(out_shape);

  const auto [kd, kh, kw] = layer.kernel;
  const long pd = static_cast<long>(kd / 2), ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const double* x = input.data().data();
  const double* wt = layer.weights.data();
  double* z = out.data().data();

  if (detail::is_sparse(input)) {
    for (std::size_t v = 0; v < e.voxels(); ++v) std::copy(layer.bias.begin(), layer.bias.end(), z + v * co);
    detail::for_each_tap(layer, e, cin, x, [&](double v, std::size_t ci, std::size_t tap, std::size_t out_voxel) {
      const double* wr = wt + (tap * cin + ci) * co;
      double* acc = z + out_voxel * co;
      for (std::size_t o = 0; o < co; ++o) acc[o] += v * wr[o];
    });
    return out;
  }

  for (std::size_t od = 0; od < e.d; ++od)
    for (std::size_t oh = 0; oh < e.h; ++oh)
      for (std::size_t ow = 0; ow < e.w; ++ow) {
        double* acc = z + ((od * e.h + oh) * e.w + ow) * co;
        std::copy(layer.bias.begin(), layer.bias.end(), acc);
        for (std::size_t a = 0; a < kd; ++a) {
          const long id = static_cast<long>(od) + static_cast<long>(a) - pd;
          if (id < 0 || id >= static_cast<long>(e.d)) continue;
          for (std::size_t b = 0; b < kh; ++b) {
            const long ih = static_cast<long>(oh) + static_cast<long>(b) - ph;
            if (ih < 0 || ih >= static_cast<long>(e.h)) continue;
            for (std::size_t c = 0; c < kw; ++c) {
              const long iw = static_cast<long>(ow) + static_cast<long>(c) - pw;
              if (iw < 0 || iw >= static_cast<long>(e.w)) continue;
              const double* xin =
                  x + ((static_cast<std::size_t>(id) * e.h + static_cast<std::size_t>(ih)) * e.w +
                       static_cast<std::size_t>(iw)) * cin;
              const double* wk = wt + ((a * kh + b) * kw + c) * cin * co;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double v = xin[ci];
                if (v == 0.0) continue;
                const double* wr = wk + ci * co;
                for (std::size_t o = 0; o < co; ++o) acc[o] += v * wr[o];
              }
            }
          }
        }
      }
  return out;
}

/// Accumulates weight/bias gradients for one convolution given dL/dz; writes
/// dL/dinput into `grad_input` when it is non-null.
inline void conv_backward(const ConvLayer& layer, const Tensor& input, const Tensor& grad_z,
                          std::span<double> grad_w, std::span<double> grad_b, Tensor* grad_input) {
  const auto [e, cin] = image_extent(input.shape(), layer.rank);
  const std::size_t co = layer.out_channels;
  const auto [kd, kh, kw] = layer.kernel;
  const long pd = static_cast<long>(kd / 2), ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const double* x = input.data().data();
  const double* wt = layer.weights.data();
  const double* g = grad_z.data().data();
  double* dx = nullptr;
  if (grad_input) {
    *grad_input = Tensor(input.shape());
    dx = grad_input->data().data();
  } else if (detail::is_sparse(input)) {
    for (std::size_t v = 0; v < e.voxels(); ++v)
      for (std::size_t o = 0; o < co; ++o) grad_b[o] += g[v * co + o];
    detail::for_each_tap(layer, e, cin, x, [&](double v, std::size_t ci, std::size_t tap, std::size_t out_voxel) {
      double* gw = grad_w.data() + (tap * cin + ci) * co;
      const double* gp = g + out_voxel * co;
      for (std::size_t o = 0; o < co; ++o) gw[o] += v * gp[o];
    });
    return;
  }

  for (std::size_t od = 0; od < e.d; ++od)
    for (std::size_t oh = 0; oh < e.h; ++oh)
      for (std::size_t ow = 0; ow < e.w; ++ow) {
        const double* gp = g + ((od * e.h + oh) * e.w + ow) * co;
        if (std::all_of(gp, gp + co, [](double v) { return v == 0.0; })) continue;
        for (std::size_t o = 0; o < co; ++o) grad_b[o] += gp[o];
        for (std::size_t a = 0; a < kd; ++a) {
          const long id = static_cast<long>(od) + static_cast<long>(a) - pd;
          if (id < 0 || id >= static_cast<long>(e.d)) continue;
          for (std::size_t b = 0; b < kh; ++b) {
            const long ih = static_cast<long>(oh) + static_cast<long>(b) - ph;
            if (ih < 0 || ih >= static_cast<long>(e.h)) continue;
            for (std::size_t c = 0; c < kw; ++c) {
              const long iw = static_cast<long>(ow) + static_cast<long>(c) - pw;
              if (iw < 0 || iw >= static_cast<long>(e.w)) continue;
              const std::size_t in_off =
                  ((static_cast<std::size_t>(id) * e.h + static_cast<std::size_t>(ih)) * e.w +
                   static_cast<std::size_t>(iw)) * cin;
              const std::size_t k_off = ((a * kh + b) * kw + c) * cin * co;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double v = x[in_off + ci];
                if (v != 0.0) {
                  double* gw = grad_w.data() + k_off + ci * co;
                  for (std::size_t o = 0; o < co; ++o) gw[o] += v * gp[o];
                }
                if (dx) {
                  const double* wr = wt + k_off + ci * co;
                  double s = 0.0;
                  for (std::size_t o = 0; o < co; ++o) s += wr[o] * gp[o];
                  dx[in_off + ci] += s;
                }
              }
            }
          }
        }
      }
}

inline Shape pooled_shape(const AvgPoolLayer& layer, const Shape& in) {
  const auto [e, c] = image_extent(in, layer.rank);
  const auto [pd, ph, pw] = layer.pool;
  require(pd > 0 && ph > 0 && pw > 0 && e.d % pd == 0 && e.h % ph == 0 && e.w % pw == 0,
          ErrorCode::shape_mismatch,
          "pooling extents do not divide input " + shape_string(in));
  if (layer.rank == 2) return {e.h / ph, e.w / pw, c};
  return {e.d / pd, e.h / ph, e.w / pw, c};
}

inline Tensor avg_pool(const AvgPoolLayer& layer, const Tensor& input) {
  Tensor out(pooled_shape(layer, input.shape()));
  const auto [e, c] = image_extent(input.shape(), layer.rank);
  const auto [pd, ph, pw] = layer.pool;
  const Extent oe{e.d / pd, e.h / ph, e.w / pw};
  const double inv = 1.0 / static_cast<double>(pd * ph * pw);
  const double* x = input.data().data();
  double* y = out.data().data();
  for (std::size_t d = 0; d < e.d; ++d)
    for (std::size_t h = 0; h < e.h; ++h)
      for (std::size_t w = 0; w < e.w; ++w) {
        const double* xi = x + ((d * e.h + h) * e.w + w) * c;
        double* yo = y + (((d / pd) * oe.h + h / ph) * oe.w + w / pw) * c;
        for (std::size_t k = 0; k < c; ++k) yo[k] += xi[k];
      }
  for (auto& v : out.data()) v *= inv;
  return out;
}

inline Tensor avg_pool(const Tensor& input, std::array<std::size_t, 3> pool, int rank) {
  return avg_pool(AvgPoolLayer{rank, pool}, input);
}

inline Tensor avg_pool_backward(const AvgPoolLayer& layer, const Shape& in_shape, const Tensor& grad_out) {
  Tensor grad_in(in_shape);
  const auto [e, c] = image_extent(in_shape, layer.rank);
  const auto [pd, ph, pw] = layer.pool;
  const Extent oe{e.d / pd, e.h / ph, e.w / pw};
  const double inv = 1.0 / static_cast<double>(pd * ph * pw);
  const double* go = grad_out.data().data();
  double* gi = grad_in.data().data();
  for (std::size_t d = 0; d < e.d; ++d)
    for (std::size_t h = 0; h < e.h; ++h)
      for (std::size_t w = 0; w < e.w; ++w) {
        double* gx = gi + ((d * e.h + h) * e.w + w) * c;
        const double* gy = go + (((d / pd) * oe.h + h / ph) * oe.w + w / pw) * c;
        for (std::size_t k = 0; k < c; ++k) gx[k] = gy[k] * inv;
      }
  return grad_in;
}

// ---------------------------------------------------------------- fused conv + pool

namespace detail {

/// Pre-activation of one output voxel, gathered with zero skipping.
inline void preactivation_at(const ConvLayer& layer, const Extent& e, std::size_t cin, const double* x, long od,
                             long oh, long ow, double* acc) {
  const auto [kd, kh, kw] = layer.kernel;
  const long pd = static_cast<long>(kd / 2), ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const long ed = static_cast<long>(e.d), eh = static_cast<long>(e.h), ew = static_cast<long>(e.w);
  const std::size_t co = layer.out_channels;
  std::copy(layer.bias.begin(), layer.bias.end(), acc);
  for (std::size_t a = 0; a < kd; ++a) {
    const long id = od + static_cast<long>(a) - pd;
    if (id < 0 || id >= ed) continue;
    for (std::size_t b = 0; b < kh; ++b) {
      const long ih = oh + static_cast<long>(b) - ph;
      if (ih < 0 || ih >= eh) continue;
      for (std::size_t c = 0; c < kw; ++c) {
        const long iw = ow + static_cast<long>(c) - pw;
        if (iw < 0 || iw >= ew) continue;
        const double* xin = x + static_cast<std::size_t>((id * eh + ih) * ew + iw) * cin;
        const double* wk = layer.weights.data() + ((a * kh + b) * kw + c) * cin * co;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double v = xin[ci];
          if (v == 0.0) continue;
          const double* wr = wk + ci * co;
          for (std::size_t o = 0; o < co; ++o) acc[o] += v * wr[o];
        }
      }
    }
  }
}

/// Marks output voxels whose receptive field holds a nonzero input; all others
/// have pre-activation equal to the bias. Dense inputs mark everything.
inline std::vector<std::uint8_t> touched_voxels(const ConvLayer& layer, const Extent& e, std::size_t cin,
                                                const Tensor& input) {
  if (!is_sparse(input)) return std::vector<std::uint8_t>(e.voxels(), 1);
  std::vector<std::uint8_t> touched(e.voxels(), 0);
  for_each_tap(layer, e, cin, input.data().data(),
               [&](double, std::size_t, std::size_t, std::size_t out_voxel) { touched[out_voxel] = 1; });
  return touched;
}

}  // namespace detail

/// avg_pool(activation(conv(input))) without materialising the full-resolution
/// activations.
inline Tensor conv_pool_forward(const ConvLayer& layer, const AvgPoolLayer& pool, const Tensor& input) {
  const auto [e, cin] = image_extent(input.shape(), layer.rank);
  require(cin == layer.in_channels, ErrorCode::shape_mismatch,
          "convolution expects " + std::to_string(layer.in_channels) + " input channels, got " + std::to_string(cin));
  require(pool.rank == layer.rank, ErrorCode::shape_mismatch, "pooling rank differs from convolution rank");
  const std::size_t co = layer.out_channels;
  Shape conv_shape = input.shape();
  conv_shape.back() = co;
  Tensor out(pooled_shape(pool, conv_shape));
  const auto [pd, ph, pw] = pool.pool;
  const Extent oe{e.d / pd, e.h / ph, e.w / pw};
  const double inv = 1.0 / static_cast<double>(pd * ph * pw);
  std::vector<double> z(co), a(co), a_bias(co);
  apply_activation(layer.activation, layer.bias, a_bias);
  const auto touched = detail::touched_voxels(layer, e, cin, input);
  std::vector<std::size_t> untouched(oe.voxels(), 0);
  double* y = out.data().data();
  std::size_t v = 0;
  for (std::size_t d = 0; d < e.d; ++d)
    for (std::size_t h = 0; h < e.h; ++h)
      for (std::size_t w = 0; w < e.w; ++w, ++v) {
        const std::size_t cell = ((d / pd) * oe.h + h / ph) * oe.w + w / pw;
        if (!touched[v]) {
          ++untouched[cell];
          continue;
        }
        detail::preactivation_at(layer, e, cin, input.data().data(), static_cast<long>(d), static_cast<long>(h),
                                 static_cast<long>(w), z.data());
        apply_activation(layer.activation, z, a);
        for (std::size_t o = 0; o < co; ++o) y[cell * co + o] += a[o];
      }
  for (std::size_t cell = 0; cell < untouched.size(); ++cell)
    if (untouched[cell])
      for (std::size_t o = 0; o < co; ++o) y[cell * co + o] += static_cast<double>(untouched[cell]) * a_bias[o];
  for (auto& val : out.data()) val *= inv;
  return out;
}

/// Backward pass of conv_pool_forward given dL/d(pooled output); recomputes
/// the pre-activations instead of storing them.
inline void conv_pool_backward(const ConvLayer& layer, const AvgPoolLayer& pool, const Tensor& input,
                               const Tensor& grad_pooled, std::span<double> grad_w, std::span<double> grad_b,
                               Tensor* grad_input) {
  const auto [e, cin] = image_extent(input.shape(), layer.rank);
  const std::size_t co = layer.out_channels;
  const auto [kd, kh, kw] = layer.kernel;
  const long pkd = static_cast<long>(kd / 2), pkh = static_cast<long>(kh / 2), pkw = static_cast<long>(kw / 2);
  const long ed = static_cast<long>(e.d), eh = static_cast<long>(e.h), ew = static_cast<long>(e.w);
  const auto [pd, ph, pw] = pool.pool;
  const Extent oe{e.d / pd, e.h / ph, e.w / pw};
  const double inv = 1.0 / static_cast<double>(pd * ph * pw);
  const double* x = input.data().data();
  const double* gp = grad_pooled.data().data();
  double* dx = nullptr;
  if (grad_input) {
    *grad_input = Tensor(input.shape());
    dx = grad_input->data().data();
  }
  std::vector<double> z(co), a(co), g(co), a_bias(co);
  apply_activation(layer.activation, layer.bias, a_bias);
  // Untouched voxels see only zero inputs, so they contribute to the bias
  // gradient alone (and to nothing when a gradient of the input is needed).
  const auto touched = grad_input ? std::vector<std::uint8_t>(e.voxels(), 1) : detail::touched_voxels(layer, e, cin, input);
  std::vector<std::size_t> untouched(oe.voxels(), 0);
  std::size_t v = 0;
  for (long od = 0; od < ed; ++od)
    for (long oh = 0; oh < eh; ++oh)
      for (long ow = 0; ow < ew; ++ow, ++v) {
        const std::size_t cell =
            (static_cast<std::size_t>(od) / pd * oe.h + static_cast<std::size_t>(oh) / ph) * oe.w +
            static_cast<std::size_t>(ow) / pw;
        if (!touched[v]) {
          ++untouched[cell];
          continue;
        }
        const double* gy = gp + cell * co;
        for (std::size_t o = 0; o < co; ++o) g[o] = gy[o] * inv;
        detail::preactivation_at(layer, e, cin, x, od, oh, ow, z.data());
        apply_activation(layer.activation, z, a);
        activation_backward(layer.activation, z, a, g);
        if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
        for (std::size_t o = 0; o < co; ++o) grad_b[o] += g[o];
        for (std::size_t ka = 0; ka < kd; ++ka) {
          const long id = od + static_cast<long>(ka) - pkd;
          if (id < 0 || id >= ed) continue;
          for (std::size_t kb = 0; kb < kh; ++kb) {
            const long ih = oh + static_cast<long>(kb) - pkh;
            if (ih < 0 || ih >= eh) continue;
            for (std::size_t kc = 0; kc < kw; ++kc) {
              const long iw = ow + static_cast<long>(kc) - pkw;
              if (iw < 0 || iw >= ew) continue;
              const std::size_t in_off = static_cast<std::size_t>((id * eh + ih) * ew + iw) * cin;
              const std::size_t k_off = ((ka * kh + kb) * kw + kc) * cin * co;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double v = x[in_off + ci];
                if (v != 0.0) {
                  double* gw = grad_w.data() + k_off + ci * co;
                  for (std::size_t o = 0; o < co; ++o) gw[o] += v * g[o];
                }
                if (dx) {
                  const double* wr = layer.weights.data() + k_off + ci * co;
                  double sum = 0.0;
                  for (std::size_t o = 0; o < co; ++o) sum += wr[o] * g[o];
                  dx[in_off + ci] += sum;
                }
              }
            }
          }
        }
      }
  for (std::size_t cell = 0; cell < untouched.size(); ++cell) {
    if (!untouched[cell]) continue;
    for (std::size_t o = 0; o < co; ++o) g[o] = gp[cell * co + o] * inv * static_cast<double>(untouched[cell]);
    activation_backward(layer.activation, layer.bias, a_bias, g);
    for (std::size_t o = 0; o < co; ++o) grad_b[o] += g[o];
  }
}

}  // namespace volumetrica::nn
