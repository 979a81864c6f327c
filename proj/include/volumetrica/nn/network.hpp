// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "volumetrica/nn/layers.hpp"

namespace volumetrica::nn {

using Layer = std::variant<ConvLayer, AvgPoolLayer>;

struct Network {
  Shape input_shape;  // channels-last, no batch axis
  std::vector<Layer> layers;
};

enum class LossKind : std::uint8_t { mse = 0, bce = 1 };

inline const char* to_string(LossKind k) { return k == LossKind::mse ? "mse" : "bce"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "bce") return LossKind::bce;
  fail(ErrorCode::invalid_argument, "unknown loss '" + s + "' (expected mse or bce)");
}

inline int layer_rank(const Layer& l) {
  return std::visit([](const auto& x) { return x.rank; }, l);
}

inline Shape layer_output_shape(const Layer& layer, const Shape& in) {
  if (const auto* pool = std::get_if<AvgPoolLayer>(&layer)) return pooled_shape(*pool, in);
  const auto& conv = std::get<ConvLayer>(layer);
  const auto [e, c] = image_extent(in, conv.rank);
  require(c == conv.in_channels, ErrorCode::shape_mismatch,
          "convolution expects " + std::to_string(conv.in_channels) + " input channels, got " +
              std::to_string(c));
  Shape out = in;
  out.back() = conv.out_channels;
  return out;
}

/// Output shape after every layer; throws shape_mismatch on incompatible layers.
inline std::vector<Shape> output_shapes(const Network& net) {
  std::vector<Shape> shapes;
  Shape cur = net.input_shape;
  for (const auto& layer : net.layers) {
    const auto* conv = std::get_if<ConvLayer>(&layer);
    if (conv) {
      require(conv->weights.size() == conv->weight_count() && conv->bias.size() == conv->out_channels,
              ErrorCode::shape_mismatch, "convolution parameter arrays do not match its shape");
    }
    cur = layer_output_shape(layer, cur);
    shapes.push_back(cur);
  }
  return shapes;
}

inline Shape output_shape(const Network& net) {
  auto s = output_shapes(net);
  return s.empty() ? net.input_shape : s.back();
}

inline std::size_t param_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers)
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) n += conv->param_count();
  return n;
}

inline Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  Tensor z = conv_preactivation(layer, input);
  Tensor a(z.shape());
  apply_activation(layer.activation, z.data(), a.data());
  return a;
}

inline Tensor layer_forward(const Layer& layer, const Tensor& input) {
  if (const auto* pool = std::get_if<AvgPoolLayer>(&layer)) return avg_pool(*pool, input);
  return conv_forward(std::get<ConvLayer>(layer), input);
}

/// True when layer i is a convolution immediately followed by average pooling;
/// such pairs run as one fused block.
inline bool fuses_with_pool(const Network& net, std::size_t i) {
  return i + 1 < net.layers.size() && std::holds_alternative<ConvLayer>(net.layers[i]) &&
         std::holds_alternative<AvgPoolLayer>(net.layers[i + 1]);
}

inline Tensor forward(const Network& net, const Tensor& input) {
  require(input.shape() == net.input_shape, ErrorCode::shape_mismatch,
          "network expects input " + shape_string(net.input_shape) + ", got " + shape_string(input.shape()));
  Tensor cur = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (fuses_with_pool(net, i)) {
      cur = conv_pool_forward(std::get<ConvLayer>(net.layers[i]), std::get<AvgPoolLayer>(net.layers[i + 1]), cur);
      ++i;
    } else {
      cur = layer_forward(net.layers[i], cur);
    }
  }
  return cur;
}

// ---------------------------------------------------------------- losses

inline void require_same_shape(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::shape_mismatch,
          "shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

inline constexpr double kProbabilityClip = 1e-12;

/// Mean loss over all elements. For bce, `pred` holds probabilities and is
/// clipped to [1e-12, 1 - 1e-12].
inline double loss(const Tensor& pred, const Tensor& target, LossKind kind) {
  require_same_shape(pred, target);
  require(pred.size() > 0, ErrorCode::invalid_argument, "loss of an empty tensor");
  double s = 0.0;
  if (kind == LossKind::mse) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred[i] - target[i];
      s += d * d;
    }
  } else {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double p = std::clamp(pred[i], kProbabilityClip, 1.0 - kProbabilityClip);
      const double t = target[i];
      s -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
    }
  }
  return s / static_cast<double>(pred.size());
}

/// Binary cross-entropy of sigmoid(logits) against targets, in the stable
/// form max(z, 0) - z t + log(1 + exp(-|z|)).
inline double bce_with_logits(const Tensor& logits, const Tensor& target) {
  require_same_shape(logits, target);
  require(logits.size() > 0, ErrorCode::invalid_argument, "loss of an empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    s += std::max(z, 0.0) - z * target[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return s / static_cast<double>(logits.size());
}

// ---------------------------------------------------------------- backprop

/// Gradient arrays parallel to the network's layers (empty for pooling).
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  static Gradients zeros_like(const Network& net) {
    Gradients g;
    for (const auto& layer : net.layers) {
      if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
        g.weights.emplace_back(conv->weights.size(), 0.0);
        g.bias.emplace_back(conv->bias.size(), 0.0);
      } else {
        g.weights.emplace_back();
        g.bias.emplace_back();
      }
    }
    return g;
  }
};

struct BackwardResult {
  double loss = 0.0;
  Tensor output;
  Gradients gradients;
};

/// Loss and exact gradients for one (input, target) pair. A bce loss on a
/// network ending in a sigmoid convolution is evaluated from the logits.
inline BackwardResult backward(const Network& net, const Tensor& input, const Tensor& target, LossKind kind) {
  require(input.shape() == net.input_shape, ErrorCode::shape_mismatch,
          "network expects input " + shape_string(net.input_shape) + ", got " + shape_string(input.shape()));
  const std::size_t n_layers = net.layers.size();
  // acts[i] is the input of layer i; a fused pair leaves acts[i + 1] empty.
  std::vector<Tensor> acts(n_layers + 1);
  std::vector<Tensor> pre(n_layers);
  acts[0] = input;
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (fuses_with_pool(net, i)) {
      acts[i + 2] =
          conv_pool_forward(std::get<ConvLayer>(net.layers[i]), std::get<AvgPoolLayer>(net.layers[i + 1]), acts[i]);
      ++i;
    } else if (const auto* conv = std::get_if<ConvLayer>(&net.layers[i])) {
      pre[i] = conv_preactivation(*conv, acts[i]);
      acts[i + 1] = Tensor(pre[i].shape());
      apply_activation(conv->activation, pre[i].data(), acts[i + 1].data());
    } else {
      acts[i + 1] = avg_pool(std::get<AvgPoolLayer>(net.layers[i]), acts[i]);
    }
  }

  BackwardResult r;
  r.output = acts.back();
  r.gradients = Gradients::zeros_like(net);
  require_same_shape(r.output, target);
  const double inv_n = 1.0 / static_cast<double>(target.size());

  const auto* last_conv = n_layers ? std::get_if<ConvLayer>(&net.layers.back()) : nullptr;
  const bool fused = kind == LossKind::bce && last_conv && last_conv->activation == Activation::sigmoid;

  Tensor grad(r.output.shape());  // dL/da of the current layer, or dL/dz when `fused`
  if (fused) {
    const Tensor& z = pre.back();
    r.loss = bce_with_logits(z, target);
    for (std::size_t i = 0; i < z.size(); ++i) grad[i] = (r.output[i] - target[i]) * inv_n;
  } else {
    r.loss = loss(r.output, target, kind);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (kind == LossKind::mse) {
        grad[i] = 2.0 * (r.output[i] - target[i]) * inv_n;
      } else {
        const double p = r.output[i];
        const double t = target[i];
        grad[i] = (p <= kProbabilityClip || p >= 1.0 - kProbabilityClip)
                      ? 0.0
                      : (p - t) / (p * (1.0 - p)) * inv_n;
      }
    }
  }

  for (std::size_t li = n_layers; li-- > 0;) {
    if (li > 0 && fuses_with_pool(net, li - 1)) {
      --li;
      Tensor grad_in;
      conv_pool_backward(std::get<ConvLayer>(net.layers[li]), std::get<AvgPoolLayer>(net.layers[li + 1]), acts[li],
                         grad, r.gradients.weights[li], r.gradients.bias[li], li > 0 ? &grad_in : nullptr);
      grad = std::move(grad_in);
      continue;
    }
    const Tensor& in = acts[li];
    if (const auto* conv = std::get_if<ConvLayer>(&net.layers[li])) {
      if (!(fused && li + 1 == n_layers))
        activation_backward(conv->activation, pre[li].data(), acts[li + 1].data(), grad.data());
      Tensor grad_in;
      conv_backward(*conv, in, grad, r.gradients.weights[li], r.gradients.bias[li], li > 0 ? &grad_in : nullptr);
      grad = std::move(grad_in);
    } else {
      grad = avg_pool_backward(std::get<AvgPoolLayer>(net.layers[li]), in.shape(), grad);
    }
  }
  return r;
}

// ---------------------------------------------------------------- builders

struct LayerSummary {
  std::string name;
  std::string type;
  Shape output_shape;
  std::size_t params = 0;
};

/// Keras-style layer table: input row first, then one row per layer, the last
/// convolution named "segmentation".
inline std::vector<LayerSummary> summary(const Network& net) {
  const auto shapes = output_shapes(net);
  const int rank = static_cast<int>(net.input_shape.size()) - 1;
  const std::string dim = std::to_string(rank) + "D";
  std::vector<LayerSummary> rows;
  rows.push_back({"input_layer", "InputLayer", net.input_shape, 0});
  std::size_t last_conv = net.layers.size();
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (std::holds_alternative<ConvLayer>(net.layers[i])) last_conv = i;
  std::size_t n_conv = 0, n_pool = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (const auto* conv = std::get_if<ConvLayer>(&net.layers[i])) {
      std::string name = i == last_conv ? "segmentation"
                                        : "conv" + std::to_string(rank) + "d" +
                                              (n_conv ? "_" + std::to_string(n_conv) : "");
      if (i != last_conv) ++n_conv;
      rows.push_back({name, "Conv" + dim, shapes[i], conv->param_count()});
    } else {
      rows.push_back({"average_pooling" + std::to_string(rank) + "d" + (n_pool ? "_" + std::to_string(n_pool) : ""),
                      "AveragePooling" + dim, shapes[i], 0});
      ++n_pool;
    }
  }
  return rows;
}

/// Conv 32@3x3 relu -> AvgPool 2x2 -> Conv 1@1x1 sigmoid on (rows, cols, 1).
inline Network build_segmentation_net_2d(std::uint64_t seed = 0, std::size_t rows = 1024, std::size_t cols = 1024) {
  CounterRng rng(seed, 0x2d);
  Network net;
  net.input_shape = {rows, cols, 1};
  net.layers.emplace_back(make_conv(2, {1, 3, 3}, 1, 32, Activation::relu, rng));
  net.layers.emplace_back(AvgPoolLayer{2, {1, 2, 2}});
  net.layers.emplace_back(make_conv(2, {1, 1, 1}, 32, 1, Activation::sigmoid, rng));
  output_shapes(net);
  return net;
}

/// Conv 32@3x3x3 relu -> AvgPool 2x2x2 -> Conv 1@1x1x1 sigmoid on (d, h, w, 1).
inline Network build_segmentation_net_3d(std::uint64_t seed = 0, std::size_t d = 32, std::size_t h = 32, std::size_t w = 32) {
  CounterRng rng(seed, 0x3d);
  Network net;
  net.input_shape = {d, h, w, 1};
  net.layers.emplace_back(make_conv(3, {3, 3, 3}, 1, 32, Activation::relu, rng));
  net.layers.emplace_back(AvgPoolLayer{3, {2, 2, 2}});
  net.layers.emplace_back(make_conv(3, {1, 1, 1}, 32, 1, Activation::sigmoid, rng));
  output_shapes(net);
  return net;
}

}  // namespace volumetrica::nn
