// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "volumetrica/nn/network.hpp"

namespace volumetrica::nn {

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  fail(ErrorCode::invalid_argument, "unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  Gradients m;  // first moments
  Gradients v;  // second moments

  static AdamState for_network(const Network& net, double lr = 1e-3) {
    AdamState s;
    s.learning_rate = lr;
    s.m = Gradients::zeros_like(net);
    s.v = Gradients::zeros_like(net);
    return s;
  }
};

namespace detail {

inline void check_layout(const Network& net, const Gradients& g) {
  require(g.weights.size() == net.layers.size() && g.bias.size() == net.layers.size(),
          ErrorCode::shape_mismatch, "gradient layout does not match the network");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto* conv = std::get_if<ConvLayer>(&net.layers[i]);
    const std::size_t nw = conv ? conv->weights.size() : 0, nb = conv ? conv->bias.size() : 0;
    require(g.weights[i].size() == nw && g.bias[i].size() == nb, ErrorCode::shape_mismatch,
            "gradient layout does not match layer " + std::to_string(i));
  }
}

template <class F>
void for_each_param(Network& net, const Gradients& g, F&& f) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto* conv = std::get_if<ConvLayer>(&net.layers[i]);
    if (!conv) continue;
    for (std::size_t k = 0; k < conv->weights.size(); ++k) f(conv->weights[k], g.weights[i][k], i, k, false);
    for (std::size_t k = 0; k < conv->bias.size(); ++k) f(conv->bias[k], g.bias[i][k], i, k, true);
  }
}

}  // namespace detail

/// p <- p - lr * g
inline void sgd_step(Network& net, const Gradients& g, double lr) {
  detail::check_layout(net, g);
  detail::for_each_param(net, g, [lr](double& p, double grad, std::size_t, std::size_t, bool) { p -= lr * grad; });
}

/// Bias-corrected Adam update.
inline void adam_step(Network& net, const Gradients& g, AdamState& s) {
  detail::check_layout(net, g);
  detail::check_layout(net, s.m);
  detail::check_layout(net, s.v);
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  detail::for_each_param(net, g, [&](double& p, double grad, std::size_t i, std::size_t k, bool is_bias) {
    double& m = is_bias ? s.m.bias[i][k] : s.m.weights[i][k];
    double& v = is_bias ? s.v.bias[i][k] : s.v.weights[i][k];
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v + (1.0 - s.beta2) * grad * grad;
    p -= s.learning_rate * (m / c1) / (std::sqrt(v / c2) + s.epsilon);
  });
}

}  // namespace volumetrica::nn
