// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "volumetrica/nn/network.hpp"

using namespace volumetrica;
using namespace volumetrica::nn;

using namespace gradcheck;

TEST(Backprop, ZeroWeightNetworkWithMatchingTargetHasZeroGradient) {
  auto net = build_segmentation_net_3d(1, 4, 4, 4);
  for (auto& layer : net.layers)
    if (auto* conv = std::get_if<ConvLayer>(&layer)) std::fill(conv->weights.begin(), conv->weights.end(), 0.0);
  auto x = random_tensor({4, 4, 4, 1}, 2, 0, 1);
  auto out = forward(net, x);
  auto r = backward(net, x, out, LossKind::mse);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& g : r.gradients.weights)
    for (double v : g) EXPECT_EQ(v, 0.0);
  for (const auto& g : r.gradients.bias)
    for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Backprop, SingleVoxelSigmoidBiasGradientClosedForm) {
  CounterRng rng(3);
  Network net;
  net.input_shape = {1, 1, 1, 1};
  net.layers.emplace_back(make_conv(3, {1, 1, 1}, 1, 1, Activation::sigmoid, rng));
  auto& conv = std::get<ConvLayer>(net.layers[0]);
  conv.weights = {0.7};
  conv.bias = {-0.2};
  const Tensor x({1, 1, 1, 1}, 1.5), t({1, 1, 1, 1}, 1.0);
  const double s = sigmoid(0.7 * 1.5 - 0.2);
  auto bce = backward(net, x, t, LossKind::bce);
  EXPECT_NEAR(bce.gradients.bias[0][0], s - 1.0, 1e-15);
  EXPECT_NEAR(bce.gradients.weights[0][0], (s - 1.0) * 1.5, 1e-15);
  auto mse = backward(net, x, t, LossKind::mse);
  EXPECT_NEAR(mse.gradients.bias[0][0], 2 * (s - 1.0) * s * (1 - s), 1e-15);
}

TEST(Backprop, FiniteDifference3dBothLosses) {
  const auto net = randomised(build_segmentation_net_3d(11, 8, 8, 8), 12);
  const auto x = random_tensor({8, 8, 8, 1}, 13, 0, 1);
  const auto t = random_tensor({4, 4, 4, 1}, 14, 0, 1);
  EXPECT_LT(max_gradient_error(net, x, t, LossKind::mse), 1e-5);
  EXPECT_LT(max_gradient_error(net, x, t, LossKind::bce), 1e-5);
}

TEST(Backprop, FiniteDifference2dBothLosses) {
  const auto net = randomised(build_segmentation_net_2d(21, 8, 8), 22);
  const auto x = random_tensor({8, 8, 1}, 23, 0, 1);
  const auto t = random_tensor({4, 4, 1}, 24, 0, 1);
  EXPECT_LT(max_gradient_error(net, x, t, LossKind::mse), 1e-5);
  EXPECT_LT(max_gradient_error(net, x, t, LossKind::bce), 1e-5);
}

TEST(Backprop, FiniteDifferenceDeeperStackWithLinearOutput) {
  // Probability-space bce is not used here: the output is unbounded.
  CounterRng rng(31);
  Network net;
  net.input_shape = {4, 6, 4, 2};
  net.layers.emplace_back(make_conv(3, {3, 3, 3}, 2, 3, Activation::sigmoid, rng));
  net.layers.emplace_back(make_conv(3, {1, 3, 1}, 3, 2, Activation::relu, rng));
  net.layers.emplace_back(AvgPoolLayer{3, {2, 3, 2}});
  net.layers.emplace_back(make_conv(3, {1, 1, 1}, 2, 1, Activation::none, rng));
  net = randomised(net, 32);
  const auto x = random_tensor({4, 6, 4, 2}, 33, -1, 1);
  const auto t = random_tensor({2, 2, 2, 1}, 34, -1, 1);
  EXPECT_LT(max_gradient_error(net, x, t, LossKind::mse), 1e-5);
}

TEST(Backprop, ProbabilityBceWithoutFusion) {
  // A sigmoid layer followed by pooling is not fused and uses the probability form.
  CounterRng rng(41);
  Network net;
  net.input_shape = {4, 4, 1};
  net.layers.emplace_back(make_conv(2, {1, 3, 3}, 1, 2, Activation::relu, rng));
  net.layers.emplace_back(make_conv(2, {1, 1, 1}, 2, 1, Activation::sigmoid, rng));
  net.layers.emplace_back(AvgPoolLayer{2, {1, 2, 2}});
  net = randomised(net, 42);
  const auto x = random_tensor({4, 4, 1}, 43, 0, 1);
  const auto t = random_tensor({2, 2, 1}, 44, 0, 1);
  EXPECT_LT(max_gradient_error(net, x, t, LossKind::bce), 1e-5);
}
