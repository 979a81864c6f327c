// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "volumetrica/core/random.hpp"
#include "volumetrica/nn/optimizer.hpp"

namespace volumetrica::nn {

struct Sample {
  Tensor input;
  Tensor target;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 1;
  LossKind loss = LossKind::bce;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  void validate() const {
    require(epochs >= 1, ErrorCode::invalid_argument, "epochs must be at least 1");
    require(batch_size == 1, ErrorCode::invalid_argument, "only batch size 1 is supported");
    require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorCode::invalid_argument,
            "learning rate must be finite and non-negative");
    require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::invalid_argument,
            "split fraction must lie in (0, 1)");
  }
};

struct TrainingLog {
  std::vector<double> epoch_loss;  // mean pre-step loss over the epoch's cases

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) out << e + 1 << ',' << epoch_loss[e] << '\n';
    return out.str();
  }
};

/// Runs the epoch loop with one optimizer step per case, visiting cases in a
/// per-epoch permutation derived from the seed. Autoencoder training is the
/// special case target == input.
inline TrainingLog train(Network& net, const std::vector<Sample>& cases, const TrainConfig& cfg) {
  cfg.validate();
  require(!cases.empty(), ErrorCode::no_valid_images, "no valid images to train on");
  output_shapes(net);
  std::optional<AdamState> adam;
  if (cfg.optimizer == OptimizerKind::adam) adam = AdamState::for_network(net, cfg.learning_rate);

  TrainingLog log;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    CounterRng rng(cfg.seed, 0x7a17 + epoch);
    const auto order = permutation(cases.size(), rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      const auto r = backward(net, cases[idx].input, cases[idx].target, cfg.loss);
      if (!std::isfinite(r.loss))
        fail(ErrorCode::training_diverged, "loss became non-finite in epoch " + std::to_string(epoch + 1));
      total += r.loss;
      if (adam)
        adam_step(net, r.gradients, *adam);
      else
        sgd_step(net, r.gradients, cfg.learning_rate);
    }
    log.epoch_loss.push_back(total / static_cast<double>(cases.size()));
  }
  return log;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Shuffled split with round(fraction * n) test cases, at least one on each
/// side when n >= 2.
inline Split train_test_split(std::size_t n, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, ErrorCode::invalid_argument,
          "split fraction must lie in (0, 1)");
  require(n >= 2, ErrorCode::invalid_argument, "need at least two cases to split");
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  CounterRng rng(seed, 0x5b1);
  const auto order = permutation(n, rng);
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<long>(n_test));
  s.train.assign(order.begin() + static_cast<long>(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

}  // namespace volumetrica::nn
