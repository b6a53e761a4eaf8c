#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cadx/network.hpp"

namespace cadx::nn {

struct AdamConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  /// Per-step learning-rate decay: lr_t = lr / (1 + decay * t).
  double decay = 0.0002;
  double epsilon = 1e-8;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  /// Zero moments shaped like the network's parameters.
  static AdamState for_network(const Network<T>& net);
};

/// One bias-corrected Adam update; frozen tensors are left untouched.
/// Throws NumericError("non-finite gradient") before touching anything if a
/// gradient entry is NaN or infinite.
template <typename T>
void adam_step(AdamState<T>& state, Network<T>& net, const ParamGrads<T>& grads, const AdamConfig& config);

template <typename T>
struct LabeledImage {
  std::span<const T> image;
  int label = 0;
};

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  ParamGrads<T> grads;
};

/// Mean softmax cross-entropy over the batch and its exact gradient.
template <typename T>
LossAndGrad<T> loss_and_grad(const CnnModel<T>& model, std::span<const LabeledImage<T>> batch);

struct TrainConfig {
  int epochs = 6;
  int batch_size = 16;
  std::uint64_t seed = 1;
};

struct TrainResult {
  /// Mean batch loss per epoch.
  std::vector<double> epoch_loss;
};

/// Mini-batch Adam training with a seeded shuffle each epoch. Every class in
/// 0..4 must appear at least once in the data.
template <typename T>
TrainResult train(CnnModel<T>& model, std::span<const LabeledImage<T>> data, const TrainConfig& config,
                  const AdamConfig& adam);

}  // namespace cadx::nn
