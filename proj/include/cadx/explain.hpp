#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "cadx/dataset.hpp"
#include "cadx/network.hpp"

namespace cadx {

enum class AttributionKind { GuidedBackprop, Saliency };

std::string_view attribution_name(AttributionKind k);

/// Non-negative map over the network input, scaled so the largest value is 1
/// (or left all zero).
struct AttributionMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  AttributionKind kind = AttributionKind::Saliency;
  int target_class = 0;

  /// Frame for PGM output.
  Frame to_frame() const;
};

/// d logit[target] / d input. Guided mode applies the guided ReLU rule; the
/// hook sees every ReLU's forward input and passed gradient.
template <typename T>
std::vector<T> input_gradient(const nn::Network<T>& net, std::span<const T> input, int target_class,
                              nn::ReluBackward mode = nn::ReluBackward::Standard, const nn::ReluHook<T>& hook = {});

/// |gradient| divided by its maximum.
AttributionMap normalize_attribution(std::span<const double> gradient, int width, int height, AttributionKind kind,
                                     int target_class);

template <typename T>
AttributionMap saliency_map(const nn::Network<T>& net, std::span<const T> input, int target_class);

template <typename T>
AttributionMap guided_backprop(const nn::Network<T>& net, std::span<const T> input, int target_class,
                               const nn::ReluHook<T>& hook = {});

/// Class with the largest logit, ties toward the higher code.
template <typename T>
int predicted_class(const nn::Network<T>& net, std::span<const T> input);

}  // namespace cadx
