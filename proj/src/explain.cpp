#include "cadx/explain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cadx/common.hpp"

namespace cadx {

std::string_view attribution_name(AttributionKind k) {
  return k == AttributionKind::GuidedBackprop ? "guided_backprop" : "saliency";
}

Frame AttributionMap::to_frame() const {
  Frame f(width, height);
  f.pixels = values;
  return f;
}

template <typename T>
std::vector<T> input_gradient(const nn::Network<T>& net, std::span<const T> input, int target_class,
                              nn::ReluBackward mode, const nn::ReluHook<T>& hook) {
  const nn::Activations<T> acts = net.forward(input);
  const std::size_t outputs = acts.result().size();
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= outputs)
    throw UsageError("target class out of range: " + std::to_string(target_class));
  std::vector<T> seed(outputs, T(0));
  seed[static_cast<std::size_t>(target_class)] = T(1);
  std::vector<T> grad;
  net.backward(acts, seed, nullptr, &grad, mode, hook);
  return grad;
}

AttributionMap normalize_attribution(std::span<const double> gradient, int width, int height, AttributionKind kind,
                                     int target_class) {
  if (gradient.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw DataError("attribution size does not match the input");
  AttributionMap m;
  m.width = width;
  m.height = height;
  m.kind = kind;
  m.target_class = target_class;
  m.values.resize(gradient.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    if (!std::isfinite(gradient[i])) throw NumericError("non-finite input gradient");
    m.values[i] = std::abs(gradient[i]);
    peak = std::max(peak, m.values[i]);
  }
  if (peak > 0.0)
    for (double& v : m.values) v = std::min(1.0, v / peak);
  return m;
}

namespace {

template <typename T>
AttributionMap attribution(const nn::Network<T>& net, std::span<const T> input, int target_class,
                           AttributionKind kind, const nn::ReluHook<T>& hook) {
  const nn::Shape in = net.input_shape();
  if (in.channels != 1) throw DataError("attribution maps need a single-channel input");
  const auto mode = kind == AttributionKind::GuidedBackprop ? nn::ReluBackward::Guided : nn::ReluBackward::Standard;
  const std::vector<T> g = input_gradient(net, input, target_class, mode, hook);
  const std::vector<double> gd(g.begin(), g.end());
  return normalize_attribution(gd, in.width, in.height, kind, target_class);
}

}  // namespace

template <typename T>
AttributionMap saliency_map(const nn::Network<T>& net, std::span<const T> input, int target_class) {
  return attribution(net, input, target_class, AttributionKind::Saliency, nn::ReluHook<T>{});
}

template <typename T>
AttributionMap guided_backprop(const nn::Network<T>& net, std::span<const T> input, int target_class,
                               const nn::ReluHook<T>& hook) {
  return attribution(net, input, target_class, AttributionKind::GuidedBackprop, hook);
}

template <typename T>
int predicted_class(const nn::Network<T>& net, std::span<const T> input) {
  const nn::Activations<T> acts = net.forward(input);
  const auto& logits = acts.result();
  int best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] >= logits[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return best;
}

template std::vector<float> input_gradient<float>(const nn::Network<float>&, std::span<const float>, int,
                                                  nn::ReluBackward, const nn::ReluHook<float>&);
template std::vector<double> input_gradient<double>(const nn::Network<double>&, std::span<const double>, int,
                                                    nn::ReluBackward, const nn::ReluHook<double>&);
template AttributionMap saliency_map<float>(const nn::Network<float>&, std::span<const float>, int);
template AttributionMap saliency_map<double>(const nn::Network<double>&, std::span<const double>, int);
template AttributionMap guided_backprop<float>(const nn::Network<float>&, std::span<const float>, int,
                                               const nn::ReluHook<float>&);
template AttributionMap guided_backprop<double>(const nn::Network<double>&, std::span<const double>, int,
                                                const nn::ReluHook<double>&);
template int predicted_class<float>(const nn::Network<float>&, std::span<const float>);
template int predicted_class<double>(const nn::Network<double>&, std::span<const double>);

}  // namespace cadx
