#include "cadx/training.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "cadx/common.hpp"

namespace cadx::nn {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("adam: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw UsageError("adam: betas must lie in [0, 1)");
  if (!(decay >= 0.0)) throw UsageError("adam: decay must be non-negative");
  if (!(epsilon > 0.0)) throw UsageError("adam: epsilon must be positive");
}

template <typename T>
AdamState<T> AdamState<T>::for_network(const Network<T>& net) {
  AdamState<T> s;
  s.first_moment = net.zero_grads();
  s.second_moment = net.zero_grads();
  return s;
}

template <typename T>
void adam_step(AdamState<T>& state, Network<T>& net, const ParamGrads<T>& grads, const AdamConfig& config) {
  auto params = net.parameters();
  const auto trainable = net.parameter_trainable();
  if (grads.size() != params.size()) throw DataError("gradient tensor count does not match the network");
  if (state.first_moment.empty()) state = AdamState<T>::for_network(net);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].size() != params[p].size()) throw DataError("gradient shape does not match parameter");
    for (T g : grads[p])
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient");
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double lr_t = config.learning_rate / (1.0 + config.decay * t);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);

  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!trainable[p]) continue;
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    const auto& g = grads[p];
    auto theta = params[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(m[i]) / correction1;
      const double v_hat = static_cast<double>(v[i]) / correction2;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr_t * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  }
}

template <typename T>
LossAndGrad<T> loss_and_grad(const CnnModel<T>& model, std::span<const LabeledImage<T>> batch) {
  if (batch.empty()) throw DataError("empty batch");
  LossAndGrad<T> out;
  out.grads = model.net.zero_grads();
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<T> dlogits(static_cast<std::size_t>(model.config.out_dim));
  for (const auto& sample : batch) {
    if (sample.label < 0 || sample.label >= model.config.out_dim)
      throw DataError("label out of range: " + std::to_string(sample.label));
    const Activations<T> acts = model.net.forward(sample.image);
    const std::vector<double> logits(acts.result().begin(), acts.result().end());
    const std::vector<double> probs = softmax(logits);
    out.loss -= std::log(probs[sample.label]) * scale;
    for (std::size_t k = 0; k < probs.size(); ++k)
      dlogits[k] = static_cast<T>((probs[k] - (static_cast<int>(k) == sample.label ? 1.0 : 0.0)) * scale);
    model.net.backward(acts, dlogits, &out.grads, nullptr);
  }
  return out;
}

template <typename T>
TrainResult train(CnnModel<T>& model, std::span<const LabeledImage<T>> data, const TrainConfig& config,
                  const AdamConfig& adam) {
  adam.validate();
  if (config.epochs < 0 || config.batch_size < 1) throw UsageError("train: need epochs >= 0 and batch_size >= 1");
  std::array<int, kOutDim> per_class{};
  for (const auto& s : data) {
    if (s.label < 0 || s.label >= kOutDim) throw DataError("label out of range: " + std::to_string(s.label));
    ++per_class[s.label];
  }
  for (int c = 0; c < kOutDim; ++c)
    if (per_class[c] == 0) throw DataError("class " + std::to_string(c) + " absent from training data");

  TrainResult result;
  AdamState<T> state = AdamState<T>::for_network(model.net);
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LabeledImage<T>> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      LossAndGrad<T> lg = loss_and_grad(model, std::span<const LabeledImage<T>>(batch));
      if (!std::isfinite(lg.loss)) throw NumericError("non-finite training loss");
      adam_step(state, model.net, lg.grads, adam);
      loss_sum += lg.loss;
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / batches);
  }
  return result;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(AdamState<float>&, Network<float>&, const ParamGrads<float>&, const AdamConfig&);
template void adam_step<double>(AdamState<double>&, Network<double>&, const ParamGrads<double>&, const AdamConfig&);
template LossAndGrad<float> loss_and_grad<float>(const CnnModel<float>&, std::span<const LabeledImage<float>>);
template LossAndGrad<double> loss_and_grad<double>(const CnnModel<double>&, std::span<const LabeledImage<double>>);
template TrainResult train<float>(CnnModel<float>&, std::span<const LabeledImage<float>>, const TrainConfig&,
                                  const AdamConfig&);
template TrainResult train<double>(CnnModel<double>&, std::span<const LabeledImage<double>>, const TrainConfig&,
                                   const AdamConfig&);

}  // namespace cadx::nn
