#include "cadx/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cadx/common.hpp"

namespace cadx::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

/// Copies each channel of x into a zero-bordered (h+2)x(w+2) plane.
template <typename T>
void pad_planes(std::span<const T> x, const Shape& s, std::vector<T>& padded) {
  const int pw = s.width + 2;
  const int ph = s.height + 2;
  padded.assign(static_cast<std::size_t>(s.channels) * ph * pw, T(0));
  for (int c = 0; c < s.channels; ++c) {
    for (int r = 0; r < s.height; ++r) {
      const T* src = x.data() + (static_cast<std::size_t>(c) * s.height + r) * s.width;
      T* dst = padded.data() + (static_cast<std::size_t>(c) * ph + r + 1) * pw + 1;
      std::copy(src, src + s.width, dst);
    }
  }
}

template <typename T>
void conv_forward(const Conv3x3<T>& conv, std::span<const T> x, const Shape& in, std::vector<T>& out) {
  const int h = in.height;
  const int w = in.width;
  const int pw = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t pplane = static_cast<std::size_t>(h + 2) * pw;
  std::vector<T> padded;
  pad_planes(x, in, padded);
  out.assign(static_cast<std::size_t>(conv.out_channels) * plane, T(0));
  for (int oc = 0; oc < conv.out_channels; ++oc) {
    T* dst_plane = out.data() + oc * plane;
    std::fill(dst_plane, dst_plane + plane, conv.bias[oc]);
    for (int ic = 0; ic < conv.in_channels; ++ic) {
      const T* src_plane = padded.data() + ic * pplane;
      const T* kernel = conv.weight.data() + (static_cast<std::size_t>(oc) * conv.in_channels + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T k = kernel[ky * 3 + kx];
          for (int y = 0; y < h; ++y) {
            const T* src = src_plane + (y + ky) * pw + kx;
            T* dst = dst_plane + y * w;
            for (int xx = 0; xx < w; ++xx) dst[xx] += k * src[xx];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward(const Conv3x3<T>& conv, std::span<const T> x, const Shape& in, std::span<const T> dout,
                   T* dweight, T* dbias, std::vector<T>* dx) {
  const int h = in.height;
  const int w = in.width;
  const int pw = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t pplane = static_cast<std::size_t>(h + 2) * pw;
  std::vector<T> padded;
  if (dweight) pad_planes(x, in, padded);
  std::vector<T> dpadded;
  if (dx) dpadded.assign(static_cast<std::size_t>(conv.in_channels) * pplane, T(0));
  std::vector<T> column_acc(static_cast<std::size_t>(w));

  for (int oc = 0; oc < conv.out_channels; ++oc) {
    const T* g_plane = dout.data() + oc * plane;
    if (dbias) {
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += g_plane[i];
      dbias[oc] += s;
    }
    for (int ic = 0; ic < conv.in_channels; ++ic) {
      const std::size_t kidx = (static_cast<std::size_t>(oc) * conv.in_channels + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          if (dweight) {
            const T* src_plane = padded.data() + ic * pplane;
            // Column-wise partial sums keep the inner loop vectorizable
            // without reassociating the reduction.
            std::fill(column_acc.begin(), column_acc.end(), T(0));
            for (int y = 0; y < h; ++y) {
              const T* src = src_plane + (y + ky) * pw + kx;
              const T* g = g_plane + y * w;
              for (int xx = 0; xx < w; ++xx) column_acc[xx] += g[xx] * src[xx];
            }
            T acc = 0;
            for (int xx = 0; xx < w; ++xx) acc += column_acc[xx];
            dweight[kidx + ky * 3 + kx] += acc;
          }
          if (dx) {
            const T k = conv.weight[kidx + ky * 3 + kx];
            T* dst_plane = dpadded.data() + ic * pplane;
            for (int y = 0; y < h; ++y) {
              T* dst = dst_plane + (y + ky) * pw + kx;
              const T* g = g_plane + y * w;
              for (int xx = 0; xx < w; ++xx) dst[xx] += k * g[xx];
            }
          }
        }
      }
    }
  }
  if (dx) {
    dx->assign(in.size(), T(0));
    for (int c = 0; c < in.channels; ++c)
      for (int r = 0; r < h; ++r) {
        const T* src = dpadded.data() + c * pplane + (r + 1) * pw + 1;
        std::copy(src, src + w, dx->data() + (static_cast<std::size_t>(c) * h + r) * w);
      }
  }
}

template <typename T>
void pool_forward(std::span<const T> x, const Shape& in, const Shape& out_shape, std::vector<T>& out) {
  out.assign(out_shape.size(), T(0));
  for (int c = 0; c < in.channels; ++c)
    for (int r = 0; r < out_shape.height; ++r)
      for (int q = 0; q < out_shape.width; ++q) {
        const T* base = x.data() + (static_cast<std::size_t>(c) * in.height + 2 * r) * in.width + 2 * q;
        T best = base[0];
        if (base[1] > best) best = base[1];
        if (base[in.width] > best) best = base[in.width];
        if (base[in.width + 1] > best) best = base[in.width + 1];
        out[(static_cast<std::size_t>(c) * out_shape.height + r) * out_shape.width + q] = best;
      }
}

template <typename T>
void pool_backward(std::span<const T> x, const Shape& in, const Shape& out_shape, std::span<const T> dout,
                   std::vector<T>& dx) {
  dx.assign(in.size(), T(0));
  for (int c = 0; c < in.channels; ++c)
    for (int r = 0; r < out_shape.height; ++r)
      for (int q = 0; q < out_shape.width; ++q) {
        const std::size_t origin = (static_cast<std::size_t>(c) * in.height + 2 * r) * in.width + 2 * q;
        const std::size_t cand[4] = {origin, origin + 1, origin + in.width, origin + in.width + 1};
        std::size_t arg = cand[0];
        for (int k = 1; k < 4; ++k)
          if (x[cand[k]] > x[arg]) arg = cand[k];
        dx[arg] += dout[(static_cast<std::size_t>(c) * out_shape.height + r) * out_shape.width + q];
      }
}

template <typename T>
void dense_forward(const Dense<T>& d, std::span<const T> x, std::vector<T>& out) {
  out.resize(static_cast<std::size_t>(d.out_features));
  for (int o = 0; o < d.out_features; ++o) {
    const T* row = d.weight.data() + static_cast<std::size_t>(o) * d.in_features;
    T acc = 0;
    for (int i = 0; i < d.in_features; ++i) acc += row[i] * x[i];
    out[o] = acc + d.bias[o];
  }
}

template <typename T>
void dense_backward(const Dense<T>& d, std::span<const T> x, std::span<const T> dout, T* dweight, T* dbias,
                    std::vector<T>* dx) {
  if (dx) dx->assign(static_cast<std::size_t>(d.in_features), T(0));
  for (int o = 0; o < d.out_features; ++o) {
    const T g = dout[o];
    if (dbias) dbias[o] += g;
    if (g == T(0)) continue;
    const T* row = d.weight.data() + static_cast<std::size_t>(o) * d.in_features;
    if (dweight) {
      T* drow = dweight + static_cast<std::size_t>(o) * d.in_features;
      for (int i = 0; i < d.in_features; ++i) drow[i] += g * x[i];
    }
    if (dx) {
      T* dst = dx->data();
      for (int i = 0; i < d.in_features; ++i) dst[i] += g * row[i];
    }
  }
}

}  // namespace

template <typename T>
Network<T>::Network(Shape input, std::vector<Layer<T>> layers) : input_(input), layers_(std::move(layers)) {
  infer_shapes();
}

template <typename T>
void Network<T>::infer_shapes() {
  if (input_.size() == 0) throw DataError("network input shape is empty");
  shapes_.clear();
  Shape cur = input_;
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Conv3x3<T>& c) {
                     if (c.in_channels != cur.channels)
                       throw DataError("conv expects " + std::to_string(c.in_channels) + " channels, got " +
                                       std::to_string(cur.channels));
                     if (c.weight.size() != static_cast<std::size_t>(c.out_channels) * c.in_channels * 9 ||
                         c.bias.size() != static_cast<std::size_t>(c.out_channels))
                       throw DataError("conv parameter shapes inconsistent");
                     cur.channels = c.out_channels;
                   },
                   [&](const Relu&) {},
                   [&](const MaxPool2x2&) {
                     if (cur.height < 2 || cur.width < 2) throw DataError("max-pool input smaller than 2x2");
                     cur.height /= 2;
                     cur.width /= 2;
                   },
                   [&](const Dense<T>& d) {
                     if (static_cast<std::size_t>(d.in_features) != cur.size())
                       throw DataError("dense expects " + std::to_string(d.in_features) + " inputs, got " +
                                       std::to_string(cur.size()));
                     if (d.weight.size() != static_cast<std::size_t>(d.out_features) * d.in_features ||
                         d.bias.size() != static_cast<std::size_t>(d.out_features))
                       throw DataError("dense parameter shapes inconsistent");
                     cur = Shape{d.out_features, 1, 1};
                   },
               },
               layer);
    shapes_.push_back(cur);
  }
}

template <typename T>
Activations<T> Network<T>::forward(std::span<const T> input) const {
  if (input.size() != input_.size())
    throw DataError("network input has " + std::to_string(input.size()) + " values, expected " +
                    std::to_string(input_.size()));
  Activations<T> acts;
  acts.outputs.reserve(layers_.size() + 1);
  acts.outputs.emplace_back(input.begin(), input.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape& in = i == 0 ? input_ : shapes_[i - 1];
    std::span<const T> x(acts.outputs[i]);
    std::vector<T> out;
    std::visit(Overloaded{
                   [&](const Conv3x3<T>& c) { conv_forward(c, x, in, out); },
                   [&](const Relu&) {
                     out.resize(x.size());
                     for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] > T(0) ? x[k] : T(0);
                   },
                   [&](const MaxPool2x2&) { pool_forward(x, in, shapes_[i], out); },
                   [&](const Dense<T>& d) { dense_forward(d, x, out); },
               },
               layers_[i]);
    acts.outputs.push_back(std::move(out));
  }
  return acts;
}

template <typename T>
void Network<T>::backward(const Activations<T>& acts, std::span<const T> output_grad, ParamGrads<T>* grads,
                          std::vector<T>* input_grad, ReluBackward mode, const ReluHook<T>& hook) const {
  if (acts.outputs.size() != layers_.size() + 1) throw DataError("activations do not match network");
  if (output_grad.size() != acts.outputs.back().size()) throw DataError("output gradient has wrong size");

  // Parameter tensor index of each layer's weight (bias follows).
  std::vector<int> param_slot(layers_.size(), -1);
  int slot = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (std::holds_alternative<Conv3x3<T>>(layers_[i]) || std::holds_alternative<Dense<T>>(layers_[i])) {
      param_slot[i] = slot;
      slot += 2;
    }

  // Lowest layer that must produce an input gradient.
  std::size_t stop = 0;
  if (!input_grad) {
    stop = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      bool trainable = std::visit(Overloaded{
                                      [](const Conv3x3<T>& c) { return c.trainable; },
                                      [](const Dense<T>& d) { return d.trainable; },
                                      [](const auto&) { return false; },
                                  },
                                  layers_[i]);
      if (trainable && grads) {
        stop = i;
        break;
      }
    }
  }

  std::vector<T> g(output_grad.begin(), output_grad.end());
  std::vector<T> next;
  for (std::size_t idx = layers_.size(); idx-- > stop;) {
    const Shape& in = idx == 0 ? input_ : shapes_[idx - 1];
    std::span<const T> x(acts.outputs[idx]);
    const bool need_dx = idx > stop || input_grad != nullptr;
    std::visit(Overloaded{
                   [&](const Conv3x3<T>& c) {
                     T* dw = nullptr;
                     T* db = nullptr;
                     if (grads && c.trainable) {
                       dw = (*grads)[param_slot[idx]].data();
                       db = (*grads)[param_slot[idx] + 1].data();
                     }
                     conv_backward(c, x, in, std::span<const T>(g), dw, db, need_dx ? &next : nullptr);
                   },
                   [&](const Relu&) {
                     next.resize(g.size());
                     for (std::size_t k = 0; k < g.size(); ++k) {
                       const bool open = x[k] > T(0) && (mode == ReluBackward::Standard || g[k] > T(0));
                       next[k] = open ? g[k] : T(0);
                     }
                     if (hook) hook(idx, x, std::span<const T>(next));
                   },
                   [&](const MaxPool2x2&) { pool_backward(x, in, shapes_[idx], std::span<const T>(g), next); },
                   [&](const Dense<T>& d) {
                     T* dw = nullptr;
                     T* db = nullptr;
                     if (grads && d.trainable) {
                       dw = (*grads)[param_slot[idx]].data();
                       db = (*grads)[param_slot[idx] + 1].data();
                     }
                     dense_backward(d, x, std::span<const T>(g), dw, db, need_dx ? &next : nullptr);
                   },
               },
               layers_[idx]);
    g.swap(next);
  }
  if (input_grad) *input_grad = std::move(g);
}

template <typename T>
std::vector<std::span<T>> Network<T>::parameters() {
  std::vector<std::span<T>> out;
  for (auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](Conv3x3<T>& c) {
                     out.emplace_back(c.weight);
                     out.emplace_back(c.bias);
                   },
                   [&](Dense<T>& d) {
                     out.emplace_back(d.weight);
                     out.emplace_back(d.bias);
                   },
                   [](auto&) {},
               },
               layer);
  }
  return out;
}

template <typename T>
std::vector<std::span<const T>> Network<T>::parameters() const {
  std::vector<std::span<const T>> out;
  for (auto s : const_cast<Network*>(this)->parameters()) out.emplace_back(s.data(), s.size());
  return out;
}

template <typename T>
std::vector<bool> Network<T>::parameter_trainable() const {
  std::vector<bool> out;
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Conv3x3<T>& c) { out.insert(out.end(), 2, c.trainable); },
                   [&](const Dense<T>& d) { out.insert(out.end(), 2, d.trainable); },
                   [](const auto&) {},
               },
               layer);
  }
  return out;
}

template <typename T>
ParamGrads<T> Network<T>::zero_grads() const {
  ParamGrads<T> g;
  for (auto p : parameters()) g.emplace_back(p.size(), T(0));
  return g;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto p : parameters()) n += p.size();
  return n;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  std::vector<Layer<U>> layers;
  auto convert = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Conv3x3<T>& c) {
                     layers.emplace_back(
                         Conv3x3<U>{c.in_channels, c.out_channels, convert(c.weight), convert(c.bias), c.trainable});
                   },
                   [&](const Relu&) { layers.emplace_back(Relu{}); },
                   [&](const MaxPool2x2&) { layers.emplace_back(MaxPool2x2{}); },
                   [&](const Dense<T>& d) {
                     layers.emplace_back(
                         Dense<U>{d.in_features, d.out_features, convert(d.weight), convert(d.bias), d.trainable});
                   },
               },
               layer);
  }
  return Network<U>(input_, std::move(layers));
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - peak);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

// ---------------------------------------------------------------------------
// NetConfig / CnnModel

NetConfig NetConfig::full_scale() {
  NetConfig c;
  c.input_size = 224;
  c.conv_channels = {64, 128, 256, 512, 512};
  c.fc1_dim = 4096;
  c.fc2_dim = 4096;
  return c;
}

void NetConfig::validate() const {
  if (out_dim != kOutDim) throw UsageError("network output dimension must be 5");
  if (conv_channels.size() < 2) throw UsageError("network needs at least two conv blocks");
  for (int c : conv_channels)
    if (c < 1) throw UsageError("conv channel widths must be positive");
  if (fc1_dim < 1 || fc2_dim < 1) throw UsageError("fully connected widths must be positive");
  if (input_size < 1) throw UsageError("input size must be positive");
  const int reduction = 1 << conv_channels.size();
  if (input_size % reduction != 0)
    throw UsageError("input size " + std::to_string(input_size) + " must be divisible by " +
                     std::to_string(reduction));
  if (!trainable.empty() && trainable.size() != parameterized_layers())
    throw UsageError("trainable mask needs one flag per parameterized layer (" +
                     std::to_string(parameterized_layers()) + ")");
}

template <typename T>
CnnModel<T> build_model(const NetConfig& config) {
  config.validate();
  auto trainable = [&](std::size_t i) { return config.trainable.empty() ? true : bool(config.trainable[i]); };
  std::vector<Layer<T>> layers;
  int channels = 1;
  int spatial = config.input_size;
  std::size_t p = 0;
  for (int width : config.conv_channels) {
    Conv3x3<T> conv;
    conv.in_channels = channels;
    conv.out_channels = width;
    conv.weight.assign(static_cast<std::size_t>(width) * channels * 9, T(0));
    conv.bias.assign(static_cast<std::size_t>(width), T(0));
    conv.trainable = trainable(p++);
    layers.emplace_back(std::move(conv));
    layers.emplace_back(Relu{});
    layers.emplace_back(MaxPool2x2{});
    channels = width;
    spatial /= 2;
  }
  auto dense = [&](int in, int out) {
    Dense<T> d;
    d.in_features = in;
    d.out_features = out;
    d.weight.assign(static_cast<std::size_t>(in) * out, T(0));
    d.bias.assign(static_cast<std::size_t>(out), T(0));
    d.trainable = trainable(p++);
    return d;
  };
  layers.emplace_back(dense(channels * spatial * spatial, config.fc1_dim));
  layers.emplace_back(Relu{});
  layers.emplace_back(dense(config.fc1_dim, config.fc2_dim));
  layers.emplace_back(Relu{});
  const std::size_t fc2_output = layers.size();
  layers.emplace_back(dense(config.fc2_dim, config.out_dim));

  CnnModel<T> model;
  model.config = config;
  model.net = Network<T>(Shape{1, config.input_size, config.input_size}, std::move(layers));
  model.fc2_output = fc2_output;
  return model;
}

template <typename T>
CnnModel<T> init_model(const NetConfig& config, std::uint64_t seed) {
  CnnModel<T> model = build_model<T>(config);
  Rng rng(seed);
  for (auto& layer : model.net.layers()) {
    std::visit(Overloaded{
                   [&](Conv3x3<T>& c) {
                     const double stddev = std::sqrt(2.0 / (c.in_channels * 9.0));
                     for (auto& w : c.weight) w = static_cast<T>(rng.normal() * stddev);
                   },
                   [&](Dense<T>& d) {
                     const double stddev = std::sqrt(2.0 / d.in_features);
                     for (auto& w : d.weight) w = static_cast<T>(rng.normal() * stddev);
                   },
                   [](auto&) {},
               },
               layer);
  }
  return model;
}

template <typename T>
ForwardResult forward(const CnnModel<T>& model, std::span<const T> image) {
  const Activations<T> acts = model.net.forward(image);
  ForwardResult r;
  const auto& fc2 = acts.outputs.at(model.fc2_output);
  r.fc2_features.assign(fc2.begin(), fc2.end());
  r.logits.assign(acts.result().begin(), acts.result().end());
  r.probs = softmax(r.logits);
  return r;
}

template <typename T>
std::vector<double> extract_features(const CnnModel<T>& model, std::span<const T> image) {
  const Activations<T> acts = model.net.forward(image);
  return std::vector<double>(acts.result().begin(), acts.result().end());
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;
template CnnModel<float> build_model<float>(const NetConfig&);
template CnnModel<double> build_model<double>(const NetConfig&);
template CnnModel<float> init_model<float>(const NetConfig&, std::uint64_t);
template CnnModel<double> init_model<double>(const NetConfig&, std::uint64_t);
template ForwardResult forward<float>(const CnnModel<float>&, std::span<const float>);
template ForwardResult forward<double>(const CnnModel<double>&, std::span<const double>);
template std::vector<double> extract_features<float>(const CnnModel<float>&, std::span<const float>);
template std::vector<double> extract_features<double>(const CnnModel<double>&, std::span<const double>);

}  // namespace cadx::nn
