#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

namespace cadx::nn {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
  bool operator==(const Shape&) const = default;
};

/// 3x3 convolution, stride 1, zero padding 1. Weights are [out][in][3][3].
template <typename T>
struct Conv3x3 {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<T> weight;
  std::vector<T> bias;
  bool trainable = true;
};

struct Relu {};

/// 2x2 max-pool, stride 2; odd trailing rows/columns are dropped.
/// Ties go to the first element of the window in row-major order.
struct MaxPool2x2 {};

/// Fully connected layer over the flattened input. Weights are [out][in].
template <typename T>
struct Dense {
  int in_features = 0;
  int out_features = 0;
  std::vector<T> weight;
  std::vector<T> bias;
  bool trainable = true;
};

template <typename T>
using Layer = std::variant<Conv3x3<T>, Relu, MaxPool2x2, Dense<T>>;

/// Per-parameter-tensor gradient buffers in topology order: for every layer
/// with parameters, its weight tensor then its bias tensor.
template <typename T>
using ParamGrads = std::vector<std::vector<T>>;

enum class ReluBackward {
  Standard,
  /// Pass gradient only where the forward input was positive and the incoming
  /// gradient is positive.
  Guided,
};

/// Called at every ReLU during a backward pass with the layer index, the
/// forward input of the ReLU and the gradient it passes downstream.
template <typename T>
using ReluHook = std::function<void(std::size_t layer, std::span<const T> forward_input,
                                    std::span<const T> passed_grad)>;

/// Every layer's output; outputs[0] is the input, outputs[i + 1] is layer i's.
template <typename T>
struct Activations {
  std::vector<std::vector<T>> outputs;
  const std::vector<T>& result() const { return outputs.back(); }
};

template <typename T>
class Network {
 public:
  Network() = default;
  Network(Shape input, std::vector<Layer<T>> layers);

  const Shape& input_shape() const { return input_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  /// Output shape of each layer (dense outputs are {n, 1, 1}).
  const std::vector<Shape>& shapes() const { return shapes_; }
  Shape output_shape() const { return shapes_.empty() ? input_ : shapes_.back(); }

  Activations<T> forward(std::span<const T> input) const;

  /// Backpropagates output_grad from the last layer. Parameter gradients are
  /// accumulated (+=) into grads when non-null; frozen layers get none.
  /// input_grad, when non-null, receives d(output)/d(input).
  void backward(const Activations<T>& acts, std::span<const T> output_grad, ParamGrads<T>* grads,
                std::vector<T>* input_grad, ReluBackward mode = ReluBackward::Standard,
                const ReluHook<T>& hook = {}) const;

  /// Mutable views of every parameter tensor, same order as ParamGrads.
  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;
  /// Whether each parameter tensor belongs to a trainable layer.
  std::vector<bool> parameter_trainable() const;
  ParamGrads<T> zero_grads() const;
  std::size_t parameter_count() const;

  template <typename U>
  Network<U> cast() const;

 private:
  Shape input_;
  std::vector<Layer<T>> layers_;
  std::vector<Shape> shapes_;
  void infer_shapes();
};

/// Numerically stable softmax in double precision.
std::vector<double> softmax(std::span<const double> logits);

inline constexpr int kOutDim = 5;

struct NetConfig {
  int input_size = 64;
  std::vector<int> conv_channels{8, 16, 32, 32};
  int fc1_dim = 256;
  int fc2_dim = 256;
  int out_dim = kOutDim;
  /// One flag per parameterized layer: convs, then FC1, FC2, FC3.
  /// Empty means all trainable.
  std::vector<bool> trainable;

  /// 224x224 input, FC2 of 4096.
  static NetConfig full_scale();
  void validate() const;
  std::size_t parameterized_layers() const { return conv_channels.size() + 3; }
  bool operator==(const NetConfig&) const = default;
};

/// conv3x3+ReLU+pool blocks, then FC1-ReLU, FC2-ReLU, FC3. Softmax is
/// applied outside the network.
template <typename T>
struct CnnModel {
  NetConfig config;
  Network<T> net;
  /// Index into Activations::outputs holding the (post-ReLU) FC2 features.
  std::size_t fc2_output = 0;

  template <typename U>
  CnnModel<U> cast() const {
    return CnnModel<U>{config, net.template cast<U>(), fc2_output};
  }
};

/// Zero weights and biases.
template <typename T>
CnnModel<T> build_model(const NetConfig& config);

/// He-normal weights (std sqrt(2 / fan_in)), zero biases.
template <typename T>
CnnModel<T> init_model(const NetConfig& config, std::uint64_t seed);

struct ForwardResult {
  std::vector<double> fc2_features;
  std::vector<double> logits;
  std::vector<double> probs;
};

/// Throws DataError when the input size does not match the network.
template <typename T>
ForwardResult forward(const CnnModel<T>& model, std::span<const T> image);

/// FC3 pre-softmax activations.
template <typename T>
std::vector<double> extract_features(const CnnModel<T>& model, std::span<const T> image);

}  // namespace cadx::nn
