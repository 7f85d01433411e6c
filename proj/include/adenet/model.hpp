#pragma once

// Layer graphs for AdeNet and LeNet-5: builders, parameter accounting and
// whole-model forward/backward over the nn kernels.
//
// AdeNet layout (reconstructed from the published parameter counts):
//
//   [conv3x3(in->32) BN ReLU maxpool2]
//   [conv3x3(32->64) BN ReLU maxpool2]
//   [conv3x3(64->128) BN ReLU maxpool2]
//   global-avg-pool -> dense(128->64) ReLU -> dense(64->2) -> softmax
//
// Non-trainable = 2 * (32 + 64 + 128) = 448 running statistics fixes the
// block widths; the remaining 102082 - 93696 = 8386 = 131*h + 2 trainable
// values fix the hidden width h = 64. Global average pooling is the only
// head that keeps the dense input independent of the padded batch size.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adenet/nn.hpp"
#include "adenet/tensor.hpp"

namespace adenet::model {

enum class LayerType : std::uint8_t {
  kConv3x3Same = 0,
  kConv5x5Valid = 1,
  kBatchNorm = 2,
  kRelu = 3,
  kMaxPool2 = 4,
  kAvgPool2 = 5,
  kGlobalAvgPool = 6,
  kFlatten = 7,
  kDense = 8,
  kSoftmax = 9,
};

std::string_view layer_type_name(LayerType type);
bool is_conv(LayerType type);

/// One layer. For conv/dense `weight`/`bias` are the kernel and bias; for
/// batch norm they hold gamma/beta and the running statistics are set.
template <typename T>
struct LayerSpec {
  LayerType type{};
  std::size_t in = 0;   // input channels / units
  std::size_t out = 0;  // output channels / units
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> running_mean;
  Tensor<T> running_var;

  bool operator==(const LayerSpec&) const = default;
};

struct ModelInfo {
  std::string name;
  std::size_t in_channels = 3;
  std::size_t classes = 2;
  std::uint64_t seed = 0;
  /// Nonzero when the model expects a fixed square input (LeNet-5: 32).
  std::size_t fixed_input = 0;

  bool operator==(const ModelInfo&) const = default;
};

template <typename T>
struct ModelGraph {
  ModelInfo info;
  nn::Mode mode = nn::Mode::kInfer;
  std::vector<LayerSpec<T>> layers;

  /// Index of the softmax layer; everything before it produces logits.
  std::size_t logits_end() const;

  template <typename U>
  ModelGraph<U> cast() const {
    ModelGraph<U> out;
    out.info = info;
    out.mode = mode;
    for (const auto& l : layers)
      out.layers.push_back({l.type, l.in, l.out, l.weight.template cast<U>(), l.bias.template cast<U>(),
                            l.running_mean.template cast<U>(), l.running_var.template cast<U>()});
    return out;
  }

  bool operator==(const ModelGraph&) const = default;
};

using Model = ModelGraph<float>;

struct ParamCount {
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  bool operator==(const ParamCount&) const = default;
};

Model build_adenet(std::size_t in_channels = 3, bool with_batchnorm = true, std::uint64_t seed = 0);
Model build_lenet5(std::size_t in_channels = 1, std::uint64_t seed = 0);

/// Appends a layer with freshly initialized parameters (He-normal weights,
/// zero biases, unit gamma, zero beta, running mean 0 / variance 1).
void append_layer(Model& model, LayerType type, std::size_t in, std::size_t out, std::uint64_t seed);

template <typename T>
ParamCount count_params(const ModelGraph<T>& model);

/// Propagates a probe shape through the graph and returns the shape of
/// each layer's output. Throws ShapeError on the first incompatibility.
template <typename T>
std::vector<Shape> shape_chain(const ModelGraph<T>& model, Shape probe);

/// Smallest square spatial size the graph accepts.
template <typename T>
std::size_t min_input_size(const ModelGraph<T>& model);

template <typename T>
struct ForwardPass {
  Tensor<T> logits;
  Tensor<T> probs;
  /// One context per layer before the softmax (train mode or when requested).
  std::vector<nn::LayerContext<T>> contexts;
  /// Output of every layer before the softmax (when requested).
  std::vector<Tensor<T>> activations;
};

struct ForwardOptions {
  bool keep_contexts = false;
  bool keep_activations = false;
};

/// Runs the graph in its current mode. Train mode updates batch-norm
/// running statistics and always keeps contexts.
template <typename T>
ForwardPass<T> forward(ModelGraph<T>& model, const Tensor<T>& batch, ForwardOptions options = {});

/// Inference-mode forward that leaves the model untouched.
template <typename T>
ForwardPass<T> predict(const ModelGraph<T>& model, const Tensor<T>& batch, ForwardOptions options = {});

template <typename T>
struct ModelGradients {
  /// Parameter gradients per layer index (empty for parameter-free layers).
  std::vector<std::vector<Tensor<T>>> layers;
  /// Gradient with respect to the input of layer `stop_layer`.
  Tensor<T> dx;
};

/// Backpropagates `dlogits` through contexts[stop_layer .. end).
template <typename T>
ModelGradients<T> backward(const ModelGraph<T>& model, std::vector<nn::LayerContext<T>>& contexts, const Tensor<T>& dlogits,
                           std::size_t stop_layer = 0);

/// Pointers to every trainable tensor in a fixed order (layer order, then
/// weight before bias). Matches the order of backward()'s gradients.
template <typename T>
std::vector<Tensor<T>*> trainable_tensors(ModelGraph<T>& model);

template <typename T>
bool all_finite(const ModelGraph<T>& model);

}  // namespace adenet::model
