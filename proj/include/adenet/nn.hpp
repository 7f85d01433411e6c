#pragma once

// Forward and backward kernels for the layer kinds used by AdeNet and
// LeNet-5. Every forward returns its output plus a LayerContext holding
// whatever the backward pass needs; layer_vjp consumes that context once.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "adenet/tensor.hpp"

namespace adenet::nn {

enum class LayerKind : std::uint8_t {
  kConv,
  kBatchNorm,
  kRelu,
  kMaxPool2,
  kAvgPool2,
  kGlobalAvgPool,
  kFlatten,
  kDense,
};

enum class Mode : std::uint8_t { kTrain, kInfer };

enum class Padding : std::uint8_t { kSame, kValid };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

template <typename T>
struct LayerContext {
  LayerKind kind{};
  Shape in_shape;
  Shape out_shape;
  bool consumed = false;

  Tensor<T> input;   // conv, relu, dense
  Tensor<T> weight;  // conv [co,ci,k,k], dense [d,k]
  std::size_t pad = 0;

  std::vector<std::uint32_t> argmax;  // maxpool2: flat input index per output

  // batch norm
  Mode mode = Mode::kTrain;
  Tensor<T> normalized;
  std::vector<T> mean, var, inv_std, gamma, beta;
};

template <typename T>
struct Forward {
  Tensor<T> y;
  LayerContext<T> ctx;
};

template <typename T>
struct Gradients {
  Tensor<T> dx;
  /// conv/dense: {dW, db}; batch norm: {dgamma, dbeta}; otherwise empty.
  std::vector<Tensor<T>> params;
};

/// Stride-1 cross-correlation. `w` is [co, ci, k, k], `b` is [co] (stored
/// as (1, co, 1, 1)). Same padding requires an odd kernel.
template <typename T>
Forward<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Padding padding = Padding::kSame);

/// Train mode normalizes with biased batch statistics and updates the
/// running statistics in place: running = momentum * running + (1 - momentum) * batch.
template <typename T>
Forward<T> batchnorm_forward(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, Mode mode,
                             double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

/// Recovers the batch-norm input from its output using the statistics
/// recorded in a train-mode context. Requires nonzero gamma.
template <typename T>
Tensor<T> batchnorm_inverse(const Tensor<T>& y, const LayerContext<T>& ctx);

template <typename T>
Forward<T> relu_forward(const Tensor<T>& x);

/// 2x2 window, stride 2, floor on odd extents. Ties go to the smallest
/// row-major index within the window.
template <typename T>
Forward<T> maxpool2_forward(const Tensor<T>& x);

template <typename T>
Forward<T> avgpool2_forward(const Tensor<T>& x);

template <typename T>
Forward<T> global_avg_pool_forward(const Tensor<T>& x);

/// (n, c, h, w) -> (n, c*h*w, 1, 1); the data is unchanged.
template <typename T>
Forward<T> flatten_forward(const Tensor<T>& x);

/// y = x * w + b with x as (n, d), w as (d, k) and b as (1, k).
template <typename T>
Forward<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct XentResult {
  T loss{};
  Tensor<T> probs;
  Tensor<T> dlogits;
};

/// Mean over samples of class_weight[label] * -log p[label]; dlogits is
/// its exact gradient: weight * (probs - onehot) / n.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels,
                           std::optional<std::array<T, 2>> class_weights = std::nullopt);

/// Vector-Jacobian product for the layer that produced `ctx`. Marks the
/// context consumed; a second call throws.
template <typename T>
Gradients<T> layer_vjp(LayerContext<T>& ctx, const Tensor<T>& dy);

}  // namespace adenet::nn
