#include "adenet/model.hpp"

#include <cmath>

#include "adenet/error.hpp"
#include "adenet/rng.hpp"

namespace adenet::model {

std::string_view layer_type_name(LayerType type) {
  switch (type) {
    case LayerType::kConv3x3Same: return "conv3x3-same";
    case LayerType::kConv5x5Valid: return "conv5x5-valid";
    case LayerType::kBatchNorm: return "batchnorm";
    case LayerType::kRelu: return "relu";
    case LayerType::kMaxPool2: return "maxpool2";
    case LayerType::kAvgPool2: return "avgpool2";
    case LayerType::kGlobalAvgPool: return "global-avg-pool";
    case LayerType::kFlatten: return "flatten";
    case LayerType::kDense: return "dense";
    case LayerType::kSoftmax: return "softmax";
  }
  return "unknown";
}

bool is_conv(LayerType type) { return type == LayerType::kConv3x3Same || type == LayerType::kConv5x5Valid; }

template <typename T>
std::size_t ModelGraph<T>::logits_end() const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].type == LayerType::kSoftmax) return i;
  return layers.size();
}

namespace {

Tensor<float> he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<float> t(shape);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal() * stddev);
  return t;
}

}  // namespace

void append_layer(Model& model, LayerType type, std::size_t in, std::size_t out, std::uint64_t seed) {
  LayerSpec<float> layer;
  layer.type = type;
  layer.in = in;
  layer.out = out;
  Rng rng(derive_seed(seed, model.layers.size()));
  switch (type) {
    case LayerType::kConv3x3Same:
    case LayerType::kConv5x5Valid: {
      const std::size_t k = type == LayerType::kConv3x3Same ? 3 : 5;
      layer.weight = he_normal(Shape{out, in, k, k}, in * k * k, rng);
      layer.bias = Tensor<float>::vector(out);
      break;
    }
    case LayerType::kDense:
      layer.weight = he_normal(Shape{in, out, 1, 1}, in, rng);
      layer.bias = Tensor<float>::vector(out);
      break;
    case LayerType::kBatchNorm:
      layer.out = in;
      layer.weight = Tensor<float>::vector(in, 1.0f);
      layer.bias = Tensor<float>::vector(in);
      layer.running_mean = Tensor<float>::vector(in);
      layer.running_var = Tensor<float>::vector(in, 1.0f);
      break;
    default:
      break;
  }
  model.layers.push_back(std::move(layer));
}

Model build_adenet(std::size_t in_channels, bool with_batchnorm, std::uint64_t seed) {
  if (in_channels == 0) throw ArgumentError("build_adenet: in_channels must be at least 1");
  Model m;
  m.info = {with_batchnorm ? "adenet" : "adenet-nobn", in_channels, 2, seed, 0};
  std::size_t channels = in_channels;
  for (std::size_t width : {32u, 64u, 128u}) {
    append_layer(m, LayerType::kConv3x3Same, channels, width, seed);
    if (with_batchnorm) append_layer(m, LayerType::kBatchNorm, width, width, seed);
    append_layer(m, LayerType::kRelu, width, width, seed);
    append_layer(m, LayerType::kMaxPool2, width, width, seed);
    channels = width;
  }
  append_layer(m, LayerType::kGlobalAvgPool, channels, channels, seed);
  append_layer(m, LayerType::kDense, channels, 64, seed);
  append_layer(m, LayerType::kRelu, 64, 64, seed);
  append_layer(m, LayerType::kDense, 64, 2, seed);
  append_layer(m, LayerType::kSoftmax, 2, 2, seed);
  return m;
}

Model build_lenet5(std::size_t in_channels, std::uint64_t seed) {
  if (in_channels == 0) throw ArgumentError("build_lenet5: in_channels must be at least 1");
  Model m;
  m.info = {"lenet5", in_channels, 2, seed, 32};
  append_layer(m, LayerType::kConv5x5Valid, in_channels, 6, seed);
  append_layer(m, LayerType::kRelu, 6, 6, seed);
  append_layer(m, LayerType::kAvgPool2, 6, 6, seed);
  append_layer(m, LayerType::kConv5x5Valid, 6, 16, seed);
  append_layer(m, LayerType::kRelu, 16, 16, seed);
  append_layer(m, LayerType::kAvgPool2, 16, 16, seed);
  append_layer(m, LayerType::kFlatten, 16, 400, seed);
  append_layer(m, LayerType::kDense, 400, 120, seed);
  append_layer(m, LayerType::kRelu, 120, 120, seed);
  append_layer(m, LayerType::kDense, 120, 84, seed);
  append_layer(m, LayerType::kRelu, 84, 84, seed);
  append_layer(m, LayerType::kDense, 84, 2, seed);
  append_layer(m, LayerType::kSoftmax, 2, 2, seed);
  return m;
}

template <typename T>
ParamCount count_params(const ModelGraph<T>& model) {
  ParamCount count;
  for (const auto& l : model.layers) {
    switch (l.type) {
      case LayerType::kConv3x3Same:
      case LayerType::kConv5x5Valid:
      case LayerType::kDense:
      case LayerType::kBatchNorm:
        count.trainable += l.weight.size() + l.bias.size();
        count.non_trainable += l.running_mean.size() + l.running_var.size();
        break;
      default:
        break;
    }
  }
  return count;
}

template <typename T>
std::vector<Shape> shape_chain(const ModelGraph<T>& model, Shape s) {
  std::vector<Shape> chain;
  chain.reserve(model.layers.size());
  if (s.c != model.info.in_channels)
    throw ShapeError("input has " + std::to_string(s.c) + " channels, model expects " + std::to_string(model.info.in_channels));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    auto fail = [&](const std::string& why) {
      throw ShapeError("layer " + std::to_string(i) + " (" + std::string(layer_type_name(l.type)) + "): " + why +
                       " for input " + s.str());
    };
    switch (l.type) {
      case LayerType::kConv3x3Same:
        if (s.c != l.in) fail("channel mismatch");
        s.c = l.out;
        break;
      case LayerType::kConv5x5Valid:
        if (s.c != l.in) fail("channel mismatch");
        if (s.h < 5 || s.w < 5) fail("spatial extent below kernel size");
        s = Shape{s.n, l.out, s.h - 4, s.w - 4};
        break;
      case LayerType::kBatchNorm:
      case LayerType::kRelu:
        if (l.type == LayerType::kBatchNorm && s.c != l.in) fail("channel mismatch");
        break;
      case LayerType::kMaxPool2:
      case LayerType::kAvgPool2:
        if (s.h < 2 || s.w < 2) fail("spatial extent below 2");
        s.h /= 2;
        s.w /= 2;
        break;
      case LayerType::kGlobalAvgPool:
        if (s.spatial() == 0) fail("empty spatial extent");
        s.h = s.w = 1;
        break;
      case LayerType::kFlatten:
        s = Shape{s.n, s.per_sample(), 1, 1};
        break;
      case LayerType::kDense:
        if (s.h != 1 || s.w != 1 || s.c != l.in) fail("expects " + std::to_string(l.in) + " features");
        s.c = l.out;
        break;
      case LayerType::kSoftmax:
        if (s.h != 1 || s.w != 1) fail("expects flat logits");
        break;
    }
    chain.push_back(s);
  }
  return chain;
}

template <typename T>
std::size_t min_input_size(const ModelGraph<T>& model) {
  if (model.info.fixed_input) return model.info.fixed_input;
  for (std::size_t size = 1; size <= 1024; ++size) {
    try {
      shape_chain(model, Shape{1, model.info.in_channels, size, size});
      return size;
    } catch (const ShapeError&) {
    }
  }
  throw ShapeError("model accepts no input up to 1024x1024");
}

namespace {

template <typename T>
nn::Forward<T> run_layer(LayerSpec<T>& l, const Tensor<T>& x, nn::Mode mode) {
  switch (l.type) {
    case LayerType::kConv3x3Same:
      return nn::conv2d_forward(x, l.weight, l.bias, nn::Padding::kSame);
    case LayerType::kConv5x5Valid:
      return nn::conv2d_forward(x, l.weight, l.bias, nn::Padding::kValid);
    case LayerType::kBatchNorm:
      return nn::batchnorm_forward<T>(x, l.weight.span(), l.bias.span(), l.running_mean.span(), l.running_var.span(), mode);
    case LayerType::kRelu:
      return nn::relu_forward(x);
    case LayerType::kMaxPool2:
      return nn::maxpool2_forward(x);
    case LayerType::kAvgPool2:
      return nn::avgpool2_forward(x);
    case LayerType::kGlobalAvgPool:
      return nn::global_avg_pool_forward(x);
    case LayerType::kFlatten:
      return nn::flatten_forward(x);
    case LayerType::kDense:
      return nn::dense_forward(x, l.weight, l.bias);
    case LayerType::kSoftmax:
      break;
  }
  throw ArgumentError("run_layer: softmax is applied outside the layer loop");
}

template <typename T>
ForwardPass<T> run_graph(ModelGraph<T>& model, const Tensor<T>& batch, nn::Mode mode, ForwardOptions options) {
  const Shape& s = batch.shape();
  if (s.n == 0) throw ShapeError("forward: empty batch");
  if (model.info.fixed_input && (s.h != model.info.fixed_input || s.w != model.info.fixed_input))
    throw ShapeError("forward: " + model.info.name + " expects " + std::to_string(model.info.fixed_input) + "x" +
                     std::to_string(model.info.fixed_input) + " input, got " + s.str());
  shape_chain(model, s);

  const bool keep_contexts = mode == nn::Mode::kTrain || options.keep_contexts;
  ForwardPass<T> pass;
  const std::size_t end = model.logits_end();
  Tensor<T> x = batch;
  for (std::size_t i = 0; i < end; ++i) {
    nn::Forward<T> f = run_layer(model.layers[i], x, mode);
    if (keep_contexts) pass.contexts.push_back(std::move(f.ctx));
    if (options.keep_activations) pass.activations.push_back(f.y);
    x = std::move(f.y);
  }
  if (!x.all_finite()) throw NumericError("forward: non-finite logits in " + model.info.name);
  pass.probs = nn::softmax(x);
  pass.logits = std::move(x);
  return pass;
}

}  // namespace

template <typename T>
ForwardPass<T> forward(ModelGraph<T>& model, const Tensor<T>& batch, ForwardOptions options) {
  return run_graph(model, batch, model.mode, options);
}

template <typename T>
ForwardPass<T> predict(const ModelGraph<T>& model, const Tensor<T>& batch, ForwardOptions options) {
  // Infer mode never writes to the layers.
  return run_graph(const_cast<ModelGraph<T>&>(model), batch, nn::Mode::kInfer, options);
}

template <typename T>
ModelGradients<T> backward(const ModelGraph<T>& model, std::vector<nn::LayerContext<T>>& contexts, const Tensor<T>& dlogits,
                           std::size_t stop_layer) {
  if (contexts.size() != model.logits_end()) throw ArgumentError("backward: context count does not match the model");
  if (stop_layer > contexts.size()) throw ArgumentError("backward: stop layer out of range");
  ModelGradients<T> grads;
  grads.layers.resize(model.layers.size());
  Tensor<T> dy = dlogits;
  for (std::size_t i = contexts.size(); i-- > stop_layer;) {
    nn::Gradients<T> g = nn::layer_vjp(contexts[i], dy);
    grads.layers[i] = std::move(g.params);
    dy = std::move(g.dx);
  }
  grads.dx = std::move(dy);
  return grads;
}

template <typename T>
std::vector<Tensor<T>*> trainable_tensors(ModelGraph<T>& model) {
  std::vector<Tensor<T>*> out;
  for (auto& l : model.layers) {
    if (is_conv(l.type) || l.type == LayerType::kDense || l.type == LayerType::kBatchNorm) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

template <typename T>
bool all_finite(const ModelGraph<T>& model) {
  for (const auto& l : model.layers)
    if (!l.weight.all_finite() || !l.bias.all_finite() || !l.running_mean.all_finite() || !l.running_var.all_finite())
      return false;
  return true;
}

#define ADENET_INSTANTIATE_MODEL(T)                                                                              \
  template struct ModelGraph<T>;                                                                                 \
  template ParamCount count_params(const ModelGraph<T>&);                                                        \
  template std::vector<Shape> shape_chain(const ModelGraph<T>&, Shape);                                          \
  template std::size_t min_input_size(const ModelGraph<T>&);                                                     \
  template ForwardPass<T> forward(ModelGraph<T>&, const Tensor<T>&, ForwardOptions);                             \
  template ForwardPass<T> predict(const ModelGraph<T>&, const Tensor<T>&, ForwardOptions);                       \
  template ModelGradients<T> backward(const ModelGraph<T>&, std::vector<nn::LayerContext<T>>&, const Tensor<T>&, \
                                      std::size_t);                                                              \
  template std::vector<Tensor<T>*> trainable_tensors(ModelGraph<T>&);                                            \
  template bool all_finite(const ModelGraph<T>&);

ADENET_INSTANTIATE_MODEL(float)
ADENET_INSTANTIATE_MODEL(double)

}  // namespace adenet::model
