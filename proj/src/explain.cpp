#include "adenet/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "adenet/error.hpp"
#include "adenet/train.hpp"

namespace adenet::explain {

using model::LayerType;

template <typename T>
std::size_t capture_layer(const model::ModelGraph<T>& model) {
  const std::size_t end = model.logits_end();
  std::size_t last_conv = end;
  for (std::size_t i = 0; i < end; ++i)
    if (model::is_conv(model.layers[i].type)) last_conv = i;
  if (last_conv == end) throw ArgumentError("gradcam: model '" + model.info.name + "' has no convolution layer");
  std::size_t capture = last_conv;
  for (std::size_t i = last_conv + 1; i < end; ++i) {
    const auto type = model.layers[i].type;
    if (type == LayerType::kBatchNorm) continue;
    if (type == LayerType::kRelu) capture = i;
    break;
  }
  return capture;
}

template <typename T>
CapturedGradients<T> capture_gradients(const model::ModelGraph<T>& model, const Tensor<T>& input, int target_class) {
  if (input.shape().n != 1) throw ShapeError("gradcam: expects a single input");
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= model.info.classes)
    throw ArgumentError("gradcam: class index " + std::to_string(target_class) + " out of range");
  CapturedGradients<T> out;
  out.layer = capture_layer(model);
  auto pass = model::predict(model, input, {.keep_contexts = true, .keep_activations = true});
  Tensor<T> onehot(pass.logits.shape());
  onehot[static_cast<std::size_t>(target_class)] = T(1);
  auto grads = model::backward(model, pass.contexts, onehot, out.layer + 1);
  out.activations = std::move(pass.activations[out.layer]);
  out.gradients = std::move(grads.dx);
  out.logits = std::move(pass.logits);
  return out;
}

template <typename T>
Tensor<T> logits_from_layer(const model::ModelGraph<T>& model, std::size_t layer, const Tensor<T>& activation) {
  model::ModelGraph<T> tail;
  tail.info = model.info;
  tail.info.in_channels = activation.shape().c;
  tail.info.fixed_input = 0;
  tail.layers.assign(model.layers.begin() + static_cast<std::ptrdiff_t>(layer + 1), model.layers.end());
  return model::predict(tail, activation).logits;
}

Tensor<float> crop_input(const model::Model& model, const Image& crop) {
  const data::Crop c{crop, data::kUndamaged};
  const std::size_t index = 0;
  return train::assemble_batch(model, std::span<const data::Crop>(&c, 1), std::span<const std::size_t>(&index, 1));
}

namespace {

double sample_bilinear(const std::vector<double>& raw, std::size_t rh, std::size_t rw, double fy, double fx) {
  fy = std::clamp(fy, 0.0, static_cast<double>(rh - 1));
  fx = std::clamp(fx, 0.0, static_cast<double>(rw - 1));
  const auto y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
  const std::size_t y1 = std::min(y0 + 1, rh - 1), x1 = std::min(x0 + 1, rw - 1);
  const double ty = fy - static_cast<double>(y0), tx = fx - static_cast<double>(x0);
  const double top = raw[y0 * rw + x0] * (1 - tx) + raw[y0 * rw + x1] * tx;
  const double bottom = raw[y1 * rw + x0] * (1 - tx) + raw[y1 * rw + x1] * tx;
  return top * (1 - ty) + bottom * ty;
}

// Source coordinate of output pixel `r` along one axis, `cell` output pixels
// per raw cell. The pixel holding each cell's centre samples that cell's
// value exactly and the mapping is linear inside the cell, so the raw peak
// is reproduced inside its own footprint.
double source_coordinate(std::size_t r, double cell, std::size_t cells) {
  const double centre = static_cast<double>(r) + 0.5;
  const auto i = std::min(static_cast<std::size_t>(centre / cell), cells - 1);
  const double anchor = std::floor((static_cast<double>(i) + 0.5) * cell);
  return static_cast<double>(i) + (static_cast<double>(r) - anchor) / cell;
}

}  // namespace

template <typename T>
Heatmap gradcam(const model::ModelGraph<T>& model, const Image& crop, int target_class, const GradCamOptions& options) {
  if (crop.width < 8 || crop.height < 8) throw ArgumentError("gradcam: crop must be at least 8x8");
  const model::Model shape_model = [&] {
    model::Model m;
    m.info = model.info;
    return m;
  }();
  const Tensor<T> input = crop_input(shape_model, crop).template cast<T>();
  const auto captured = capture_gradients(model, input, target_class);
  const Shape& s = captured.activations.shape();

  Heatmap map;
  map.model_id = model.info.name;
  map.crop_id = options.crop_id;
  map.target_class = target_class;
  map.raw_height = s.h;
  map.raw_width = s.w;
  map.raw.assign(s.spatial(), 0.0);
  for (std::size_t k = 0; k < s.c; ++k) {
    double weight = 0.0;
    for (std::size_t i = 0; i < s.spatial(); ++i) weight += static_cast<double>(captured.gradients[k * s.spatial() + i]);
    weight /= static_cast<double>(s.spatial());
    for (std::size_t i = 0; i < s.spatial(); ++i) map.raw[i] += weight * static_cast<double>(captured.activations[k * s.spatial() + i]);
  }
  double peak = 0.0;
  for (double& v : map.raw) {
    v = std::max(v, 0.0);
    peak = std::max(peak, v);
  }
  if (peak > 0.0)
    for (double& v : map.raw) v /= peak;

  // The raw grid covers the whole model input; for padded inputs only the
  // top-left crop region is kept.
  const Shape& in = input.shape();
  const double scale_y = static_cast<double>(s.h) / static_cast<double>(model.info.fixed_input ? crop.height : in.h);
  const double scale_x = static_cast<double>(s.w) / static_cast<double>(model.info.fixed_input ? crop.width : in.w);
  map.height = crop.height;
  map.width = crop.width;
  map.values.resize(crop.height * crop.width);
  for (std::size_t r = 0; r < crop.height; ++r)
    for (std::size_t c = 0; c < crop.width; ++c) {
      double v;
      if (options.upsampling == Upsampling::kNearest) {
        const double fy = (static_cast<double>(r) + 0.5) * scale_y, fx = (static_cast<double>(c) + 0.5) * scale_x;
        const auto ry = std::min(static_cast<std::size_t>(fy), s.h - 1), rx = std::min(static_cast<std::size_t>(fx), s.w - 1);
        v = map.raw[ry * s.w + rx];
      } else {
        v = sample_bilinear(map.raw, s.h, s.w, source_coordinate(r, 1.0 / scale_y, s.h), source_coordinate(c, 1.0 / scale_x, s.w));
      }
      map.values[r * crop.width + c] = std::clamp(v, 0.0, 1.0);
    }
  return map;
}

std::array<double, 3> jet(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto ramp = [](double x) { return std::clamp(1.5 - std::abs(x), 0.0, 1.0); };
  return {ramp(4.0 * t - 3.0), ramp(4.0 * t - 2.0), ramp(4.0 * t - 1.0)};
}

Image overlay(const Heatmap& heatmap, const Image& crop, double alpha) {
  if (heatmap.height != crop.height || heatmap.width != crop.width)
    throw ArgumentError("overlay: heatmap " + std::to_string(heatmap.width) + "x" + std::to_string(heatmap.height) +
                        " does not match crop " + std::to_string(crop.width) + "x" + std::to_string(crop.height));
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("overlay: alpha must be in [0, 1]");
  Image out(crop.width, crop.height);
  for (std::size_t y = 0; y < crop.height; ++y)
    for (std::size_t x = 0; x < crop.width; ++x) {
      const auto color = jet(heatmap.at(y, x));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = (1.0 - alpha) * crop.at(x, y, ch) + alpha * 255.0 * color[ch];
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  return out;
}

void write_overlay(const Heatmap& heatmap, const Image& crop, const std::filesystem::path& path, double alpha) {
  save_png(overlay(heatmap, crop, alpha), path);
}

void write_heatmap_csv(const Heatmap& heatmap, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < heatmap.raw_height; ++r) {
    for (std::size_t c = 0; c < heatmap.raw_width; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", heatmap.raw_at(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

double localization_score(const Heatmap& heatmap, const data::BBox& bbox) {
  if (bbox.w == 0 || bbox.h == 0) throw ArgumentError("localization_score: degenerate bbox");
  if (bbox.x + bbox.w > heatmap.width || bbox.y + bbox.h > heatmap.height)
    throw ArgumentError("localization_score: bbox outside the heatmap");
  const std::size_t total = heatmap.values.size();
  const auto top = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(total)));
  std::vector<double> sorted = heatmap.values;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top - 1), sorted.end(), std::greater<>());
  const double cutoff = sorted[top - 1];
  std::size_t above = 0, tied = 0;
  for (double v : heatmap.values) {
    if (v > cutoff) ++above;
    else if (v == cutoff) ++tied;
  }
  const double tie_share = static_cast<double>(top - above) / static_cast<double>(tied);
  double inside = 0.0;
  for (std::size_t r = bbox.y; r < bbox.y + bbox.h; ++r)
    for (std::size_t c = bbox.x; c < bbox.x + bbox.w; ++c) {
      const double v = heatmap.at(r, c);
      if (v > cutoff) inside += 1.0;
      else if (v == cutoff) inside += tie_share;
    }
  const double top_fraction = inside / static_cast<double>(top);
  const double area_fraction = static_cast<double>(bbox.area()) / static_cast<double>(total);
  return top_fraction / area_fraction;
}

#define ADENET_INSTANTIATE_EXPLAIN(T)                                                                              \
  template std::size_t capture_layer(const model::ModelGraph<T>&);                                                 \
  template CapturedGradients<T> capture_gradients(const model::ModelGraph<T>&, const Tensor<T>&, int);             \
  template Tensor<T> logits_from_layer(const model::ModelGraph<T>&, std::size_t, const Tensor<T>&);                \
  template Heatmap gradcam(const model::ModelGraph<T>&, const Image&, int, const GradCamOptions&);

ADENET_INSTANTIATE_EXPLAIN(float)
ADENET_INSTANTIATE_EXPLAIN(double)

}  // namespace adenet::explain
