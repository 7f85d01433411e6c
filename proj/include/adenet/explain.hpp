#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adenet/data.hpp"
#include "adenet/image.hpp"
#include "adenet/model.hpp"

namespace adenet::explain {

enum class Upsampling { kBilinear, kNearest };

/// Grad-CAM map normalized to [0, 1]: `raw` at the captured layer's
/// resolution and `values` resampled to the crop size.
struct Heatmap {
  std::size_t raw_height = 0, raw_width = 0;
  std::vector<double> raw;
  std::size_t height = 0, width = 0;
  std::vector<double> values;

  std::string model_id;
  std::size_t crop_id = 0;
  int target_class = data::kDamaged;

  double raw_at(std::size_t r, std::size_t c) const { return raw[r * raw_width + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

struct GradCamOptions {
  Upsampling upsampling = Upsampling::kBilinear;
  std::size_t crop_id = 0;
};

/// Layer whose output Grad-CAM reads: the activation following the last
/// convolution (after its batch norm and ReLU, before pooling).
template <typename T>
std::size_t capture_layer(const model::ModelGraph<T>& model);

template <typename T>
struct CapturedGradients {
  std::size_t layer = 0;
  Tensor<T> activations;  // (1, K, h, w)
  Tensor<T> gradients;    // d(target logit) / d(activations)
  Tensor<T> logits;
};

/// Inference-mode forward plus backward from the one-hot target logit to
/// the captured activation.
template <typename T>
CapturedGradients<T> capture_gradients(const model::ModelGraph<T>& model, const Tensor<T>& input, int target_class);

/// Logits obtained by feeding `activation` into the layers after `layer`.
template <typename T>
Tensor<T> logits_from_layer(const model::ModelGraph<T>& model, std::size_t layer, const Tensor<T>& activation);

/// Model input for one crop: zero-padded to a multiple of 8 for
/// variable-size models, resampled for fixed-size ones.
Tensor<float> crop_input(const model::Model& model, const Image& crop);

template <typename T>
Heatmap gradcam(const model::ModelGraph<T>& model, const Image& crop, int target_class, const GradCamOptions& options = {});

/// Jet colormap value for t in [0, 1] as RGB in [0, 1].
std::array<double, 3> jet(double t);

/// Alpha-blends the jet-colored heatmap over the crop.
Image overlay(const Heatmap& heatmap, const Image& crop, double alpha = 0.4);
void write_overlay(const Heatmap& heatmap, const Image& crop, const std::filesystem::path& path, double alpha = 0.4);

void write_heatmap_csv(const Heatmap& heatmap, const std::filesystem::path& path);

/// (fraction of top-decile heatmap mass inside `bbox`) / (bbox area
/// fraction), with `bbox` in crop coordinates. Pixels tied at the decile
/// cut-off share the remaining slots equally, so a constant map scores
/// exactly 1.
double localization_score(const Heatmap& heatmap, const data::BBox& bbox);

}  // namespace adenet::explain
