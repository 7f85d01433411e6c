#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "adenet/error.hpp"
#include "adenet/explain.hpp"
#include "adenet/rng.hpp"

using namespace adenet;
using namespace adenet::explain;

namespace {

Image random_image(std::size_t w, std::size_t h, Rng& rng) {
  Image img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Heatmap flat_heatmap(std::size_t w, std::size_t h, double v) {
  Heatmap m;
  m.width = w, m.height = h;
  m.values.assign(w * h, v);
  m.raw_width = 1, m.raw_height = 1;
  m.raw = {v};
  return m;
}

}  // namespace

TEST_CASE("capture layer is the activation after the last convolution") {
  const auto net = model::build_adenet(3, true, 1);
  const auto layer = capture_layer(net);
  CHECK(net.layers[layer].type == model::LayerType::kRelu);
  CHECK(net.layers[layer + 1].type == model::LayerType::kMaxPool2);
  const auto plain = model::build_adenet(3, false, 1);
  CHECK(plain.layers[capture_layer(plain)].type == model::LayerType::kRelu);
}

TEST_CASE("captured gradients match finite differences of the tail logits") {
  Rng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    auto net = model::build_adenet(3, true, derive_seed(3, trial)).cast<double>();
    net.mode = nn::Mode::kInfer;
    // Non-trivial running statistics so inference-mode BN is exercised.
    for (auto& l : net.layers)
      if (l.type == model::LayerType::kBatchNorm)
        for (std::size_t c = 0; c < l.out; ++c) {
          l.running_mean[c] = rng.uniform(-0.1, 0.1);
          l.running_var[c] = rng.uniform(0.5, 2.0);
        }
    Tensor<double> x(1, 3, 16, 16);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    const int target = trial % 2;
    const auto cap = capture_gradients(net, x, target);
    const auto logits = logits_from_layer(net, cap.layer, cap.activations);
    CHECK(logits[target] == doctest::Approx(cap.logits[target]).epsilon(1e-12));

    double num = 0, den = 0;
    for (int probe = 0; probe < 40; ++probe) {
      const std::size_t i = rng.below(cap.activations.size());
      if (cap.activations[i] < 1e-3) continue;  // stay off the ReLU kink
      auto a = cap.activations;
      a[i] += 1e-5;
      const double up = logits_from_layer(net, cap.layer, a)[target];
      a[i] -= 2e-5;
      const double down = logits_from_layer(net, cap.layer, a)[target];
      const double fd = (up - down) / 2e-5;
      num += (fd - cap.gradients[i]) * (fd - cap.gradients[i]);
      den += fd * fd + cap.gradients[i] * cap.gradients[i];
    }
    CHECK(std::sqrt(num) <= 1e-4 * std::max(1e-12, std::sqrt(den)));
  }
}

TEST_CASE("heatmaps stay in [0, 1], including a model with zero gradients") {
  Rng rng(4);
  auto dead = model::build_adenet(3, true, 2);
  for (auto& l : dead.layers)
    if (l.type == model::LayerType::kDense) l.weight.fill(0.0f);
  auto live = model::build_adenet(3, true, 5);
  for (int i = 0; i < 20; ++i) {
    const auto img = random_image(9 + rng.below(30), 9 + rng.below(30), rng);
    for (const model::Model* net : {&dead, &live}) {
      const auto h = gradcam(*net, img, i % 2);
      CHECK(h.width == img.width);
      CHECK(h.height == img.height);
      CHECK(std::all_of(h.values.begin(), h.values.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
      CHECK(std::all_of(h.raw.begin(), h.raw.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
    }
    const auto zero = gradcam(dead, img, 1);
    CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](double v) { return v == 0.0; }));
  }
}

TEST_CASE("gradcam is deterministic and upsampling keeps the peak in its cell") {
  Rng rng(6);
  const auto net = model::build_adenet(3, true, 8);
  for (int i = 0; i < 10; ++i) {
    const auto img = random_image(32, 24, rng);
    const auto a = gradcam(net, img, 1);
    CHECK(a.values == gradcam(net, img, 1).values);
    // 32x24 needs no padding; the captured map is 8x6, so cells are 4x4.
    REQUIRE(a.raw_width == 8);
    const auto raw_peak = std::max_element(a.raw.begin(), a.raw.end()) - a.raw.begin();
    const auto peak = std::max_element(a.values.begin(), a.values.end()) - a.values.begin();
    CHECK(static_cast<std::size_t>(peak) / 32 / 4 == static_cast<std::size_t>(raw_peak) / 8);
    CHECK(static_cast<std::size_t>(peak) % 32 / 4 == static_cast<std::size_t>(raw_peak) % 8);
    const auto n = gradcam(net, img, 1, {.upsampling = Upsampling::kNearest});
    CHECK(n.at(5, 6) == n.raw_at(1, 1));
  }
}

TEST_CASE("localization score") {
  const data::BBox box{2, 3, 4, 5};
  CHECK(localization_score(flat_heatmap(10, 10, 0.3), box) == doctest::Approx(1.0));
  CHECK(localization_score(flat_heatmap(10, 10, 0.0), box) == doctest::Approx(1.0));
  auto inside = flat_heatmap(10, 10, 0.0);
  for (std::size_t r = 3; r < 8; ++r)
    for (std::size_t c = 2; c < 6; ++c) inside.values[r * 10 + c] = 1.0;
  CHECK(localization_score(inside, box) == doctest::Approx(100.0 / 20.0));
  CHECK_THROWS_AS(localization_score(inside, {8, 8, 4, 4}), ArgumentError);
  CHECK_THROWS_AS(localization_score(inside, {1, 1, 0, 3}), ArgumentError);
}

TEST_CASE("overlay blending") {
  Rng rng(7);
  const auto img = random_image(6, 5, rng);
  const auto zero = flat_heatmap(6, 5, 0.0);
  CHECK(overlay(zero, img, 0.0) == img);
  const auto low = jet(0.0);
  const auto out = overlay(zero, img, 0.4);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(std::abs(out.pixels[i] - (0.6 * img.pixels[i] + 0.4 * 255.0 * low[i % 3])) <= 0.5 + 1e-9);
  CHECK_THROWS_AS(overlay(zero, img, 1.5), ArgumentError);
  CHECK_THROWS_AS(overlay(flat_heatmap(5, 5, 0.0), img, 0.4), ArgumentError);
}

TEST_CASE("jet endpoints") {
  const auto lo = jet(0.0), hi = jet(1.0), mid = jet(0.5);
  CHECK(lo[2] > lo[0]);
  CHECK(hi[0] > hi[2]);
  CHECK(mid[1] == doctest::Approx(1.0));
}
