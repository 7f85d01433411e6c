#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "adenet/error.hpp"
#include "adenet/features.hpp"
#include "adenet/rng.hpp"

using namespace adenet;
using namespace adenet::features;

namespace {

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// T_k at the i-th of n Chebyshev nodes, from the trigonometric definition.
double cheb_at_node(std::size_t k, std::size_t i, std::size_t n) {
  const double x = -std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
  return std::cos(static_cast<double>(k) * std::acos(x));
}

}  // namespace

TEST_CASE("feature names match the vector length") {
  CHECK(feature_names().size() == kFeatureCount);
  CHECK(kFeatureCount == 68);
  CHECK(feature_names().front() == "hist_s1_b0");
}

TEST_CASE("Chebyshev coefficients match a direct double-sum projection") {
  const auto img = random_image(16, 16, 3);
  const auto plane = gray_plane(img);
  const auto c = chebyshev_coefficients(plane);
  REQUIRE(c.size() == 16);
  for (std::size_t m = 0; m < 16; ++m)
    for (std::size_t n = 0; n < 16; ++n) {
      double s = 0;
      for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t q = 0; q < 16; ++q) s += plane.at(r, q) * cheb_at_node(m, r, 16) * cheb_at_node(n, q, 16);
      s *= (m ? 2.0 : 1.0) / 16 * (n ? 2.0 : 1.0) / 16;
      CHECK(std::abs(c[m][n] - s) <= 1e-6);
    }
}

TEST_CASE("Chebyshev reconstruction is exact at full order") {
  const auto plane = gray_plane(random_image(7, 5, 4));
  const auto c = chebyshev_coefficients(plane, 32);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t q = 0; q < 7; ++q) {
      double v = 0;
      for (std::size_t m = 0; m < 5; ++m)
        for (std::size_t n = 0; n < 7; ++n) v += c[m][n] * cheb_at_node(m, r, 5) * cheb_at_node(n, q, 7);
      CHECK(v == doctest::Approx(plane.at(r, q)).epsilon(1e-9));
    }
}

TEST_CASE("constant image: one bin per histogram, only the DC coefficient") {
  const Image img(23, 17, 120);
  const auto c = chebyshev_coefficients(gray_plane(img));
  for (std::size_t m = 0; m < c.size(); ++m)
    for (std::size_t n = 0; n < c[m].size(); ++n) {
      if (m == 0 && n == 0)
        CHECK(c[m][n] == doctest::Approx(120.0));
      else
        CHECK(std::abs(c[m][n]) < 1e-9);
    }
  const auto f = extract_features(img);
  std::size_t offset = 0;
  auto check_block = [&](std::size_t bins) {
    std::size_t nonzero = 0;
    double sum = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      nonzero += f[offset + b] != 0.0;
      sum += f[offset + b];
    }
    CHECK(nonzero == 1);
    CHECK(sum == doctest::Approx(1.0));
    offset += bins;
  };
  for (std::size_t s = 0; s < kHistogramScales; ++s) check_block(kHistogramBins);
  check_block(kChebyshevBins);
  for (std::size_t a = 0; a < kRadonAngles; ++a) check_block(kRadonBins);
  CHECK(offset == kFeatureCount);
}

TEST_CASE("Radon projections are line means") {
  Plane p{3, 2, {1, 2, 3, 4, 5, 6}};
  const auto r = radon_projections(p);
  CHECK(r[0] == std::vector<double>{2.5, 3.5, 4.5});
  CHECK(r[2] == std::vector<double>{2, 5});
  CHECK(r[1] == std::vector<double>{1, 3, 4, 6});  // r + c constant
  CHECK(r[3] == std::vector<double>{4, 3, 4, 3});  // c - r constant
}

TEST_CASE("histogram edges") {
  const std::vector<double> v = {0.0, 0.5, 1.0, 1.0};
  CHECK(histogram(v, 2, 0.0, 1.0) == std::vector<double>{0.25, 0.75});
  CHECK(histogram(v, 3, 2.0, 2.0) == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("downsample keeps partial edge blocks") {
  Plane p{3, 1, {2, 4, 9}};
  const auto d = downsample(p, 2);
  CHECK(d.width == 2);
  CHECK(d.values == std::vector<double>{3, 9});
}

TEST_CASE("extraction is deterministic and rejects one-pixel crops") {
  const auto img = random_image(30, 20, 5);
  CHECK(extract_features(img) == extract_features(img));
  CHECK_THROWS_AS(extract_features(Image(1, 1, 9)), ArgumentError);
}

TEST_CASE("feature CSV round trip") {
  std::vector<FeatureVector> rows = {extract_features(random_image(12, 9, 6)), extract_features(random_image(9, 12, 7))};
  std::vector<int> labels = {1, 0};
  const auto path = std::filesystem::temp_directory_path() / "adenet_features_test.csv";
  write_feature_csv(path, rows, labels);
  std::vector<FeatureVector> back;
  std::vector<int> back_labels;
  read_feature_csv(path, back, back_labels);
  CHECK(back == rows);
  CHECK(back_labels == labels);
  std::filesystem::remove(path);
}
