#pragma once

// Handcrafted descriptors for the shallow baseline: multi-scale intensity
// histograms, a histogram of 2-D Chebyshev coefficients and summaries of
// Radon line projections. All computed on luma.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adenet/image.hpp"

namespace adenet::features {

/// Bump whenever the feature order or definition changes.
inline constexpr int kFeatureVersion = 1;

inline constexpr std::size_t kHistogramScales = 3;  // 1, 1/2, 1/4
inline constexpr std::size_t kHistogramBins = 8;
inline constexpr std::size_t kChebyshevOrder = 20;
inline constexpr std::size_t kChebyshevBins = 32;
inline constexpr std::size_t kRadonAngles = 4;  // 0, 45, 90, 135 degrees
inline constexpr std::size_t kRadonBins = 3;
inline constexpr std::size_t kFeatureCount =
    kHistogramScales * kHistogramBins + kChebyshevBins + kRadonAngles * kRadonBins;

using FeatureVector = std::array<double, kFeatureCount>;

const std::vector<std::string>& feature_names();

/// Gray plane, row-major.
struct Plane {
  std::size_t width = 0, height = 0;
  std::vector<double> values;
  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

Plane gray_plane(const Image& image);

/// Box-filter downsample by an integer factor (partial edge blocks kept).
Plane downsample(const Plane& plane, std::size_t factor);

/// Coefficients c[m][n], m, n < min(order, height/width), of the image
/// treated as samples at Chebyshev nodes on [-1, 1]^2. Column c sits at
/// x = -cos(pi (c + 1/2) / W), likewise rows. Discrete orthogonality
/// makes a constant image map to c[0][0] only.
std::vector<std::vector<double>> chebyshev_coefficients(const Plane& plane, std::size_t order = kChebyshevOrder);

/// Mean intensity along each line at 0 (columns), 45 (anti-diagonals),
/// 90 (rows) and 135 (diagonals) degrees.
std::array<std::vector<double>, kRadonAngles> radon_projections(const Plane& plane);

/// Histogram of `values` over [lo, hi] normalized to sum 1. When
/// hi <= lo everything lands in bin 0.
std::vector<double> histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

/// Throws ArgumentError for crops with fewer than two pixels.
FeatureVector extract_features(const Image& crop);

std::vector<FeatureVector> extract_all(std::span<const Image> crops);

/// CSV cache: header `label,<feature names>`, one row per crop.
void write_feature_csv(const std::filesystem::path& path, std::span<const FeatureVector> rows, std::span<const int> labels);
void read_feature_csv(const std::filesystem::path& path, std::vector<FeatureVector>& rows, std::vector<int>& labels);

}  // namespace adenet::features
