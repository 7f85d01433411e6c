#include "adenet/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "adenet/error.hpp"
#include "adenet/parallel.hpp"

namespace adenet::features {

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    char buf[32];
    for (std::size_t s = 0; s < kHistogramScales; ++s)
      for (std::size_t b = 0; b < kHistogramBins; ++b) {
        std::snprintf(buf, sizeof buf, "hist_s%zu_b%zu", std::size_t{1} << s, b);
        n.emplace_back(buf);
      }
    for (std::size_t b = 0; b < kChebyshevBins; ++b) {
      std::snprintf(buf, sizeof buf, "cheb_b%02zu", b);
      n.emplace_back(buf);
    }
    const char* angles[kRadonAngles] = {"0", "45", "90", "135"};
    for (std::size_t a = 0; a < kRadonAngles; ++a)
      for (std::size_t b = 0; b < kRadonBins; ++b) {
        std::snprintf(buf, sizeof buf, "radon_a%s_b%zu", angles[a], b);
        n.emplace_back(buf);
      }
    return n;
  }();
  return names;
}

Plane gray_plane(const Image& image) { return {image.width, image.height, to_gray(image)}; }

Plane downsample(const Plane& plane, std::size_t factor) {
  if (factor <= 1) return plane;
  Plane out;
  out.width = (plane.width + factor - 1) / factor;
  out.height = (plane.height + factor - 1) / factor;
  out.values.assign(out.width * out.height, 0.0);
  for (std::size_t r = 0; r < out.height; ++r)
    for (std::size_t c = 0; c < out.width; ++c) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t y = r * factor; y < std::min((r + 1) * factor, plane.height); ++y)
        for (std::size_t x = c * factor; x < std::min((c + 1) * factor, plane.width); ++x) {
          sum += plane.at(y, x);
          ++count;
        }
      out.values[r * out.width + c] = sum / static_cast<double>(count);
    }
  return out;
}

namespace {

// basis[k][i] = T_k(x_i) at the nodes of an n-point grid, scaled so the
// discrete transform is an exact projection.
std::vector<std::vector<double>> chebyshev_basis(std::size_t n, std::size_t order) {
  std::vector<std::vector<double>> basis(order, std::vector<double>(n));
  for (std::size_t k = 0; k < order; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      // T_k(-cos t) = (-1)^k cos(k t)
      const double t = M_PI * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double sign = (k % 2) ? -1.0 : 1.0;
      basis[k][i] = sign * std::cos(static_cast<double>(k) * t) * (k == 0 ? 1.0 : 2.0) / static_cast<double>(n);
    }
  return basis;
}

}  // namespace

std::vector<std::vector<double>> chebyshev_coefficients(const Plane& plane, std::size_t order) {
  const std::size_t om = std::min(order, plane.height), on = std::min(order, plane.width);
  const auto by = chebyshev_basis(plane.height, om), bx = chebyshev_basis(plane.width, on);
  // Separable: transform rows first, then columns.
  std::vector<std::vector<double>> rows(plane.height, std::vector<double>(on, 0.0));
  for (std::size_t r = 0; r < plane.height; ++r)
    for (std::size_t n = 0; n < on; ++n) {
      double s = 0.0;
      for (std::size_t c = 0; c < plane.width; ++c) s += plane.at(r, c) * bx[n][c];
      rows[r][n] = s;
    }
  std::vector<std::vector<double>> coef(om, std::vector<double>(on, 0.0));
  for (std::size_t m = 0; m < om; ++m)
    for (std::size_t n = 0; n < on; ++n) {
      double s = 0.0;
      for (std::size_t r = 0; r < plane.height; ++r) s += rows[r][n] * by[m][r];
      coef[m][n] = s;
    }
  return coef;
}

std::array<std::vector<double>, kRadonAngles> radon_projections(const Plane& p) {
  std::array<std::vector<double>, kRadonAngles> out;
  const std::size_t w = p.width, h = p.height;
  out[0].assign(w, 0.0);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) out[0][c] += p.at(r, c);
    out[0][c] /= static_cast<double>(h);
  }
  out[2].assign(h, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[2][r] += p.at(r, c);
    out[2][r] /= static_cast<double>(w);
  }
  // Lines r + c = d (45) and c - r = d (135).
  const std::size_t lines = w + h - 1;
  out[1].assign(lines, 0.0);
  out[3].assign(lines, 0.0);
  std::vector<std::size_t> n45(lines, 0), n135(lines, 0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t d45 = r + c, d135 = c + (h - 1) - r;
      out[1][d45] += p.at(r, c);
      ++n45[d45];
      out[3][d135] += p.at(r, c);
      ++n135[d135];
    }
  for (std::size_t d = 0; d < lines; ++d) {
    out[1][d] /= static_cast<double>(n45[d]);
    out[3][d] /= static_cast<double>(n135[d]);
  }
  return out;
}

std::vector<double> histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  std::vector<double> h(bins, 0.0);
  if (values.empty()) return h;
  for (double v : values) {
    std::size_t b = 0;
    if (hi > lo) {
      const double t = (v - lo) / (hi - lo);
      b = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, t) * static_cast<double>(bins)));
    }
    h[b] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(values.size());
  return h;
}

namespace {

std::pair<double, double> extent(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace

FeatureVector extract_features(const Image& crop) {
  if (crop.width * crop.height < 2)
    throw ArgumentError("extract_features: crop must have at least two pixels, got " + std::to_string(crop.width) + "x" +
                        std::to_string(crop.height));
  const Plane gray = gray_plane(crop);
  FeatureVector f{};
  std::size_t at = 0;
  auto put = [&](const std::vector<double>& values) {
    std::copy(values.begin(), values.end(), f.begin() + static_cast<std::ptrdiff_t>(at));
    at += values.size();
  };

  for (std::size_t s = 0; s < kHistogramScales; ++s) {
    const Plane scaled = downsample(gray, std::size_t{1} << s);
    put(histogram(scaled.values, kHistogramBins, 0.0, 256.0));
  }

  // The (0,0) term is the mean brightness, already covered by the
  // intensity histograms.
  std::vector<double> coef;
  const auto c = chebyshev_coefficients(gray);
  for (std::size_t m = 0; m < c.size(); ++m)
    for (std::size_t n = 0; n < c[m].size(); ++n)
      // Rounding residue on flat regions is ~1e-13 at 0..255 intensities.
      if (m || n) coef.push_back(std::abs(c[m][n]) < 1e-9 ? 0.0 : c[m][n]);
  if (coef.empty()) coef.push_back(0.0);
  {
    const auto [lo, hi] = extent(coef);
    put(histogram(coef, kChebyshevBins, lo, hi));
  }

  for (const auto& projection : radon_projections(gray)) {
    const auto [lo, hi] = extent(projection);
    put(histogram(projection, kRadonBins, lo, hi));
  }
  return f;
}

std::vector<FeatureVector> extract_all(std::span<const Image> crops) {
  std::vector<FeatureVector> out(crops.size());
  parallel_for(crops.size(), [&](std::size_t i) { out[i] = extract_features(crops[i]); });
  return out;
}

void write_feature_csv(const std::filesystem::path& path, std::span<const FeatureVector> rows, std::span<const int> labels) {
  if (rows.size() != labels.size()) throw ArgumentError("write_feature_csv: length mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "label";
  for (const auto& name : feature_names()) out << ',' << name;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << labels[i];
    for (double v : rows[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

void read_feature_csv(const std::filesystem::path& path, std::vector<FeatureVector>& rows, std::vector<int>& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::string expected = "label";
  for (const auto& name : feature_names()) expected += ',' + name;
  if (!std::getline(in, line) || line != expected) throw DataError(path.string() + ": feature header does not match version " + std::to_string(kFeatureVersion));
  rows.clear();
  labels.clear();
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (values.size() != kFeatureCount + 1) throw DataError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    labels.push_back(static_cast<int>(values[0]));
    FeatureVector f;
    std::copy(values.begin() + 1, values.end(), f.begin());
    rows.push_back(f);
  }
}

}  // namespace adenet::features
