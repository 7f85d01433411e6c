#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adenet/image.hpp"
#include "adenet/tensor.hpp"

namespace adenet::data {

inline constexpr int kUndamaged = 0;
inline constexpr int kDamaged = 1;

/// Pixel box, top-left origin.
struct BBox {
  std::size_t x = 0, y = 0, w = 0, h = 0;
  std::size_t area() const { return w * h; }
  bool contains(const BBox& other) const {
    return other.x >= x && other.y >= y && other.x + other.w <= x + w && other.y + other.h <= y + h;
  }
  bool operator==(const BBox&) const = default;
};

struct AnnotationRecord {
  std::filesystem::path image_path;  // as written in the manifest
  BBox bbox;
  int label = kUndamaged;
  bool operator==(const AnnotationRecord&) const = default;
};

struct DatasetManifest {
  /// Directory relative image paths are resolved against.
  std::filesystem::path root;
  std::vector<AnnotationRecord> records;

  std::size_t count(int label) const;
  std::size_t damaged() const { return count(kDamaged); }
  std::size_t undamaged() const { return count(kUndamaged); }
  std::size_t size() const { return records.size(); }
  std::filesystem::path resolve(const AnnotationRecord& r) const;
  std::vector<int> labels() const;
};

/// CSV with header `image_path,x,y,w,h,label`. Every record is validated:
/// the image must exist and the box must lie inside it. Errors name the
/// offending line.
DatasetManifest load_manifest(const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct Crop {
  Image image;
  int label = kUndamaged;
};

/// One crop per record, in manifest order.
std::vector<Crop> crop_insulators(const DatasetManifest& manifest);

/// Zero-padded batch: (n, 3, H, W) with H and W the per-batch maxima
/// rounded up to a multiple of 8, pixels scaled by 1/255.
struct Batch {
  Tensor<float> pixels;
  std::vector<std::pair<std::size_t, std::size_t>> sizes;  // original (h, w)
  std::vector<int> labels;
};

inline constexpr std::size_t kPadMultiple = 8;

Batch pad_batch(std::span<const Image> crops, std::span<const int> labels);

/// Inverse of pad_batch for one item.
Image unpad(const Batch& batch, std::size_t index);

struct SplitPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::vector<std::size_t>> folds;
  std::uint64_t seed = 0;

  /// Training indices for fold `k`: every fold except `k`, ascending.
  std::vector<std::size_t> fold_train(std::size_t k) const;
};

SplitPlan stratified_holdout(std::span<const int> labels, double train_fraction = 0.8, std::uint64_t seed = 0);
SplitPlan kfold(std::span<const int> labels, std::size_t k = 5, std::uint64_t seed = 0);

inline SplitPlan stratified_holdout(const DatasetManifest& m, double train_fraction = 0.8, std::uint64_t seed = 0) {
  const auto l = m.labels();
  return stratified_holdout(std::span<const int>(l), train_fraction, seed);
}
inline SplitPlan kfold(const DatasetManifest& m, std::size_t k = 5, std::uint64_t seed = 0) {
  const auto l = m.labels();
  return kfold(std::span<const int>(l), k, seed);
}

}  // namespace adenet::data
