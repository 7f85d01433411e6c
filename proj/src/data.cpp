#include "adenet/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "adenet/error.hpp"
#include "adenet/parallel.hpp"
#include "adenet/rng.hpp"

namespace adenet::data {
namespace {

constexpr const char* kHeader = "image_path,x,y,w,h,label";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::size_t parse_count(const std::string& text, std::size_t line_no, const char* name) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw DataError("manifest line " + std::to_string(line_no) + ": field '" + name + "' is not a non-negative integer: '" + text + "'");
  return value;
}

std::size_t round_up(std::size_t v, std::size_t multiple) { return (v + multiple - 1) / multiple * multiple; }

}  // namespace

std::size_t DatasetManifest::count(int label) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const auto& r) { return r.label == label; }));
}

std::filesystem::path DatasetManifest::resolve(const AnnotationRecord& r) const {
  return r.image_path.is_absolute() ? r.image_path : root / r.image_path;
}

std::vector<int> DatasetManifest::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  manifest.root = path.parent_path();

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (line != kHeader) throw DataError("manifest line " + std::to_string(line_no) + ": expected header '" + kHeader + "'");
      header_seen = true;
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() != 6)
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 6 fields, got " + std::to_string(fields.size()));
    AnnotationRecord r;
    r.image_path = fields[0];
    if (fields[0].empty()) throw DataError("manifest line " + std::to_string(line_no) + ": empty image path");
    r.bbox = {parse_count(fields[1], line_no, "x"), parse_count(fields[2], line_no, "y"), parse_count(fields[3], line_no, "w"),
              parse_count(fields[4], line_no, "h")};
    const std::size_t label = parse_count(fields[5], line_no, "label");
    if (label > 1) throw DataError("manifest line " + std::to_string(line_no) + ": label must be 0 or 1");
    r.label = static_cast<int>(label);
    if (r.bbox.w == 0 || r.bbox.h == 0)
      throw DataError("manifest line " + std::to_string(line_no) + ": empty bounding box for " + r.image_path.string());

    const auto resolved = manifest.resolve(r);
    if (!std::filesystem::exists(resolved))
      throw DataError("manifest line " + std::to_string(line_no) + ": missing image " + resolved.string());
    const auto [width, height] = image_size(resolved);
    if (r.bbox.x + r.bbox.w > width || r.bbox.y + r.bbox.h > height)
      throw DataError("manifest line " + std::to_string(line_no) + ": bbox (" + std::to_string(r.bbox.x) + "," +
                      std::to_string(r.bbox.y) + "," + std::to_string(r.bbox.w) + "," + std::to_string(r.bbox.h) +
                      ") exceeds " + std::to_string(width) + "x" + std::to_string(height) + " image " + r.image_path.string());
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << kHeader << '\n';
  for (const auto& r : manifest.records)
    out << r.image_path.generic_string() << ',' << r.bbox.x << ',' << r.bbox.y << ',' << r.bbox.w << ',' << r.bbox.h << ','
        << r.label << '\n';
}

std::vector<Crop> crop_insulators(const DatasetManifest& manifest) {
  std::vector<Crop> crops(manifest.records.size());
  parallel_for(crops.size(), [&](std::size_t i) {
    const auto& r = manifest.records[i];
    const Image image = load_image(manifest.resolve(r));
    crops[i] = {crop(image, r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h), r.label};
  });
  return crops;
}

Batch pad_batch(std::span<const Image> crops, std::span<const int> labels) {
  if (crops.empty()) throw ArgumentError("pad_batch: empty batch");
  if (labels.size() != crops.size()) throw ArgumentError("pad_batch: label count does not match crop count");
  std::size_t max_h = 0, max_w = 0;
  for (const auto& c : crops) {
    if (c.empty()) throw ArgumentError("pad_batch: empty crop");
    max_h = std::max(max_h, c.height);
    max_w = std::max(max_w, c.width);
  }
  const std::size_t H = round_up(max_h, kPadMultiple), W = round_up(max_w, kPadMultiple);
  Batch batch;
  batch.pixels = Tensor<float>(crops.size(), 3, H, W);
  batch.labels.assign(labels.begin(), labels.end());
  for (std::size_t n = 0; n < crops.size(); ++n) {
    const Image& c = crops[n];
    batch.sizes.emplace_back(c.height, c.width);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < c.height; ++y)
        for (std::size_t x = 0; x < c.width; ++x) batch.pixels.at(n, ch, y, x) = static_cast<float>(c.at(x, y, ch)) / 255.0f;
  }
  return batch;
}

Image unpad(const Batch& batch, std::size_t index) {
  const auto [h, w] = batch.sizes.at(index);
  Image out(w, h);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(x, y, ch) = static_cast<std::uint8_t>(std::lround(batch.pixels.at(index, ch, y, x) * 255.0f));
  return out;
}

std::vector<std::size_t> SplitPlan::fold_train(std::size_t k) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != k) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::array<std::vector<std::size_t>, 2> indices_by_class(std::span<const int> labels) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kDamaged && labels[i] != kUndamaged) throw ArgumentError("split: label must be 0 or 1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return by_class;
}

}  // namespace

SplitPlan stratified_holdout(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ArgumentError("stratified_holdout: fraction must be in (0, 1)");
  auto by_class = indices_by_class(labels);
  SplitPlan plan;
  plan.seed = seed;
  Rng rng(seed);
  for (std::size_t c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) throw ArgumentError("stratified_holdout: class " + std::to_string(c) + " has no samples");
    rng.shuffle(idx);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    plan.train.insert(plan.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    plan.test.insert(plan.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

SplitPlan kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("kfold: k must be at least 2");
  auto by_class = indices_by_class(labels);
  for (std::size_t c = 0; c < 2; ++c)
    if (by_class[c].size() < k)
      throw ArgumentError("kfold: k=" + std::to_string(k) + " exceeds the " + std::to_string(by_class[c].size()) +
                          " samples of class " + std::to_string(c));
  SplitPlan plan;
  plan.seed = seed;
  plan.folds.resize(k);
  Rng rng(seed);
  // Deal each shuffled class round-robin; the offset carries across classes
  // so fold sizes differ by at most one overall.
  std::size_t slot = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    rng.shuffle(idx);
    for (std::size_t i : idx) plan.folds[slot++ % k].push_back(i);
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

}  // namespace adenet::data
