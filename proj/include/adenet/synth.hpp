#pragma once

// Procedural stand-in for aerial insulator imagery: disc-stack insulators
// on noisy sky backgrounds, some carrying a single defect whose box is
// written to a JSON-lines sidecar for attention scoring.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "adenet/data.hpp"

namespace adenet::data {

enum class DefectKind { kMissingDisc, kFlashover, kFracture };

std::string defect_name(DefectKind kind);
DefectKind parse_defect(const std::string& name);

struct SynthConfig {
  std::size_t n_images = 600;
  /// Default mirrors the ~1:2 damaged/undamaged ratio of the field data.
  double damaged_ratio = 1.0 / 3.0;
  std::size_t image_size = 96;
  std::vector<DefectKind> defect_kinds = {DefectKind::kMissingDisc, DefectKind::kFlashover, DefectKind::kFracture};
};

struct DefectAnnotation {
  std::size_t record_index = 0;
  BBox bbox;  // image coordinates
  DefectKind kind = DefectKind::kFlashover;
};

struct SynthResult {
  std::filesystem::path manifest;
  std::filesystem::path sidecar;
  std::size_t damaged = 0;
  std::size_t undamaged = 0;
};

inline constexpr const char* kSidecarName = "defects.jsonl";
inline constexpr const char* kManifestName = "manifest.csv";

/// Writes out_dir/images/*.png, out_dir/manifest.csv and out_dir/defects.jsonl.
/// Output bytes depend only on (config, seed).
SynthResult synth_dataset(const SynthConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

struct RenderedSample {
  Image image;
  BBox insulator;
  int label = kUndamaged;
  std::optional<DefectAnnotation> defect;
};

/// Renders one sample without touching the filesystem.
RenderedSample render_sample(std::size_t image_size, bool damaged, DefectKind kind, std::uint64_t seed);

std::vector<DefectAnnotation> load_defect_sidecar(const std::filesystem::path& path);

}  // namespace adenet::data
