#pragma once

// Cross-validation over the classifier arms on shared folds, plus the
// Grad-CAM localization study on held-out damaged crops.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adenet/data.hpp"
#include "adenet/forest.hpp"
#include "adenet/metrics.hpp"
#include "adenet/model.hpp"
#include "adenet/synth.hpp"
#include "adenet/train.hpp"

namespace adenet::experiment {

enum class Arm { kAdeNet, kAdeNetNoBn, kLeNet5, kForest };

std::string arm_name(Arm arm);
Arm parse_arm(const std::string& name);

/// Fresh untrained network for a CNN arm.
model::Model build_arm(Arm arm, std::uint64_t seed);

struct CvConfig {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  train::TrainConfig train;
  forest::ForestConfig forest;
  std::vector<Arm> arms = {Arm::kAdeNet, Arm::kLeNet5, Arm::kForest};
  /// Progress lines (human diagnostics); may be empty.
  std::function<void(const std::string&)> log;
  /// Called with each trained network and its fold index; may be empty.
  std::function<void(Arm, std::size_t, const model::Model&)> on_model;
};

struct FoldResult {
  std::size_t fold = 0;
  metrics::MetricsReport report;
  metrics::ConfusionMatrix2 confusion;
  train::History history;  // empty for the forest
};

struct ArmResult {
  Arm arm = Arm::kAdeNet;
  std::vector<FoldResult> folds;
  metrics::MetricsReport mean;            // fold mean
  metrics::ConfusionMatrix2 pooled;       // summed over folds
  metrics::MetricsReport pooled_report;   // metrics of the pooled matrix
  std::optional<model::ParamCount> params;
};

struct CvResult {
  data::SplitPlan plan;
  std::vector<ArmResult> arms;
  const ArmResult* find(Arm arm) const;
};

/// Every arm sees the same stratified folds. With early stopping on, a
/// stratified tenth of each training fold is held out for monitoring;
/// the test fold is never used during training.
CvResult cross_validate(std::span<const data::Crop> crops, const CvConfig& config);

std::string cv_json(const CvResult& result, int indent = 2);

/// AdeNet with and without batch norm: parameter deltas and metric deltas.
/// Requires both arms in `result`.
std::string ablation_json(const CvResult& result, int indent = 2);

/// Defect boxes translated into crop coordinates, by record index.
std::vector<std::optional<data::BBox>> defect_boxes_in_crops(const data::DatasetManifest& manifest,
                                                             std::span<const data::DefectAnnotation> defects);

/// Localization enrichment of the damaged-class Grad-CAM for each index
/// that has a defect box.
std::vector<double> localization_study(const model::Model& model, std::span<const data::Crop> crops,
                                       std::span<const std::optional<data::BBox>> boxes, std::span<const std::size_t> indices);

double median(std::vector<double> values);

}  // namespace adenet::experiment
