#include "adenet/experiment.hpp"

#include <algorithm>
#include <json.hpp>

#include "adenet/error.hpp"
#include "adenet/explain.hpp"
#include "adenet/features.hpp"
#include "adenet/parallel.hpp"
#include "adenet/rng.hpp"

namespace adenet::experiment {

std::string arm_name(Arm arm) {
  switch (arm) {
    case Arm::kAdeNet: return "adenet";
    case Arm::kAdeNetNoBn: return "adenet-nobn";
    case Arm::kLeNet5: return "lenet5";
    case Arm::kForest: return "forest";
  }
  return "?";
}

Arm parse_arm(const std::string& name) {
  for (Arm a : {Arm::kAdeNet, Arm::kAdeNetNoBn, Arm::kLeNet5, Arm::kForest})
    if (arm_name(a) == name) return a;
  throw ArgumentError("unknown architecture '" + name + "' (expected adenet, adenet-nobn, lenet5 or forest)");
}

model::Model build_arm(Arm arm, std::uint64_t seed) {
  switch (arm) {
    case Arm::kAdeNet: return model::build_adenet(3, true, seed);
    case Arm::kAdeNetNoBn: return model::build_adenet(3, false, seed);
    case Arm::kLeNet5: return model::build_lenet5(1, seed);
    case Arm::kForest: break;
  }
  throw ArgumentError("build_arm: the forest is not a network");
}

const ArmResult* CvResult::find(Arm arm) const {
  for (const auto& a : arms)
    if (a.arm == arm) return &a;
  return nullptr;
}

namespace {

std::vector<int> labels_of(std::span<const data::Crop> crops, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(crops[i].label);
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> monitor_split(std::span<const data::Crop> crops,
                                                                             const std::vector<std::size_t>& train,
                                                                             std::uint64_t seed) {
  const auto labels = labels_of(crops, train);
  const auto plan = data::stratified_holdout(std::span<const int>(labels), 0.9, seed);
  std::vector<std::size_t> fit, val;
  for (std::size_t i : plan.train) fit.push_back(train[i]);
  for (std::size_t i : plan.test) val.push_back(train[i]);
  return {fit, val};
}

FoldResult run_network_fold(Arm arm, std::span<const data::Crop> crops, const std::vector<std::size_t>& train_idx,
                            const std::vector<std::size_t>& test_idx, const CvConfig& config, std::size_t fold) {
  const std::uint64_t seed = derive_seed(config.seed, 100 + fold * 8 + static_cast<std::uint64_t>(arm));
  model::Model net = build_arm(arm, derive_seed(seed, 0));
  train::TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, 1);
  FoldResult r;
  r.fold = fold;
  if (tc.early_stopping.enabled) {
    const auto [fit, val] = monitor_split(crops, train_idx, derive_seed(seed, 2));
    r.history = train::train(net, crops, fit, val, tc);
  } else {
    r.history = train::train(net, crops, train_idx, {}, tc);
  }
  if (config.on_model) config.on_model(arm, fold, net);
  const auto scores = train::predict_scores(net, crops, test_idx, tc.batch_size);
  const auto labels = labels_of(crops, test_idx);
  const std::vector<double> s(scores.begin(), scores.end());
  r.report = metrics::evaluate(labels, s);
  std::vector<int> predictions(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) predictions[i] = s[i] > 0.5 ? 1 : 0;
  r.confusion = metrics::confusion(labels, predictions);
  return r;
}

FoldResult run_forest_fold(const std::vector<std::vector<double>>& x, std::span<const data::Crop> crops,
                           const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& test_idx,
                           const CvConfig& config, std::size_t fold) {
  std::vector<std::vector<double>> xt;
  for (std::size_t i : train_idx) xt.push_back(x[i]);
  const auto yt = labels_of(crops, train_idx);
  forest::ForestConfig fc = config.forest;
  fc.seed = derive_seed(config.seed, 100 + fold * 8 + static_cast<std::uint64_t>(Arm::kForest));
  const auto f = forest::train_forest(xt, yt, fc);
  std::vector<double> scores;
  std::vector<int> predictions;
  for (std::size_t i : test_idx) {
    const auto p = forest::forest_predict(f, x[i]);
    scores.push_back(p.score);
    predictions.push_back(p.label);
  }
  const auto labels = labels_of(crops, test_idx);
  FoldResult r;
  r.fold = fold;
  r.report = metrics::evaluate(labels, scores);
  r.confusion = metrics::confusion(labels, predictions);
  return r;
}

}  // namespace

CvResult cross_validate(std::span<const data::Crop> crops, const CvConfig& config) {
  if (config.arms.empty()) throw ArgumentError("cross_validate: no arms selected");
  config.train.validate();
  std::vector<int> labels;
  for (const auto& c : crops) labels.push_back(c.label);
  CvResult result;
  result.plan = data::kfold(std::span<const int>(labels), config.k, config.seed);
  auto log = [&](const std::string& s) {
    if (config.log) config.log(s);
  };

  std::vector<std::vector<double>> features;
  if (std::find(config.arms.begin(), config.arms.end(), Arm::kForest) != config.arms.end()) {
    std::vector<Image> images;
    for (const auto& c : crops) images.push_back(c.image);
    for (const auto& f : features::extract_all(images)) features.emplace_back(f.begin(), f.end());
  }

  for (Arm arm : config.arms) {
    ArmResult ar;
    ar.arm = arm;
    if (arm != Arm::kForest) ar.params = model::count_params(build_arm(arm, 0));
    for (std::size_t k = 0; k < config.k; ++k) {
      const auto train_idx = result.plan.fold_train(k);
      const auto& test_idx = result.plan.folds[k];
      FoldResult fr = arm == Arm::kForest ? run_forest_fold(features, crops, train_idx, test_idx, config, k)
                                          : run_network_fold(arm, crops, train_idx, test_idx, config, k);
      log(arm_name(arm) + " fold " + std::to_string(k + 1) + "/" + std::to_string(config.k) +
          ": macro_f1=" + std::to_string(fr.report.macro_f1) + " accuracy=" + std::to_string(fr.report.accuracy));
      ar.pooled += fr.confusion;
      ar.folds.push_back(std::move(fr));
    }
    std::vector<metrics::MetricsReport> reports;
    for (const auto& f : ar.folds) reports.push_back(f.report);
    ar.mean = metrics::aggregate_folds(reports);
    ar.pooled_report = metrics::metrics_from_confusion(ar.pooled);
    result.arms.push_back(std::move(ar));
  }
  return result;
}

namespace {

nlohmann::ordered_json report_json(const metrics::MetricsReport& r) {
  return nlohmann::ordered_json::parse(metrics::report_to_json(r, -1));
}

nlohmann::ordered_json confusion_json(const metrics::ConfusionMatrix2& m) {
  nlohmann::ordered_json j;
  j["tp"] = m.tp;
  j["fn"] = m.fn;
  j["fp"] = m.fp;
  j["tn"] = m.tn;
  return j;
}

}  // namespace

std::string cv_json(const CvResult& result, int indent) {
  nlohmann::ordered_json j;
  j["schema"] = "adenet.cv_report";
  j["version"] = 1;
  j["k"] = result.plan.folds.size();
  j["seed"] = result.plan.seed;
  j["arms"] = nlohmann::ordered_json::array();
  for (const auto& a : result.arms) {
    nlohmann::ordered_json ja;
    ja["arch"] = arm_name(a.arm);
    if (a.params) ja["params"] = {{"trainable", a.params->trainable}, {"non_trainable", a.params->non_trainable}};
    ja["fold_mean"] = report_json(a.mean);
    ja["pooled_confusion"] = confusion_json(a.pooled);
    ja["pooled"] = report_json(a.pooled_report);
    ja["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : a.folds) {
      nlohmann::ordered_json jf;
      jf["fold"] = f.fold;
      jf["report"] = report_json(f.report);
      jf["confusion"] = confusion_json(f.confusion);
      if (!f.history.epochs.empty()) jf["history"] = nlohmann::ordered_json::parse(train::history_json(f.history));
      ja["folds"].push_back(std::move(jf));
    }
    j["arms"].push_back(std::move(ja));
  }
  return j.dump(indent);
}

std::string ablation_json(const CvResult& result, int indent) {
  const ArmResult* with = result.find(Arm::kAdeNet);
  const ArmResult* without = result.find(Arm::kAdeNetNoBn);
  if (!with || !without) throw ArgumentError("ablation_json: both adenet and adenet-nobn results are required");
  auto delta = [](std::size_t a, std::size_t b) { return static_cast<long long>(a) - static_cast<long long>(b); };
  nlohmann::ordered_json j;
  j["schema"] = "adenet.bn_ablation";
  j["version"] = 1;
  j["with_batchnorm"] = {{"trainable", with->params->trainable},
                         {"non_trainable", with->params->non_trainable},
                         {"fold_mean", report_json(with->mean)}};
  j["without_batchnorm"] = {{"trainable", without->params->trainable},
                            {"non_trainable", without->params->non_trainable},
                            {"fold_mean", report_json(without->mean)}};
  j["delta"] = {{"trainable", delta(with->params->trainable, without->params->trainable)},
                {"non_trainable", delta(without->params->non_trainable, with->params->non_trainable)},
                {"accuracy", with->mean.accuracy - without->mean.accuracy},
                {"macro_f1", with->mean.macro_f1 - without->mean.macro_f1}};
  return j.dump(indent);
}

std::vector<std::optional<data::BBox>> defect_boxes_in_crops(const data::DatasetManifest& manifest,
                                                             std::span<const data::DefectAnnotation> defects) {
  std::vector<std::optional<data::BBox>> out(manifest.size());
  for (const auto& d : defects) {
    if (d.record_index >= manifest.size()) throw DataError("defect annotation for unknown record " + std::to_string(d.record_index));
    const data::BBox& ins = manifest.records[d.record_index].bbox;
    if (!ins.contains(d.bbox)) throw DataError("defect box outside the insulator box for record " + std::to_string(d.record_index));
    out[d.record_index] = data::BBox{d.bbox.x - ins.x, d.bbox.y - ins.y, d.bbox.w, d.bbox.h};
  }
  return out;
}

std::vector<double> localization_study(const model::Model& model, std::span<const data::Crop> crops,
                                       std::span<const std::optional<data::BBox>> boxes, std::span<const std::size_t> indices) {
  std::vector<std::size_t> used;
  for (std::size_t i : indices)
    if (i < boxes.size() && boxes[i] && crops[i].label == data::kDamaged) used.push_back(i);
  std::vector<double> ratios(used.size());
  parallel_for(used.size(), [&](std::size_t j) {
    const std::size_t i = used[j];
    const auto heat = explain::gradcam(model, crops[i].image, data::kDamaged, {.crop_id = i});
    ratios[j] = explain::localization_score(heat, *boxes[i]);
  });
  return ratios;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

}  // namespace adenet::experiment
