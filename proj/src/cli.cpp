#include "adenet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "adenet/checkpoint.hpp"
#include "adenet/error.hpp"
#include "adenet/experiment.hpp"
#include "adenet/explain.hpp"
#include "adenet/features.hpp"
#include "adenet/forest.hpp"
#include "adenet/parallel.hpp"
#include "adenet/rng.hpp"
#include "adenet/synth.hpp"

namespace adenet::cli {

namespace fs = std::filesystem;

std::vector<std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path);
  std::vector<std::string> args;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ArgumentError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

namespace {

class Logger {
 public:
  Logger(std::ostream& err, const bool& json) : err_(err), json_(json) {}
  void info(const std::string& msg) const { emit("info", msg); }
  void error(const std::string& msg) const { emit("error", msg); }

 private:
  void emit(const char* level, const std::string& msg) const {
    if (json_) err_ << nlohmann::json{{"level", level}, {"msg", msg}}.dump() << '\n';
    else err_ << "[" << level << "] " << msg << '\n';
  }
  std::ostream& err_;
  const bool& json_;
};

struct Globals {
  std::uint64_t seed = 0;
  bool deterministic = false;
  bool json_logs = false;
  std::string config;
};

struct DataArgs {
  std::string data;

  fs::path manifest_path() const {
    const fs::path p(data);
    return fs::is_directory(p) ? p / data::kManifestName : p;
  }
  fs::path sidecar_path() const { return manifest_path().parent_path() / data::kSidecarName; }
};

struct TrainArgs {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  double momentum = 0.9;
  bool early_stopping = false;
  std::size_t patience = 3;
  bool class_weights = false;

  train::TrainConfig config(std::uint64_t seed) const {
    train::TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.learning_rate = learning_rate;
    c.momentum = momentum;
    if (optimizer == "adam") c.optimizer = train::OptimizerKind::kAdam;
    else if (optimizer == "sgd") c.optimizer = train::OptimizerKind::kSgdMomentum;
    else throw ArgumentError("unknown optimizer '" + optimizer + "' (expected adam or sgd)");
    c.early_stopping.enabled = early_stopping;
    c.early_stopping.patience = patience;
    c.class_weights = class_weights;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct ForestArgs {
  std::size_t trees = 100;
  std::size_t max_depth = 16;
  std::size_t min_leaf = 1;

  forest::ForestConfig config(std::uint64_t seed) const {
    forest::ForestConfig c;
    c.n_trees = trees;
    c.max_depth = max_depth;
    c.min_leaf = min_leaf;
    c.seed = seed;
    c.validate();
    return c;
  }
};

void add_train_options(CLI::App* sub, TrainArgs& t) {
  sub->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--batch-size", t.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--lr", t.learning_rate, "Learning rate")->capture_default_str();
  sub->add_option("--optimizer", t.optimizer, "adam or sgd")->capture_default_str();
  sub->add_option("--momentum", t.momentum, "SGD momentum")->capture_default_str();
  sub->add_flag("--early-stopping", t.early_stopping, "Stop on stalled validation loss and restore the best epoch");
  sub->add_option("--patience", t.patience, "Early-stopping patience in epochs")->capture_default_str();
  sub->add_flag("--class-weights", t.class_weights, "Weight the loss by inverse class frequency");
}

void add_forest_options(CLI::App* sub, ForestArgs& f) {
  sub->add_option("--trees", f.trees, "Random-forest size")->capture_default_str();
  sub->add_option("--max-depth", f.max_depth, "Random-forest depth limit")->capture_default_str();
  sub->add_option("--min-leaf", f.min_leaf, "Random-forest minimum leaf size")->capture_default_str();
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<int> labels_at(std::span<const data::Crop> crops, std::span<const std::size_t> idx) {
  std::vector<int> out;
  for (std::size_t i : idx) out.push_back(crops[i].label);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text << '\n';
}

std::vector<std::vector<double>> feature_rows(std::span<const data::Crop> crops, std::span<const std::size_t> idx) {
  std::vector<Image> images;
  for (std::size_t i : idx) images.push_back(crops[i].image);
  std::vector<std::vector<double>> rows;
  for (const auto& f : features::extract_all(images)) rows.emplace_back(f.begin(), f.end());
  return rows;
}

/// Holdout split shared by train and eval so eval can score the same test set.
data::SplitPlan holdout(std::span<const data::Crop> crops, double train_fraction, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto& c : crops) labels.push_back(c.label);
  return data::stratified_holdout(std::span<const int>(labels), train_fraction, seed);
}

}  // namespace

int run(const std::vector<std::string>& input_args, std::ostream& out, std::ostream& err) {
  Globals g;
  const Logger log(err, g.json_logs);

  CLI::App app{"AdeNet insulator damage classification", "adenet"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic, "Single-threaded, bit-reproducible outputs");
  app.add_flag("--json-logs", g.json_logs, "Diagnostics as JSON lines");
  app.add_option("--config", g.config, "File of key=value option defaults");

  // synth
  data::SynthConfig synth_cfg;
  std::string synth_out;
  std::vector<std::string> defect_names;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic insulator dataset");
  synth->add_option("--n", synth_cfg.n_images, "Number of images")->capture_default_str();
  synth->add_option("--damaged-ratio", synth_cfg.damaged_ratio, "Fraction of damaged images")->capture_default_str();
  synth->add_option("--image-size", synth_cfg.image_size, "Square image side in pixels")->capture_default_str();
  synth->add_option("--defects", defect_names, "Defect kinds (missing_disc, flashover, fracture)")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  DataArgs train_data;
  TrainArgs train_args;
  ForestArgs train_forest_args;
  std::string train_arch = "adenet", train_out;
  double train_fraction = 0.8;
  auto* train_cmd = app.add_subcommand("train", "Train one model on a stratified holdout split");
  train_cmd->add_option("--data", train_data.data, "Dataset directory or manifest CSV")->required();
  train_cmd->add_option("--arch", train_arch, "adenet, adenet-nobn, lenet5 or forest")->capture_default_str();
  train_cmd->add_option("--train-fraction", train_fraction, "Training share of the holdout split")->capture_default_str();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  add_train_options(train_cmd, train_args);
  add_forest_options(train_cmd, train_forest_args);

  // cv
  DataArgs cv_data;
  TrainArgs cv_train;
  ForestArgs cv_forest;
  std::size_t cv_k = 5;
  std::vector<std::string> cv_arches = {"adenet", "lenet5", "forest"};
  bool cv_ablation = false;
  std::string cv_out;
  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation of several models on shared folds");
  cv->add_option("--data", cv_data.data, "Dataset directory or manifest CSV")->required();
  cv->add_option("--k", cv_k, "Number of folds")->capture_default_str();
  cv->add_option("--arch", cv_arches, "Models to compare")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
      ->capture_default_str();
  cv->add_flag("--bn-ablation", cv_ablation, "Also run AdeNet without batch norm and write a comparison");
  cv->add_option("--out", cv_out, "Output directory for reports");
  add_train_options(cv, cv_train);
  add_forest_options(cv, cv_forest);

  // eval
  DataArgs eval_data;
  std::string eval_checkpoint, eval_forest, eval_subset = "all", eval_out;
  double eval_fraction = 0.8;
  auto* eval = app.add_subcommand("eval", "Score a trained model");
  eval->add_option("--data", eval_data.data, "Dataset directory or manifest CSV")->required();
  auto* ck = eval->add_option("--checkpoint", eval_checkpoint, "Network checkpoint");
  auto* fo = eval->add_option("--forest", eval_forest, "Random-forest JSON");
  ck->excludes(fo);
  eval->add_option("--subset", eval_subset, "all, or test to rebuild the holdout test split")->capture_default_str();
  eval->add_option("--train-fraction", eval_fraction, "Holdout training share, for --subset test")->capture_default_str();
  eval->add_option("--out", eval_out, "Report JSON path");

  // gradcam
  DataArgs cam_data;
  std::string cam_checkpoint, cam_out, cam_target = "damaged", cam_upsampling = "bilinear";
  std::vector<std::size_t> cam_indices;
  double cam_alpha = 0.4;
  bool cam_csv = false;
  auto* cam = app.add_subcommand("gradcam", "Grad-CAM overlays and localization scores");
  cam->add_option("--data", cam_data.data, "Dataset directory or manifest CSV")->required();
  cam->add_option("--checkpoint", cam_checkpoint, "Network checkpoint")->required();
  cam->add_option("--index", cam_indices, "Record indices (default: every damaged record)")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  cam->add_option("--target", cam_target, "damaged or predicted")->capture_default_str();
  cam->add_option("--upsampling", cam_upsampling, "bilinear or nearest")->capture_default_str();
  cam->add_option("--alpha", cam_alpha, "Overlay opacity")->capture_default_str();
  cam->add_flag("--csv", cam_csv, "Also write the raw heatmap grid as CSV");
  cam->add_option("--out", cam_out, "Output directory")->required();

  // features
  DataArgs feat_data;
  std::string feat_out;
  auto* feats = app.add_subcommand("features", "Extract handcrafted features to CSV");
  feats->add_option("--data", feat_data.data, "Dataset directory or manifest CSV")->required();
  feats->add_option("--out", feat_out, "CSV path")->required();

  // params
  std::string params_arch = "adenet";
  auto* params = app.add_subcommand("params", "Print parameter counts");
  params->add_option("--arch", params_arch, "adenet, adenet-nobn or lenet5")->capture_default_str();

  // Config pairs go straight after the subcommand name.
  std::vector<std::string> args = input_args;
  try {
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
      if (path.empty()) continue;
      const auto extra = read_config(path);
      auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) { return app.get_subcommand_no_throw(a) != nullptr; });
      if (sub == args.end()) break;
      args.insert(sub + 1, extra.begin(), extra.end());
      break;
    }
  } catch (const Error& e) {
    log.error(e.what());
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    log.error(e.what());
    err << app.help();
    return kExitUsage;
  }

  set_deterministic(g.deterministic);
  auto logger = [&](const std::string& s) { log.info(s); };

  try {
    if (*params) {
      const auto arm = experiment::parse_arm(params_arch);
      if (arm == experiment::Arm::kForest) throw ArgumentError("params: the forest has no fixed parameter count");
      const auto count = model::count_params(experiment::build_arm(arm, g.seed));
      out << "trainable=" << count.trainable << " non_trainable=" << count.non_trainable << '\n';
      return kExitOk;
    }

    if (*synth) {
      if (!defect_names.empty()) {
        synth_cfg.defect_kinds.clear();
        for (const auto& n : defect_names) synth_cfg.defect_kinds.push_back(data::parse_defect(n));
      }
      const auto r = data::synth_dataset(synth_cfg, g.seed, synth_out);
      log.info("wrote " + std::to_string(r.damaged + r.undamaged) + " images (" + std::to_string(r.damaged) + " damaged) to " + synth_out);
      out << nlohmann::ordered_json{{"manifest", r.manifest.string()},
                                    {"sidecar", r.sidecar.string()},
                                    {"damaged", r.damaged},
                                    {"undamaged", r.undamaged}}
                 .dump()
          << '\n';
      return kExitOk;
    }

    if (*feats) {
      const auto manifest = data::load_manifest(feat_data.manifest_path());
      const auto crops = data::crop_insulators(manifest);
      std::vector<Image> images;
      for (const auto& c : crops) images.push_back(c.image);
      const auto rows = features::extract_all(images);
      features::write_feature_csv(feat_out, rows, manifest.labels());
      log.info("wrote " + std::to_string(rows.size()) + " feature rows to " + feat_out);
      return kExitOk;
    }

    if (*train_cmd) {
      const auto arm = experiment::parse_arm(train_arch);
      const auto manifest = data::load_manifest(train_data.manifest_path());
      const auto crops = data::crop_insulators(manifest);
      const auto plan = holdout(crops, train_fraction, g.seed);
      fs::create_directories(train_out);
      const auto labels = labels_at(crops, plan.test);
      metrics::MetricsReport report;
      std::vector<double> scores;
      if (arm == experiment::Arm::kForest) {
        const auto f = forest::train_forest(feature_rows(crops, plan.train), labels_at(crops, plan.train),
                                            train_forest_args.config(derive_seed(g.seed, 1)));
        forest::save_forest(f, fs::path(train_out) / "forest.json");
        for (const auto& row : feature_rows(crops, plan.test)) scores.push_back(forest::forest_predict(f, row).score);
      } else {
        auto net = experiment::build_arm(arm, derive_seed(g.seed, 0));
        const auto history = train::train(net, crops, plan.train, plan.test, train_args.config(derive_seed(g.seed, 1)));
        for (const auto& e : history.epochs)
          log.info("epoch " + std::to_string(e.epoch) + " loss=" + std::to_string(e.train_loss) +
                   " acc=" + std::to_string(e.train_accuracy));
        model::save_checkpoint(net, fs::path(train_out) / "model.ckpt");
        write_text(fs::path(train_out) / "history.json", train::history_json(history));
        for (float s : train::predict_scores(net, crops, plan.test, train_args.batch_size)) scores.push_back(s);
      }
      report = metrics::evaluate(labels, scores);
      metrics::write_report_json(report, fs::path(train_out) / "report.json");
      if (report.roc_auc) metrics::write_roc_csv(metrics::roc_auc(scores, labels).curve, fs::path(train_out) / "roc.csv");
      out << metrics::report_to_json(report) << '\n';
      return kExitOk;
    }

    if (*cv) {
      const auto manifest = data::load_manifest(cv_data.manifest_path());
      const auto crops = data::crop_insulators(manifest);
      experiment::CvConfig config;
      config.k = cv_k;
      config.seed = g.seed;
      config.train = cv_train.config(g.seed);
      config.forest = cv_forest.config(g.seed);
      config.arms.clear();
      for (const auto& a : cv_arches) config.arms.push_back(experiment::parse_arm(a));
      if (cv_ablation) {
        for (auto a : {experiment::Arm::kAdeNet, experiment::Arm::kAdeNetNoBn})
          if (std::find(config.arms.begin(), config.arms.end(), a) == config.arms.end()) config.arms.push_back(a);
      }
      config.log = logger;
      const auto result = experiment::cross_validate(crops, config);
      const std::string report = experiment::cv_json(result);
      if (!cv_out.empty()) {
        fs::create_directories(cv_out);
        write_text(fs::path(cv_out) / "cv_report.json", report);
        for (const auto& a : result.arms)
          metrics::write_report_json(a.mean, fs::path(cv_out) / ("report_" + experiment::arm_name(a.arm) + ".json"));
        if (cv_ablation) write_text(fs::path(cv_out) / "bn_ablation.json", experiment::ablation_json(result));
      }
      out << report << '\n';
      if (cv_ablation) out << experiment::ablation_json(result) << '\n';
      return kExitOk;
    }

    if (*eval) {
      if (eval_checkpoint.empty() == eval_forest.empty()) throw ArgumentError("eval: give exactly one of --checkpoint or --forest");
      const auto manifest = data::load_manifest(eval_data.manifest_path());
      const auto crops = data::crop_insulators(manifest);
      std::vector<std::size_t> idx;
      if (eval_subset == "all") idx = all_indices(crops.size());
      else if (eval_subset == "test") idx = holdout(crops, eval_fraction, g.seed).test;
      else throw ArgumentError("eval: --subset must be all or test");
      std::vector<double> scores;
      if (!eval_checkpoint.empty()) {
        const auto net = model::load_checkpoint(eval_checkpoint);
        for (float s : train::predict_scores(net, crops, idx)) scores.push_back(s);
      } else {
        const auto f = forest::load_forest(eval_forest);
        for (const auto& row : feature_rows(crops, idx)) scores.push_back(forest::forest_predict(f, row).score);
      }
      const auto report = metrics::evaluate(labels_at(crops, idx), scores);
      if (!eval_out.empty()) metrics::write_report_json(report, eval_out);
      out << metrics::report_to_json(report) << '\n';
      return kExitOk;
    }

    if (*cam) {
      if (cam_target != "damaged" && cam_target != "predicted") throw ArgumentError("gradcam: --target must be damaged or predicted");
      explain::GradCamOptions options;
      if (cam_upsampling == "nearest") options.upsampling = explain::Upsampling::kNearest;
      else if (cam_upsampling != "bilinear") throw ArgumentError("gradcam: --upsampling must be bilinear or nearest");
      const auto manifest = data::load_manifest(cam_data.manifest_path());
      const auto crops = data::crop_insulators(manifest);
      const auto net = model::load_checkpoint(cam_checkpoint);
      std::vector<std::optional<data::BBox>> boxes(manifest.size());
      if (fs::exists(cam_data.sidecar_path())) {
        const auto defects = data::load_defect_sidecar(cam_data.sidecar_path());
        boxes = experiment::defect_boxes_in_crops(manifest, defects);
      }
      if (cam_indices.empty())
        for (std::size_t i = 0; i < crops.size(); ++i)
          if (crops[i].label == data::kDamaged) cam_indices.push_back(i);
      fs::create_directories(cam_out);
      nlohmann::ordered_json summary;
      summary["model"] = net.info.name;
      summary["crops"] = nlohmann::ordered_json::array();
      std::vector<double> ratios;
      for (std::size_t i : cam_indices) {
        if (i >= crops.size()) throw ArgumentError("gradcam: index " + std::to_string(i) + " out of range");
        int target = data::kDamaged;
        if (cam_target == "predicted") {
          const std::size_t one[] = {i};
          target = train::predict_scores(net, crops, one)[0] > 0.5f ? data::kDamaged : data::kUndamaged;
        }
        options.crop_id = i;
        const auto heat = explain::gradcam(net, crops[i].image, target, options);
        char name[32];
        std::snprintf(name, sizeof name, "cam_%05zu", i);
        explain::write_overlay(heat, crops[i].image, fs::path(cam_out) / (std::string(name) + ".png"), cam_alpha);
        if (cam_csv) explain::write_heatmap_csv(heat, fs::path(cam_out) / (std::string(name) + ".csv"));
        nlohmann::ordered_json entry{{"index", i}, {"target_class", target}};
        if (boxes[i]) {
          const double r = explain::localization_score(heat, *boxes[i]);
          ratios.push_back(r);
          entry["localization"] = r;
        }
        summary["crops"].push_back(std::move(entry));
      }
      if (!ratios.empty()) summary["median_localization"] = experiment::median(ratios);
      write_text(fs::path(cam_out) / "gradcam.json", summary.dump(2));
      out << summary.dump(2) << '\n';
      return kExitOk;
    }
  } catch (const NumericError& e) {
    log.error(e.what());
    return kExitNumeric;
  } catch (const ArgumentError& e) {
    log.error(e.what());
    return kExitUsage;
  } catch (const Error& e) {
    log.error(e.what());
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    log.error(e.what());
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace adenet::cli
