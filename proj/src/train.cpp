#include "adenet/train.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "adenet/error.hpp"
#include "adenet/metrics.hpp"
#include "adenet/parallel.hpp"
#include "adenet/rng.hpp"

namespace adenet::train {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("train: batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("train: learning rate must be positive");
  if (early_stopping.enabled && early_stopping.monitor != "val_loss")
    throw ArgumentError("train: only val_loss can be monitored for early stopping");
}

void sgd_step(std::span<float> param, std::span<const float> grad, std::vector<float>& velocity, double lr, double momentum) {
  if (grad.size() != param.size()) throw ShapeError("sgd_step: gradient size does not match parameter");
  if (velocity.size() != param.size()) velocity.assign(param.size(), 0.0f);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double v = momentum * velocity[i] + grad[i];
    velocity[i] = static_cast<float>(v);
    param[i] = static_cast<float>(param[i] - lr * v);
  }
}

void adam_step(std::span<float> param, std::span<const float> grad, std::vector<float>& m, std::vector<float>& v, std::size_t step,
               double lr, double beta1, double beta2, double eps) {
  if (grad.size() != param.size()) throw ShapeError("adam_step: gradient size does not match parameter");
  if (step == 0) throw ArgumentError("adam_step: step index starts at 1");
  if (m.size() != param.size()) m.assign(param.size(), 0.0f);
  if (v.size() != param.size()) v.assign(param.size(), 0.0f);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = beta1 * m[i] + (1.0 - beta1) * g;
    const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    param[i] = static_cast<float>(param[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
  }
}

StopDecision early_stopping_check(std::span<const double> monitored, std::size_t patience) {
  if (monitored.empty()) throw ArgumentError("early_stopping_check: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < monitored.size(); ++i)
    if (monitored[i] < monitored[best]) best = i;
  const std::size_t since_best = monitored.size() - 1 - best;
  return {since_best >= std::max<std::size_t>(patience, 1), best + 1};
}

Tensor<float> assemble_batch(const model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ArgumentError("assemble_batch: empty batch");
  const std::size_t size = model.info.fixed_input;
  if (size == 0) {
    if (model.info.in_channels != 3) throw ArgumentError("assemble_batch: variable-size models take RGB input");
    std::vector<Image> images;
    std::vector<int> labels;
    images.reserve(indices.size());
    for (std::size_t i : indices) {
      images.push_back(crops[i].image);
      labels.push_back(crops[i].label);
    }
    return data::pad_batch(images, labels).pixels;
  }

  const std::size_t channels = model.info.in_channels;
  if (channels != 1 && channels != 3) throw ArgumentError("assemble_batch: fixed-size models take 1 or 3 channels");
  Tensor<float> out(indices.size(), channels, size, size);
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const Image& img = crops[indices[n]].image;
    std::vector<std::vector<double>> planes;
    if (channels == 1) {
      planes.push_back(to_gray(img));
    } else {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        std::vector<double> plane(img.width * img.height);
        for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.pixels[3 * i + ch];
        planes.push_back(std::move(plane));
      }
    }
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const auto resized = resize_plane(planes[ch], img.width, img.height, size, size);
      float* dst = out.data() + out.offset(n, ch, 0, 0);
      for (std::size_t i = 0; i < resized.size(); ++i) dst[i] = static_cast<float>(resized[i] / 255.0);
    }
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

struct EvalResult {
  double loss = 0.0;
  std::vector<double> scores;
};

EvalResult evaluate_split(const model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> indices,
                          std::size_t batch_size) {
  EvalResult result;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const Tensor<float> x = assemble_batch(model, crops, chunk);
    const auto pass = model::predict(model, x);
    std::vector<int> labels;
    for (std::size_t i : chunk) labels.push_back(crops[i].label);
    const auto xent = nn::softmax_xent<float>(pass.logits, labels);
    loss_sum += static_cast<double>(xent.loss) * static_cast<double>(chunk.size());
    for (std::size_t n = 0; n < chunk.size(); ++n) result.scores.push_back(pass.probs.at(n, 1, 0, 0));
  }
  result.loss = loss_sum / static_cast<double>(indices.size());
  return result;
}

std::string layer_norms(const model::Model& model) {
  std::ostringstream out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (l.weight.empty()) continue;
    double sq = 0.0;
    for (float v : l.weight.storage()) sq += static_cast<double>(v) * v;
    out << " layer" << i << "(" << model::layer_type_name(l.type) << ")=" << std::sqrt(sq);
  }
  return out.str();
}

}  // namespace

std::vector<float> predict_scores(const model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> indices,
                                  std::size_t batch_size) {
  if (batch_size == 0) throw ArgumentError("predict_scores: batch_size must be at least 1");
  std::vector<float> scores;
  scores.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const auto pass = model::predict(model, assemble_batch(model, crops, chunk));
    for (std::size_t n = 0; n < chunk.size(); ++n) scores.push_back(pass.probs.at(n, 1, 0, 0));
  }
  return scores;
}

void recalibrate_batchnorm(model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> indices,
                           std::size_t batch_size) {
  if (batch_size == 0) throw ArgumentError("recalibrate_batchnorm: batch_size must be at least 1");
  std::vector<std::size_t> bn;
  for (std::size_t li = 0; li < model.layers.size(); ++li)
    if (model.layers[li].type == model::LayerType::kBatchNorm) bn.push_back(li);
  if (bn.empty() || indices.empty()) return;

  // The running update itself is irrelevant here; the batch statistics are
  // read back from the train-mode contexts.
  std::vector<std::vector<double>> mean(bn.size()), var(bn.size());
  for (std::size_t j = 0; j < bn.size(); ++j) {
    mean[j].assign(model.layers[bn[j]].out, 0.0);
    var[j].assign(model.layers[bn[j]].out, 0.0);
  }
  const nn::Mode saved = model.mode;
  model.mode = nn::Mode::kTrain;
  const auto batches = make_batches(indices, batch_size);
  for (const auto& idx : batches) {
    const auto pass = model::forward(model, assemble_batch(model, crops, idx));
    for (std::size_t j = 0; j < bn.size(); ++j) {
      const auto& ctx = pass.contexts[bn[j]];
      for (std::size_t c = 0; c < mean[j].size(); ++c) {
        mean[j][c] += static_cast<double>(ctx.mean[c]);
        var[j][c] += static_cast<double>(ctx.var[c]);
      }
    }
  }
  const double n = static_cast<double>(batches.size());
  for (std::size_t j = 0; j < bn.size(); ++j) {
    auto& layer = model.layers[bn[j]];
    for (std::size_t c = 0; c < mean[j].size(); ++c) {
      layer.running_mean.span()[c] = static_cast<float>(mean[j][c] / n);
      layer.running_var.span()[c] = static_cast<float>(var[j][c] / n);
    }
  }
  model.mode = saved;
}

History train(model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> train_indices,
              std::span<const std::size_t> val_indices, const TrainConfig& config) {
  config.validate();
  if (train_indices.empty()) throw ArgumentError("train: empty training set");
  for (std::size_t i : train_indices)
    if (i >= crops.size()) throw ArgumentError("train: index out of range");

  std::optional<std::array<float, 2>> weights;
  if (config.class_weights) {
    std::array<std::size_t, 2> counts{};
    for (std::size_t i : train_indices) counts[static_cast<std::size_t>(crops[i].label)]++;
    const double n = static_cast<double>(train_indices.size());
    weights = std::array<float, 2>{counts[0] ? static_cast<float>(n / (2.0 * counts[0])) : 0.0f,
                                   counts[1] ? static_cast<float>(n / (2.0 * counts[1])) : 0.0f};
  }

  History history;
  OptimizerState state;
  auto params = model::trainable_tensors(model);
  state.first.resize(params.size());
  state.second.resize(params.size());
  Rng rng(config.seed);
  std::optional<model::Model> best_model;
  std::vector<double> monitored;
  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    model.mode = nn::Mode::kTrain;
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto batches = make_batches(order, config.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(crops[i].label);
      auto pass = model::forward(model, assemble_batch(model, crops, idx));
      const auto xent = nn::softmax_xent<float>(pass.logits, labels, weights);
      if (!std::isfinite(xent.loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b + 1) +
                           ";" + layer_norms(model));
      loss_sum += static_cast<double>(xent.loss) * static_cast<double>(idx.size());
      for (std::size_t n = 0; n < idx.size(); ++n)
        if ((pass.probs.at(n, 1, 0, 0) > 0.5f ? 1 : 0) == labels[n]) ++correct;

      auto grads = model::backward(model, pass.contexts, xent.dlogits);
      ++state.step;
      std::size_t p = 0;
      for (std::size_t li = 0; li < model.layers.size(); ++li) {
        for (const auto& g : grads.layers[li]) {
          if (config.optimizer == OptimizerKind::kAdam)
            adam_step(params[p]->span(), g.span(), state.first[p], state.second[p], state.step, config.learning_rate, config.beta1,
                      config.beta2, config.adam_eps);
          else
            sgd_step(params[p]->span(), g.span(), state.first[p], config.learning_rate, config.momentum);
          ++p;
        }
      }
      if (!model::all_finite(model))
        throw NumericError("train: non-finite parameters after epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(b + 1) + ";" + layer_norms(model));
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    model.mode = nn::Mode::kInfer;
    if (!val_indices.empty()) {
      const auto eval = evaluate_split(model, crops, val_indices, config.batch_size);
      std::vector<int> labels;
      for (std::size_t i : val_indices) labels.push_back(crops[i].label);
      const auto report = metrics::evaluate(labels, eval.scores);
      record.val_loss = eval.loss;
      record.val_accuracy = report.accuracy;
      record.val_macro_f1 = report.macro_f1;
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(record);

    if (config.early_stopping.enabled && record.val_loss) {
      monitored.push_back(*record.val_loss);
      const auto decision = early_stopping_check(monitored, config.early_stopping.patience);
      if (decision.restore_epoch == epoch) best_model = model;
      if (decision.stop) {
        history.stopped_early = true;
        break;
      }
    }
    if (config.stop_at_perfect_train && record.train_accuracy == 1.0) break;
  }

  if (best_model) {
    const auto decision = early_stopping_check(monitored, config.early_stopping.patience);
    model = std::move(*best_model);
    history.restored_epoch = decision.restore_epoch;
  }
  if (config.recalibrate_bn) recalibrate_batchnorm(model, crops, train_indices, config.batch_size);
  model.mode = nn::Mode::kInfer;
  return history;
}

std::string history_json(const History& history) {
  nlohmann::ordered_json j;
  j["epochs"] = nlohmann::ordered_json::array();
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  for (const auto& e : history.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["train_accuracy"] = e.train_accuracy;
    row["val_loss"] = opt(e.val_loss);
    row["val_accuracy"] = opt(e.val_accuracy);
    row["val_macro_f1"] = opt(e.val_macro_f1);
    // Wall-clock time is the one non-reproducible field.
    if (!deterministic()) row["seconds"] = e.seconds;
    j["epochs"].push_back(row);
  }
  j["stopped_early"] = history.stopped_early;
  j["restored_epoch"] = history.restored_epoch ? nlohmann::ordered_json(*history.restored_epoch) : nlohmann::ordered_json(nullptr);
  return j.dump(2);
}

}  // namespace adenet::train
