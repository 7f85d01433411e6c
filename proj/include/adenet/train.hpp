#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adenet/data.hpp"
#include "adenet/model.hpp"

namespace adenet::train {

enum class OptimizerKind { kAdam, kSgdMomentum };

struct EarlyStopping {
  bool enabled = false;
  std::size_t patience = 3;
  /// Only validation loss is monitored.
  std::string monitor = "val_loss";
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  EarlyStopping early_stopping;
  bool class_weights = false;
  std::uint64_t seed = 0;
  /// Stop as soon as an epoch reaches 100% training accuracy.
  bool stop_at_perfect_train = false;
  /// Replace the batch-norm running averages with population statistics of
  /// the final weights once training ends.
  bool recalibrate_bn = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
  std::optional<double> val_macro_f1;
  double seconds = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
  std::optional<std::size_t> restored_epoch;  // 1-based
};

/// Per-parameter optimizer slots.
struct OptimizerState {
  std::vector<std::vector<float>> first;   // momentum velocity or Adam m
  std::vector<std::vector<float>> second;  // Adam v
  std::size_t step = 0;
};

/// v <- momentum * v + grad; param <- param - lr * v.
void sgd_step(std::span<float> param, std::span<const float> grad, std::vector<float>& velocity, double lr, double momentum);

/// Bias-corrected Adam. `step` is the 1-based step index after increment.
void adam_step(std::span<float> param, std::span<const float> grad, std::vector<float>& m, std::vector<float>& v, std::size_t step,
               double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct StopDecision {
  bool stop = false;
  std::size_t restore_epoch = 0;  // 1-based epoch with the best monitored value
};

/// Stops once the monitored value has not improved for `patience`
/// consecutive epochs (at least one). The restore epoch is the earliest
/// argmin.
StopDecision early_stopping_check(std::span<const double> monitored, std::size_t patience);

/// Converts crops into the input tensor the model expects: padded RGB for
/// variable-size models, resized grayscale/RGB for fixed-input models.
Tensor<float> assemble_batch(const model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> indices);

/// Damaged-class probabilities for `indices` in batches of `batch_size`.
std::vector<float> predict_scores(const model::Model& model, std::span<const data::Crop> crops,
                                  std::span<const std::size_t> indices, std::size_t batch_size = 16);

/// Sets every batch-norm layer's running mean and variance to the average
/// of its per-batch statistics over `indices` (fixed order, same batching
/// as training). No-op for models without batch norm.
void recalibrate_batchnorm(model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> indices,
                           std::size_t batch_size);

/// Mini-batch training. Batch-norm needs at least two samples, so a
/// trailing batch of one is merged into the previous batch.
History train(model::Model& model, std::span<const data::Crop> crops, std::span<const std::size_t> train_indices,
              std::span<const std::size_t> val_indices, const TrainConfig& config);

std::string history_json(const History& history);

}  // namespace adenet::train
