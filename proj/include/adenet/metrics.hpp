#pragma once

// Binary evaluation with damaged as the positive class. Macro metrics are
// unweighted means over the two classes; 0/0 ratios are defined as 0.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace adenet::metrics {

struct ConfusionMatrix2 {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;

  std::size_t total() const { return tp + fn + fp + tn; }
  std::size_t positives() const { return tp + fn; }
  std::size_t negatives() const { return fp + tn; }
  ConfusionMatrix2& operator+=(const ConfusionMatrix2& o) {
    tp += o.tp, fn += o.fn, fp += o.fp, tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionMatrix2&) const = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double support = 0.0;
  bool operator==(const ClassMetrics&) const = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> roc_auc;
  double fn_rate = 0.0;
  ClassMetrics damaged;
  ClassMetrics undamaged;
  bool operator==(const MetricsReport&) const = default;
};

struct RocCurve {
  /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
  std::vector<std::pair<double, double>> points;
};

struct RocResult {
  double auc = 0.0;
  RocCurve curve;
};

enum class FnDenominator { kTotal, kPositives };

ConfusionMatrix2 confusion(std::span<const int> labels, std::span<const int> predictions);

/// Accuracy, per-class and macro metrics, and fn_rate over all samples.
/// The AUC field is left empty.
MetricsReport metrics_from_confusion(const ConfusionMatrix2& m);

/// Trapezoidal area over every distinct score threshold. Tied scores form
/// one diagonal step, so the area equals the Mann-Whitney statistic with
/// ties counted 1/2.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

/// fn / total by default; fn / (fn + tp) for the miss-rate variant.
double false_negative_rate(const ConfusionMatrix2& m, FnDenominator denominator = FnDenominator::kTotal);

/// Fieldwise arithmetic mean. AUC is averaged only when every report has one.
MetricsReport aggregate_folds(std::span<const MetricsReport> reports);

/// Full report from damaged-class scores. A score equal to the threshold
/// predicts undamaged.
MetricsReport evaluate(std::span<const int> labels, std::span<const double> scores, double threshold = 0.5);

inline constexpr int kReportSchemaVersion = 1;

std::string report_to_json(const MetricsReport& report, int indent = 2);
MetricsReport report_from_json(const std::string& text);
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& report);

void write_report_json(const MetricsReport& report, const std::filesystem::path& path);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);

}  // namespace adenet::metrics
