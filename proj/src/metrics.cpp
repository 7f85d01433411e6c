#include "adenet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "adenet/error.hpp"

namespace adenet::metrics {
namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

ClassMetrics class_metrics(std::size_t hit, std::size_t predicted, std::size_t actual) {
  ClassMetrics c;
  c.precision = ratio(static_cast<double>(hit), static_cast<double>(predicted));
  c.recall = ratio(static_cast<double>(hit), static_cast<double>(actual));
  c.f1 = ratio(2.0 * c.precision * c.recall, c.precision + c.recall);
  c.support = static_cast<double>(actual);
  return c;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ConfusionMatrix2 confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw ArgumentError("confusion: length mismatch");
  if (labels.empty()) throw ArgumentError("confusion: empty input");
  ConfusionMatrix2 m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) throw ArgumentError("confusion: values must be 0 or 1");
    if (y == 1) (p == 1 ? m.tp : m.fn)++;
    else (p == 1 ? m.fp : m.tn)++;
  }
  return m;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix2& m) {
  if (m.total() == 0) throw ArgumentError("metrics_from_confusion: empty confusion matrix");
  MetricsReport r;
  r.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  r.damaged = class_metrics(m.tp, m.tp + m.fp, m.tp + m.fn);
  r.undamaged = class_metrics(m.tn, m.tn + m.fn, m.tn + m.fp);
  r.macro_precision = (r.damaged.precision + r.undamaged.precision) / 2.0;
  r.macro_recall = (r.damaged.recall + r.undamaged.recall) / 2.0;
  r.macro_f1 = (r.damaged.f1 + r.undamaged.f1) / 2.0;
  r.fn_rate = false_negative_rate(m);
  return r;
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("roc_auc: length mismatch");
  std::size_t positives = 0, negatives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ArgumentError("roc_auc: labels must be 0 or 1");
    (y == 1 ? positives : negatives)++;
  }
  if (positives == 0 || negatives == 0) throw ArgumentError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult result;
  result.curve.points.emplace_back(0.0, 0.0);
  // Twice the area in units of one positive x one negative, kept integral.
  unsigned long long twice_area = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t dtp = 0, dfp = 0;
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) (labels[order[i]] == 1 ? dtp : dfp)++;
    twice_area += static_cast<unsigned long long>(dfp) * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    result.curve.points.emplace_back(static_cast<double>(fp) / static_cast<double>(negatives),
                                     static_cast<double>(tp) / static_cast<double>(positives));
  }
  result.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return result;
}

double false_negative_rate(const ConfusionMatrix2& m, FnDenominator denominator) {
  const std::size_t den = denominator == FnDenominator::kTotal ? m.total() : m.positives();
  if (den == 0) throw ArgumentError("false_negative_rate: zero denominator");
  return static_cast<double>(m.fn) / static_cast<double>(den);
}

MetricsReport aggregate_folds(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ArgumentError("aggregate_folds: empty report list");
  const double n = static_cast<double>(reports.size());
  MetricsReport mean;
  bool all_auc = true;
  double auc = 0.0;
  auto add_class = [](ClassMetrics& acc, const ClassMetrics& c) {
    acc.precision += c.precision, acc.recall += c.recall, acc.f1 += c.f1, acc.support += c.support;
  };
  for (const auto& r : reports) {
    mean.accuracy += r.accuracy;
    mean.macro_precision += r.macro_precision;
    mean.macro_recall += r.macro_recall;
    mean.macro_f1 += r.macro_f1;
    mean.fn_rate += r.fn_rate;
    add_class(mean.damaged, r.damaged);
    add_class(mean.undamaged, r.undamaged);
    if (r.roc_auc) auc += *r.roc_auc;
    else all_auc = false;
  }
  auto scale = [n](ClassMetrics& c) { c.precision /= n, c.recall /= n, c.f1 /= n, c.support /= n; };
  mean.accuracy /= n;
  mean.macro_precision /= n;
  mean.macro_recall /= n;
  mean.macro_f1 /= n;
  mean.fn_rate /= n;
  scale(mean.damaged);
  scale(mean.undamaged);
  if (all_auc) mean.roc_auc = auc / n;
  return mean;
}

MetricsReport evaluate(std::span<const int> labels, std::span<const double> scores, double threshold) {
  if (labels.size() != scores.size()) throw ArgumentError("evaluate: length mismatch");
  std::vector<int> predictions(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) predictions[i] = scores[i] > threshold ? 1 : 0;
  MetricsReport r = metrics_from_confusion(confusion(labels, predictions));
  const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1) != labels.end();
  if (both) r.roc_auc = roc_auc(scores, labels).auc;
  return r;
}

namespace {

nlohmann::ordered_json class_json(const ClassMetrics& c) {
  nlohmann::ordered_json j;
  j["precision"] = c.precision;
  j["recall"] = c.recall;
  j["f1"] = c.f1;
  j["support"] = c.support;
  return j;
}

ClassMetrics class_from_json(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(), j.at("support").get<double>()};
}

}  // namespace

std::string report_to_json(const MetricsReport& r, int indent) {
  nlohmann::ordered_json j;
  j["schema"] = "adenet.metrics_report";
  j["version"] = kReportSchemaVersion;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["roc_auc"] = r.roc_auc ? nlohmann::ordered_json(*r.roc_auc) : nlohmann::ordered_json(nullptr);
  j["fn_rate"] = r.fn_rate;
  j["per_class"]["damaged"] = class_json(r.damaged);
  j["per_class"]["undamaged"] = class_json(r.undamaged);
  return j.dump(indent);
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != kReportSchemaVersion) throw DataError("metrics report: unsupported version");
    MetricsReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    if (!j.at("roc_auc").is_null()) r.roc_auc = j["roc_auc"].get<double>();
    r.fn_rate = j.at("fn_rate").get<double>();
    r.damaged = class_from_json(j.at("per_class").at("damaged"));
    r.undamaged = class_from_json(j.at("per_class").at("undamaged"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics report: ") + e.what());
  }
}

std::string report_csv_header() {
  return "accuracy,macro_precision,macro_recall,macro_f1,roc_auc,fn_rate,"
         "damaged_precision,damaged_recall,damaged_f1,damaged_support,"
         "undamaged_precision,undamaged_recall,undamaged_f1,undamaged_support";
}

std::string report_csv_row(const MetricsReport& r) {
  std::string row;
  auto put = [&](double v) {
    if (!row.empty()) row += ',';
    row += format_double(v);
  };
  put(r.accuracy);
  put(r.macro_precision);
  put(r.macro_recall);
  put(r.macro_f1);
  if (r.roc_auc) put(*r.roc_auc);
  else row += ',';
  put(r.fn_rate);
  for (const ClassMetrics* c : {&r.damaged, &r.undamaged}) {
    put(c->precision);
    put(c->recall);
    put(c->f1);
    put(c->support);
  }
  return row;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_report_json(const MetricsReport& report, const std::filesystem::path& path) {
  open_out(path) << report_to_json(report) << '\n';
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
  open_out(path) << report_csv_header() << '\n' << report_csv_row(report) << '\n';
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "fpr,tpr\n";
  for (const auto& [fpr, tpr] : curve.points) out << format_double(fpr) << ',' << format_double(tpr) << '\n';
}

}  // namespace adenet::metrics
