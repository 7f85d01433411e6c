#include <doctest.h>

#include <cmath>

#include "adenet/error.hpp"
#include "adenet/metrics.hpp"
#include "adenet/rng.hpp"

using namespace adenet;
using namespace adenet::metrics;

namespace {

// Per-class ratios written out from the four counts, damaged = positive.
struct Expected {
  double accuracy, macro_p, macro_r, macro_f1;
};

Expected by_hand(double tp, double fn, double fp, double tn) {
  const double p1 = tp / (tp + fp), r1 = tp / (tp + fn);
  const double p0 = tn / (tn + fn), r0 = tn / (tn + fp);
  const double f1 = 2 * tp / (2 * tp + fn + fp), f0 = 2 * tn / (2 * tn + fn + fp);
  return {(tp + tn) / (tp + fn + fp + tn), (p0 + p1) / 2, (r0 + r1) / 2, (f0 + f1) / 2};
}

// Pairwise statistic: wins count 2, ties count 1, over 2 * P * N.
double mann_whitney(const std::vector<double>& s, const std::vector<int>& y) {
  unsigned long long twice = 0, pos = 0, neg = 0;
  for (int v : y) (v ? pos : neg)++;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace

TEST_CASE("twenty-epoch confusion counts give the published row") {
  const ConfusionMatrix2 m{1026, 424, 213, 3962};
  const auto r = metrics_from_confusion(m);
  const auto e = by_hand(1026, 424, 213, 3962);
  CHECK(r.accuracy == doctest::Approx(e.accuracy).epsilon(1e-12));
  CHECK(r.macro_precision == doctest::Approx(e.macro_p).epsilon(1e-12));
  CHECK(r.macro_recall == doctest::Approx(e.macro_r).epsilon(1e-12));
  CHECK(r.macro_f1 == doctest::Approx(e.macro_f1).epsilon(1e-12));

  CHECK(std::abs(r.accuracy - 0.8868) <= 0.0005);
  CHECK(std::abs(r.macro_precision - 0.87) <= 0.02);
  CHECK(std::abs(r.macro_recall - 0.83) <= 0.02);
  CHECK(std::abs(r.macro_f1 - 0.84) <= 0.02);
  CHECK(r.fn_rate == doctest::Approx(424.0 / 5625.0).epsilon(1e-12));
  CHECK(false_negative_rate(m, FnDenominator::kPositives) == doctest::Approx(424.0 / 1450.0));
}

TEST_CASE("ten-epoch confusion counts give the published row") {
  const auto r = metrics_from_confusion({947, 503, 257, 3918});
  const auto e = by_hand(947, 503, 257, 3918);
  CHECK(r.accuracy == doctest::Approx(e.accuracy).epsilon(1e-12));
  CHECK(r.macro_f1 == doctest::Approx(e.macro_f1).epsilon(1e-12));
  CHECK(r.macro_recall == doctest::Approx(e.macro_r).epsilon(1e-12));
  CHECK(std::abs(r.accuracy - 0.8649) <= 0.0005);
  CHECK(std::abs(r.macro_f1 - 0.81) <= 0.02);
  CHECK(std::abs(r.macro_recall - 0.80) <= 0.02);
}

TEST_CASE("confusion from labels and degenerate classes") {
  const std::vector<int> y = {1, 1, 0, 0, 1}, p = {1, 0, 0, 1, 1};
  CHECK(confusion(y, p) == ConfusionMatrix2{2, 1, 1, 1});
  CHECK_THROWS_AS(confusion(y, std::vector<int>{1}), ArgumentError);

  // No predicted positives: precision of that class is 0 by convention.
  const auto r = metrics_from_confusion({0, 3, 0, 7});
  CHECK(r.damaged.precision == 0.0);
  CHECK(r.damaged.f1 == 0.0);
  CHECK(r.undamaged.recall == 1.0);
}

TEST_CASE("trapezoidal AUC equals the Mann-Whitney statistic") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(63);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties are common.
      s[i] = trial % 2 ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      y[i] = rng.below(2);
    }
    y[0] = 0, y[1] = 1;
    CHECK(roc_auc(s, y).auc == mann_whitney(s, y));
  }
}

TEST_CASE("roc curve endpoints and errors") {
  const auto r = roc_auc(std::vector<double>{0.9, 0.1, 0.8, 0.3}, std::vector<int>{1, 0, 1, 0});
  CHECK(r.auc == 1.0);
  CHECK(r.curve.points.front() == std::pair<double, double>{0.0, 0.0});
  CHECK(r.curve.points.back() == std::pair<double, double>{1.0, 1.0});
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ArgumentError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ArgumentError);
}

TEST_CASE("fold aggregation is the plain mean") {
  MetricsReport a, b;
  a.accuracy = 0.8, b.accuracy = 0.9;
  a.macro_f1 = 0.5, b.macro_f1 = 0.7;
  a.roc_auc = 0.6, b.roc_auc = 0.8;
  const std::vector<MetricsReport> both = {a, b};
  const auto m = aggregate_folds(both);
  CHECK(m.accuracy == doctest::Approx(0.85));
  CHECK(m.macro_f1 == doctest::Approx(0.6));
  REQUIRE(m.roc_auc);
  CHECK(*m.roc_auc == doctest::Approx(0.7));
  CHECK_THROWS_AS(aggregate_folds(std::vector<MetricsReport>{}), ArgumentError);
}

TEST_CASE("report json round trip") {
  auto r = metrics_from_confusion({5, 2, 1, 9});
  r.roc_auc = 0.75;
  CHECK(report_from_json(report_to_json(r)) == r);
  r.roc_auc.reset();
  CHECK(report_from_json(report_to_json(r)) == r);
}
