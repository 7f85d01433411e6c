#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "adenet/error.hpp"
#include "adenet/forest.hpp"
#include "adenet/rng.hpp"

using namespace adenet;
using namespace adenet::forest;

namespace {

struct Data {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

Data xor_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    d.x.push_back({a, b});
    d.y.push_back((a > 0) != (b > 0) ? 1 : 0);
  }
  return d;
}

}  // namespace

TEST_CASE("forest fits XOR") {
  const auto d = xor_data(200, 1);
  ForestConfig cfg;
  cfg.max_depth = 5;
  cfg.seed = 3;
  const auto f = train_forest(d.x, d.y, cfg);
  CHECK(f.trees.size() == 100);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const auto p = forest_predict(f, d.x[i]);
    correct += p.label == d.y[i];
    // Score is a multiple of 1/n_trees.
    CHECK(std::abs(p.score * 100 - std::round(p.score * 100)) < 1e-9);
  }
  CHECK(static_cast<double>(correct) / 200.0 >= 0.95);
}

TEST_CASE("single-class data gives stumps for that class") {
  const std::vector<std::vector<double>> x = {{0.0}, {1.0}, {2.0}};
  for (int cls : {0, 1}) {
    const std::vector<int> y(3, cls);
    const auto f = train_forest(x, y, {.n_trees = 7});
    for (const auto& t : f.trees) CHECK(t.nodes.size() == 1);
    const auto p = forest_predict(f, std::vector<double>{-5.0});
    CHECK(p.label == cls);
    CHECK(p.score == (cls ? 1.0 : 0.0));
  }
}

TEST_CASE("depth-one tree on separable 1-D data splits between the classes") {
  Rng rng(2);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  double max0 = -1e9, min1 = 1e9;
  for (int i = 0; i < 40; ++i) {
    const bool pos = i % 3 == 0;
    const double v = pos ? rng.uniform(2.0, 5.0) : rng.uniform(-3.0, 1.5);
    x.push_back({v});
    y.push_back(pos);
    (pos ? min1 : max0) = pos ? std::min(min1, v) : std::max(max0, v);
  }
  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto t = grow_tree(x, y, all, {.n_trees = 1, .max_depth = 1, .bootstrap = false}, 0);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].threshold > max0);
  CHECK(t.nodes[0].threshold < min1);
}

TEST_CASE("identical trees give a hard score") {
  const auto d = xor_data(60, 4);
  const auto f = train_forest(d.x, d.y, {.n_trees = 9, .max_features = 2, .bootstrap = false, .seed = 1});
  for (const auto& row : d.x) {
    const double s = forest_predict(f, row).score;
    CHECK((s == 0.0 || s == 1.0));
  }
}

TEST_CASE("an even vote predicts undamaged") {
  Forest f;
  f.dim = 1;
  Tree yes, no;
  yes.nodes.push_back({.counts = {0, 3}});
  no.nodes.push_back({.counts = {3, 0}});
  f.trees = {yes, no};
  const auto p = forest_predict(f, std::vector<double>{0.0});
  CHECK(p.score == 0.5);
  CHECK(p.label == 0);
}

TEST_CASE("each tree beats the majority baseline on its bootstrap sample") {
  const auto d = xor_data(120, 6);
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    std::vector<std::size_t> sample;
    for (std::size_t i = 0; i < d.x.size(); ++i) sample.push_back(rng.below(d.x.size()));
    const auto tree = grow_tree(d.x, d.y, sample, {.max_depth = 4}, derive_seed(8, t));
    std::size_t correct = 0, ones = 0;
    for (std::size_t i : sample) {
      correct += tree.predict(d.x[i]) == d.y[i];
      ones += d.y[i];
    }
    CHECK(correct >= std::max(ones, sample.size() - ones));
  }
}

TEST_CASE("training is seed-deterministic and JSON round-trips") {
  const auto d = xor_data(80, 9);
  const auto a = train_forest(d.x, d.y, {.n_trees = 12, .seed = 5});
  const auto b = train_forest(d.x, d.y, {.n_trees = 12, .seed = 5});
  CHECK(forest_to_json(a) == forest_to_json(b));
  const auto c = forest_from_json(forest_to_json(a));
  for (const auto& row : d.x) CHECK(forest_predict(c, row).score == forest_predict(a, row).score);
}

TEST_CASE("forest errors") {
  const std::vector<std::vector<double>> none;
  CHECK_THROWS_AS(train_forest(none, std::vector<int>{}), ArgumentError);
  const auto d = xor_data(20, 1);
  const auto f = train_forest(d.x, d.y, {.n_trees = 3});
  CHECK_THROWS_AS(forest_predict(f, std::vector<double>{1.0}), ArgumentError);
  CHECK_THROWS(forest_from_json("{\"schema\":\"other\"}"));
  CHECK_THROWS_AS(ForestConfig{.n_trees = 0}.validate(), ArgumentError);
}
