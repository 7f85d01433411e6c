#include "adenet/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "adenet/error.hpp"
#include "adenet/parallel.hpp"
#include "adenet/rng.hpp"

namespace adenet::forest {

void ForestConfig::validate() const {
  if (n_trees == 0) throw ArgumentError("forest: n_trees must be positive");
  if (max_depth == 0) throw ArgumentError("forest: max_depth must be positive");
  if (min_leaf == 0) throw ArgumentError("forest: min_leaf must be positive");
}

int Tree::predict(std::span<const double> x) const {
  std::size_t at = 0;
  while (!nodes[at].leaf()) {
    const TreeNode& n = nodes[at];
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[at].vote();
}

namespace {

double gini_sum(double n0, double n1) {
  // n * gini = n - (n0^2 + n1^2) / n
  const double n = n0 + n1;
  return n > 0.0 ? n - (n0 * n0 + n1 * n1) / n : 0.0;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class Grower {
 public:
  Grower(std::span<const std::vector<double>> x, std::span<const int> y, const ForestConfig& config, std::uint64_t seed)
      : x_(x), y_(y), config_(config), rng_(seed) {
    const std::size_t d = x.empty() ? 0 : x[0].size();
    mtry_ = config.max_features ? std::min(config.max_features, d)
                                : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
    features_.resize(d);
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree grow(std::vector<std::size_t> samples) {
    Tree tree;
    build(tree, samples, 0);
    return tree;
  }

 private:
  int build(Tree& tree, std::vector<std::size_t>& samples, std::size_t depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::array<std::size_t, 2> counts{};
    for (std::size_t s : samples) ++counts[static_cast<std::size_t>(y_[s])];
    tree.nodes[static_cast<std::size_t>(index)].counts = counts;
    if (depth >= config_.max_depth || counts[0] == 0 || counts[1] == 0 || samples.size() < 2 * config_.min_leaf) return index;

    const Split split = best_split(samples, counts);
    if (split.feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (std::size_t s : samples)
      (x_[s][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
    const int l = build(tree, left, depth + 1);
    const int r = build(tree, right, depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  Split best_split(const std::vector<std::size_t>& samples, const std::array<std::size_t, 2>& counts) {
    // Partial Fisher-Yates picks mtry distinct features.
    for (std::size_t i = 0; i < mtry_; ++i) std::swap(features_[i], features_[i + rng_.below(features_.size() - i)]);
    const double parent = gini_sum(static_cast<double>(counts[0]), static_cast<double>(counts[1]));
    Split best;
    std::vector<std::pair<double, int>> column(samples.size());
    for (std::size_t k = 0; k < mtry_; ++k) {
      const std::size_t f = features_[k];
      for (std::size_t i = 0; i < samples.size(); ++i) column[i] = {x_[samples[i]][f], y_[samples[i]]};
      std::sort(column.begin(), column.end());
      std::array<double, 2> left{};
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left[static_cast<std::size_t>(column[i].second)] += 1.0;
        if (column[i].first == column[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = column.size() - nl;
        if (nl < config_.min_leaf || nr < config_.min_leaf) continue;
        const double r0 = static_cast<double>(counts[0]) - left[0], r1 = static_cast<double>(counts[1]) - left[1];
        const double gain = parent - gini_sum(left[0], left[1]) - gini_sum(r0, r1);
        if (gain > best.gain + 1e-12) {
          best.feature = static_cast<int>(f);
          best.gain = gain;
          best.threshold = column[i].first + (column[i + 1].first - column[i].first) / 2.0;
        }
      }
    }
    return best;
  }

  std::span<const std::vector<double>> x_;
  std::span<const int> y_;
  const ForestConfig& config_;
  Rng rng_;
  std::size_t mtry_ = 0;
  std::vector<std::size_t> features_;
};

void check_inputs(std::span<const std::vector<double>> x, std::span<const int> y) {
  if (x.empty()) throw ArgumentError("forest: empty training data");
  if (x.size() != y.size()) throw ArgumentError("forest: feature/label length mismatch");
  const std::size_t d = x[0].size();
  if (d == 0) throw ArgumentError("forest: zero-dimensional features");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d) throw ArgumentError("forest: ragged feature rows");
    if (y[i] != 0 && y[i] != 1) throw ArgumentError("forest: labels must be 0 or 1");
    for (double v : x[i])
      if (!std::isfinite(v)) throw ArgumentError("forest: non-finite feature in row " + std::to_string(i));
  }
}

}  // namespace

Tree grow_tree(std::span<const std::vector<double>> x, std::span<const int> y, std::span<const std::size_t> samples,
               const ForestConfig& config, std::uint64_t seed) {
  check_inputs(x, y);
  config.validate();
  if (samples.empty()) throw ArgumentError("grow_tree: empty sample set");
  Grower grower(x, y, config, seed);
  return grower.grow({samples.begin(), samples.end()});
}

Forest train_forest(std::span<const std::vector<double>> x, std::span<const int> y, const ForestConfig& config) {
  check_inputs(x, y);
  config.validate();
  Forest forest;
  forest.config = config;
  forest.dim = x[0].size();
  forest.trees.resize(config.n_trees);
  parallel_for(config.n_trees, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(config.seed, t);
    std::vector<std::size_t> samples(x.size());
    if (config.bootstrap) {
      Rng rng(derive_seed(seed, 0));
      for (auto& s : samples) s = rng.below(x.size());
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    Grower grower(x, y, config, derive_seed(seed, 1));
    forest.trees[t] = grower.grow(std::move(samples));
  });
  return forest;
}

Prediction forest_predict(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.dim)
    throw ArgumentError("forest_predict: expected " + std::to_string(forest.dim) + " features, got " + std::to_string(x.size()));
  if (forest.trees.empty()) throw ArgumentError("forest_predict: empty forest");
  std::size_t damaged = 0;
  for (const Tree& t : forest.trees) damaged += static_cast<std::size_t>(t.predict(x));
  Prediction p;
  p.score = static_cast<double>(damaged) / static_cast<double>(forest.trees.size());
  p.label = p.score > 0.5 ? 1 : 0;
  return p;
}

std::string forest_to_json(const Forest& forest) {
  nlohmann::ordered_json j;
  j["schema"] = "adenet.forest";
  j["version"] = 1;
  j["dim"] = forest.dim;
  auto& c = j["config"];
  c["n_trees"] = forest.config.n_trees;
  c["max_depth"] = forest.config.max_depth;
  c["min_leaf"] = forest.config.min_leaf;
  c["max_features"] = forest.config.max_features;
  c["bootstrap"] = forest.config.bootstrap;
  c["seed"] = forest.config.seed;
  j["trees"] = nlohmann::ordered_json::array();
  for (const Tree& t : forest.trees) {
    auto nodes = nlohmann::ordered_json::array();
    for (const TreeNode& n : t.nodes) {
      if (n.leaf()) nodes.push_back({{"counts", {n.counts[0], n.counts[1]}}});
      else
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                         {"counts", {n.counts[0], n.counts[1]}}});
    }
    j["trees"].push_back(std::move(nodes));
  }
  return j.dump();
}

Forest forest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema") != "adenet.forest" || j.at("version") != 1) throw DataError("forest: unsupported schema");
    Forest f;
    f.dim = j.at("dim").get<std::size_t>();
    const auto& c = j.at("config");
    f.config.n_trees = c.at("n_trees").get<std::size_t>();
    f.config.max_depth = c.at("max_depth").get<std::size_t>();
    f.config.min_leaf = c.at("min_leaf").get<std::size_t>();
    f.config.max_features = c.at("max_features").get<std::size_t>();
    f.config.bootstrap = c.at("bootstrap").get<bool>();
    f.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt) {
        TreeNode n;
        n.counts = {jn.at("counts").at(0).get<std::size_t>(), jn.at("counts").at(1).get<std::size_t>()};
        if (jn.contains("feature")) {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
        }
        t.nodes.push_back(n);
      }
      const auto size = static_cast<int>(t.nodes.size());
      if (size == 0) throw DataError("forest: empty tree");
      for (const TreeNode& n : t.nodes) {
        if (n.counts[0] + n.counts[1] == 0) throw DataError("forest: node without samples");
        if (!n.leaf() && (n.feature >= static_cast<int>(f.dim) || n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size))
          throw DataError("forest: malformed node");
      }
      f.trees.push_back(std::move(t));
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("forest: ") + e.what());
  }
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << forest_to_json(forest) << '\n';
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return forest_from_json(ss.str());
}

}  // namespace adenet::forest
