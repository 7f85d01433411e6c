#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace adenet::forest {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 16;
  std::size_t min_leaf = 1;
  /// Features tried per split; 0 means ceil(sqrt(d)).
  std::size_t max_features = 0;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Internal nodes route x[feature] <= threshold to `left`.
struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1, right = -1;
  std::array<std::size_t, 2> counts{};  // class counts of the training samples reaching this node

  bool leaf() const { return feature < 0; }
  /// Majority class; ties go to undamaged.
  int vote() const { return counts[1] > counts[0] ? 1 : 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // root first
  int predict(std::span<const double> x) const;
};

struct Forest {
  ForestConfig config;
  std::size_t dim = 0;
  std::vector<Tree> trees;
};

struct Prediction {
  int label = 0;
  double score = 0.0;  // fraction of trees voting damaged
};

/// Single CART tree on the given sample multiset (indices may repeat).
Tree grow_tree(std::span<const std::vector<double>> x, std::span<const int> y, std::span<const std::size_t> samples,
               const ForestConfig& config, std::uint64_t seed);

/// Rows of `x` are samples. Single-class data yields stumps voting that class.
Forest train_forest(std::span<const std::vector<double>> x, std::span<const int> y, const ForestConfig& config = {});

/// label = score > 0.5, so an even split predicts undamaged.
Prediction forest_predict(const Forest& forest, std::span<const double> x);

std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& text);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

}  // namespace adenet::forest
