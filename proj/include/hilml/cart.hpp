#pragma once

#include <cstddef>
#include <stop_token>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hilml/error.hpp"

namespace hilml {

/// Flat binary tree.  Internal nodes route `x[feature] <= threshold` left and
/// everything else (including NaN) right.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  int depth = 0;
  std::size_t samples = 0;
  double value = 0;                  // regression: mean target
  int class_index = -1;              // classification: majority class
  std::vector<double> class_counts;  // classification only

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct TreeGrowth {
  int max_depth = 5;
  std::size_t min_leaf = 1;
};

/// Regression tree on variance reduction.  Split ties go to the lowest feature
/// index, then the lowest threshold.
std::vector<TreeNode> grow_regression_tree(const Eigen::MatrixXd& x, const std::vector<double>& y,
                                           const TreeGrowth& growth, std::stop_token stop = {});

/// Classification tree on Gini impurity; `y` holds class indices in
/// [0, n_classes).  Majority ties go to the lowest class index.
std::vector<TreeNode> grow_classification_tree(const Eigen::MatrixXd& x, const std::vector<int>& y,
                                               int n_classes, const TreeGrowth& growth,
                                               std::stop_token stop = {});

/// Index of the leaf reached by row `r` of `x`.
int tree_leaf(const std::vector<TreeNode>& nodes, const Eigen::MatrixXd& x, Eigen::Index r);

int tree_depth(const std::vector<TreeNode>& nodes);
std::size_t tree_leaf_count(const std::vector<TreeNode>& nodes);

/// Nested {feature, threshold, left, right} / {leaf: true, ...} form.
Json tree_to_json(const std::vector<TreeNode>& nodes);
std::vector<TreeNode> tree_from_json(const Json& j);

}  // namespace hilml
