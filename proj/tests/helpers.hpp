// Shared builders for hand-made models and matrices.
#pragma once

#include <cstdint>
#include <vector>

#include "treesign/booster.hpp"
#include "treesign/dataset.hpp"

namespace helpers {

// Map with `bins` integer bins per feature: representatives 0..bins-1,
// cuts halfway between them.
inline treesign::BinningMap grid_map(int num_features, std::uint32_t bins) {
  std::vector<treesign::FeatureBins> features(num_features);
  for (auto& fb : features) {
    for (std::uint32_t b = 0; b < bins; ++b) {
      fb.representatives.push_back(static_cast<double>(b));
      if (b + 1 < bins) fb.cuts.push_back(static_cast<double>(b) + 0.5);
    }
  }
  return treesign::BinningMap(std::move(features));
}

inline treesign::TreeNode leaf(double value) {
  treesign::TreeNode node;
  node.value = value;
  return node;
}

inline treesign::TreeNode split(int feature, std::uint32_t threshold,
                                std::int32_t left, std::int32_t right) {
  treesign::TreeNode node;
  node.feature = feature;
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  return node;
}

// One split on `feature` at `threshold`: node 1 left leaf, node 2 right leaf.
inline treesign::RegressionTree stump(int feature, std::uint32_t threshold,
                                      double left_value, double right_value) {
  treesign::RegressionTree tree;
  tree.nodes = {split(feature, threshold, 1, 2), leaf(left_value),
                leaf(right_value)};
  return tree;
}

inline treesign::RegressionTree single_leaf(double value) {
  treesign::RegressionTree tree;
  tree.nodes = {leaf(value)};
  return tree;
}

// Dense integer matrix as a binned dataset over a grid map.
inline treesign::BinnedDataset binned_from_rows(
    const std::vector<std::vector<std::uint32_t>>& rows,
    const std::vector<int>& labels, std::uint32_t bins, int num_classes) {
  treesign::BinnedDataset data;
  data.num_features = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  data.num_classes = num_classes;
  data.map = grid_map(data.num_features, bins);
  data.labels = labels;
  for (const auto& row : rows) {
    for (std::uint32_t v : row) data.bins.push_back(v);
  }
  return data;
}

// 2 features x 4 bins, 2 classes, 2 iterations of stumps: small enough to
// enumerate every input, non-trivial enough to give distinct gaps.
inline treesign::Ensemble toy_ensemble() {
  treesign::Ensemble model;
  model.num_classes = 2;
  model.iterations = 2;
  model.max_leaves = 2;
  model.learning_rate = 0.1;
  model.bins = grid_map(2, 4);
  model.trees = {
      {stump(0, 1, 0.30, -0.10), stump(1, 0, -0.20, 0.40)},
      {stump(0, 2, 0.05, 0.50), stump(1, 2, 0.15, -0.25)},
  };
  return model;
}

// Linearly separable 2-class blob pair.
inline treesign::RawDataset separable_toy(int per_class = 10) {
  treesign::RawDataset data;
  data.num_features = 2;
  data.num_classes = 2;
  for (int i = 0; i < per_class; ++i) {
    treesign::Instance a;
    a.label = 1;
    a.features = {{1, 1.0 + 0.1 * i}, {2, 2.0 + 0.2 * i}};
    data.instances.push_back(a);
    treesign::Instance b;
    b.label = 2;
    b.features = {{1, 11.0 + 0.1 * i}, {2, 12.0 + 0.2 * i}};
    data.instances.push_back(b);
  }
  return data;
}

}  // namespace helpers
