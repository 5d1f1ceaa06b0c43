#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgetree/flowdata.hpp"

namespace edgetree {

struct TrainConfig {
  int max_depth = 12;
  double ccp_alpha = 0.0001;
  // Fixed CART settings: Gini criterion, best splitter, all features
  // considered at every node.
  static constexpr std::size_t min_samples_split = 2;
  static constexpr std::size_t min_samples_leaf = 1;
  // Unused by the deterministic best splitter; kept so configs stay stable.
  std::uint64_t seed = 0;
  // A single-class training set yields a one-leaf tree instead of an error.
  bool allow_single_class = false;

  void validate() const;
};

// Node of a binary tree stored in a flat pre-order array. Leaves have
// feature == -1. Internal nodes carry the summed counts of their leaves.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  ClassCounts counts{};
  FlowClass predicted = FlowClass::benign;

  bool is_leaf() const { return feature < 0; }
};

// Majority class; ties go to benign.
FlowClass majority_class(const ClassCounts& counts);

struct TreeStats {
  std::size_t depth = 0;
  std::size_t node_count = 0;
  std::size_t leaf_count = 0;
  std::set<std::size_t> features_used;

  friend bool operator==(const TreeStats&, const TreeStats&) = default;
};

class DecisionTree {
 public:
  // Accepts nodes in any order with nodes[root] as the root. Internal counts
  // and every predicted class are recomputed from leaf counts, and the
  // result is relaid in canonical pre-order. Throws ModelFormatError on
  // dangling, shared or cyclic children and out-of-range features.
  DecisionTree(std::size_t n_features, std::vector<TreeNode> nodes, std::size_t root = 0);

  static DecisionTree leaf(std::size_t n_features, ClassCounts counts);

  std::size_t n_features() const { return n_features_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& node(std::size_t i) const { return nodes_[i]; }

  std::size_t depth() const { return stats_.depth; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const { return stats_.leaf_count; }
  const std::set<std::size_t>& features_used() const { return stats_.features_used; }
  const TreeStats& stats() const { return stats_; }

  // Descends left when value <= threshold. Throws DataError on arity mismatch.
  FlowClass predict(FlowRecord record) const;
  // Index of the leaf the record lands in.
  std::size_t leaf_index(FlowRecord record) const;

  // Structural equality: shape, split features, exact thresholds, leaf counts.
  friend bool operator==(const DecisionTree& a, const DecisionTree& b);

 private:
  std::size_t n_features_;
  std::vector<TreeNode> nodes_;
  TreeStats stats_;
};

TreeStats tree_stats(const DecisionTree& tree);

// Gini impurity 1 - sum p_k^2. Throws DataError on an empty node.
double gini(const ClassCounts& counts);

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity_decrease = 0.0;
};

// Best (feature, threshold) over `rows`: maximal impurity decrease, ties to
// the lowest feature, then the lowest threshold. Thresholds sit midway
// between consecutive distinct values. Empty when no split improves purity.
std::optional<Split> best_split(const LabeledDataset& data, std::span<const std::size_t> rows);

// Greedy CART growth followed by ccp_prune(config.ccp_alpha).
DecisionTree fit(const LabeledDataset& train, const TrainConfig& config);
// Growth only.
DecisionTree grow(const LabeledDataset& train, const TrainConfig& config);

// Minimal cost-complexity pruning with training misclassification rate as
// the risk. Weakest links collapse while their effective alpha < alpha.
DecisionTree ccp_prune(const DecisionTree& tree, double alpha);

// Effective alphas of each successive weakest-link collapse, in order.
std::vector<double> ccp_path(const DecisionTree& tree);

// Text model format: header "edgetree-v1 n_features=<n>", then one line per
// node in pre-order, "I <feature> <threshold>" or "L <count0> <count1>".
std::string serialize_tree(const DecisionTree& tree);
DecisionTree parse_tree(std::string_view text);
void save_tree(const DecisionTree& tree, const std::filesystem::path& path);
DecisionTree load_tree(const std::filesystem::path& path);

}  // namespace edgetree
