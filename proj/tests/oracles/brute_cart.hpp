#pragma once

// Exhaustive CART reference. At every node it enumerates each (feature,
// midpoint) pair, scores it with the textbook weighted-Gini decrease held as
// an exact rational, and keeps the strict best in (feature, threshold) order.
// It shares no code with the library's split search.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "edgetree/cart.hpp"
#include "edgetree/flowdata.hpp"

namespace edgetree::testing {

struct OracleNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::uint64_t benign = 0;
  std::uint64_t attack = 0;
  std::unique_ptr<OracleNode> left;
  std::unique_ptr<OracleNode> right;
};

// p/q with q > 0; values here are tiny so __int128 never overflows.
struct Rational {
  __int128 p = 0;
  __int128 q = 1;
};

inline Rational sub(Rational a, Rational b) { return {a.p * b.q - b.p * a.q, a.q * b.q}; }
inline Rational add(Rational a, Rational b) { return {a.p * b.q + b.p * a.q, a.q * b.q}; }
inline bool greater(Rational a, Rational b) { return a.p * b.q > b.p * a.q; }

// Gini(c) = (n^2 - a^2 - b^2) / n^2
inline Rational gini_rational(std::uint64_t a, std::uint64_t b) {
  const __int128 n = a + b;
  return {n * n - __int128(a) * a - __int128(b) * b, n * n};
}

inline std::unique_ptr<OracleNode> brute_cart(const LabeledDataset& data, const std::vector<std::size_t>& rows,
                                              int depth, int max_depth) {
  auto node = std::make_unique<OracleNode>();
  for (const auto r : rows) (data.label(r) == FlowClass::attack ? node->attack : node->benign)++;
  const std::uint64_t n = rows.size();
  if (depth >= max_depth || n < 2 || node->attack == 0 || node->benign == 0) return node;

  const Rational parent = gini_rational(node->benign, node->attack);
  std::optional<Rational> best_gain;
  std::size_t best_feature = 0;
  double best_threshold = 0.0;
  for (std::size_t f = 0; f < data.feature_count(); ++f) {
    std::set<double> distinct;
    for (const auto r : rows) distinct.insert(data.value(r, f));
    std::vector<double> sorted(distinct.begin(), distinct.end());
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const double t = (sorted[i] + sorted[i + 1]) / 2.0;
      std::uint64_t lb = 0, la = 0, rb = 0, ra = 0;
      for (const auto r : rows) {
        const bool attack = data.label(r) == FlowClass::attack;
        if (data.value(r, f) <= t) {
          (attack ? la : lb)++;
        } else {
          (attack ? ra : rb)++;
        }
      }
      // weighted child impurity: sum (n_c / n) * Gini(c)
      const Rational wl{gini_rational(lb, la).p * __int128(lb + la), gini_rational(lb, la).q * __int128(n)};
      const Rational wr{gini_rational(rb, ra).p * __int128(rb + ra), gini_rational(rb, ra).q * __int128(n)};
      const Rational gain = sub(parent, add(wl, wr));
      if (!best_gain || greater(gain, *best_gain)) {
        best_gain = gain;
        best_feature = f;
        best_threshold = t;
      }
    }
  }
  if (!best_gain || !greater(*best_gain, Rational{0, 1})) return node;

  std::vector<std::size_t> left_rows, right_rows;
  for (const auto r : rows) (data.value(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
  node->leaf = false;
  node->feature = best_feature;
  node->threshold = best_threshold;
  node->left = brute_cart(data, left_rows, depth + 1, max_depth);
  node->right = brute_cart(data, right_rows, depth + 1, max_depth);
  return node;
}

inline std::unique_ptr<OracleNode> brute_cart(const LabeledDataset& data, int max_depth) {
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return brute_cart(data, rows, 0, max_depth);
}

// Structure, split features, exact thresholds and leaf counts.
inline bool same_tree(const OracleNode& oracle, const DecisionTree& tree, std::size_t index = 0) {
  const auto& node = tree.node(index);
  if (oracle.leaf != node.is_leaf()) return false;
  if (oracle.leaf) return node.counts[0] == oracle.benign && node.counts[1] == oracle.attack;
  return static_cast<std::size_t>(node.feature) == oracle.feature && node.threshold == oracle.threshold &&
         same_tree(*oracle.left, tree, static_cast<std::size_t>(node.left)) &&
         same_tree(*oracle.right, tree, static_cast<std::size_t>(node.right));
}

}  // namespace edgetree::testing
