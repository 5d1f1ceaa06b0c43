#include "edgetree/cart.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "edgetree/error.hpp"
#include "edgetree/numfmt.hpp"
#include "edgetree/split_kernels.hpp"

namespace edgetree {

namespace {

using u128 = unsigned __int128;

// Beyond this many rows the exact 128-bit split comparisons could overflow.
constexpr std::size_t kMaxRows = 50'000'000;

constexpr std::string_view kMagic = "edgetree-v";
constexpr std::string_view kVersion = "1";

std::uint64_t misclassified(const ClassCounts& c) {
  return c[0] + c[1] - c[class_index(majority_class(c))];
}

// Exact form of a split's purity mass S = num / den, with
// num = qL*nR + qR*nL and den = nL*nR (q = a^2 + b^2 per side).
struct ExactScore {
  u128 num = 0;
  u128 den = 1;

  static ExactScore of(std::uint64_t n, std::uint64_t a, std::uint64_t nl, std::uint64_t al) {
    const std::uint64_t bl = nl - al;
    const std::uint64_t nr = n - nl;
    const std::uint64_t ar = a - al;
    const std::uint64_t br = nr - ar;
    const u128 ql = u128(al) * al + u128(bl) * bl;
    const u128 qr = u128(ar) * ar + u128(br) * br;
    return {ql * nr + qr * nl, u128(nl) * nr};
  }

  bool beats(const ExactScore& other) const { return num * other.den > other.num * den; }
};

struct Candidate {
  std::size_t feature = 0;
  double threshold = 0.0;
  ExactScore score;
};

double midpoint_threshold(double lo, double hi) {
  double mid = (lo + hi) / 2.0;
  // Rounding may land on `hi` for adjacent doubles; `hi` must still go right.
  if (mid == hi || !std::isfinite(mid)) mid = lo;
  return mid;
}

using SortedRows = std::vector<std::vector<std::uint32_t>>;

SortedRows sort_rows(const LabeledDataset& data, std::span<const std::size_t> rows) {
  SortedRows sorted(data.feature_count());
  for (std::size_t f = 0; f < sorted.size(); ++f) {
    auto& list = sorted[f];
    list.reserve(rows.size());
    for (const auto r : rows) list.push_back(static_cast<std::uint32_t>(r));
    std::stable_sort(list.begin(), list.end(), [&](std::uint32_t x, std::uint32_t y) {
      return data.value(x, f) < data.value(y, f);
    });
  }
  return sorted;
}

class SplitSearch {
 public:
  explicit SplitSearch(const LabeledDataset& data) : data_(data) {}

  std::optional<Split> find(const SortedRows& sorted, const ClassCounts& counts) {
    const std::uint64_t n = counts[0] + counts[1];
    const std::uint64_t a = counts[1];
    if (n < TrainConfig::min_samples_split || counts[0] == 0 || counts[1] == 0) return std::nullopt;

    std::optional<Candidate> best;
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      const auto local = best_for_feature(f, sorted[f], n, a);
      if (local && (!best || local->score.beats(best->score))) best = local;
    }
    if (!best) return std::nullopt;

    // Keep only splits with a strictly positive impurity decrease:
    // S > (A^2 + B^2) / n.
    const u128 parent_q = u128(counts[0]) * counts[0] + u128(counts[1]) * counts[1];
    if (!(best->score.num * n > parent_q * best->score.den)) return std::nullopt;

    const double nd = static_cast<double>(n);
    const double s = static_cast<double>(best->score.num) / static_cast<double>(best->score.den);
    const double decrease = s / nd - static_cast<double>(parent_q) / (nd * nd);
    return Split{best->feature, best->threshold, decrease};
  }

 private:
  std::optional<Candidate> best_for_feature(std::size_t f, const std::vector<std::uint32_t>& list,
                                            std::uint64_t n, std::uint64_t a) {
    left_total_.clear();
    left_attack_.clear();
    position_.clear();
    std::uint64_t attacks = 0;
    for (std::size_t i = 0; i + 1 < list.size(); ++i) {
      if (data_.label(list[i]) == FlowClass::attack) ++attacks;
      if (data_.value(list[i], f) < data_.value(list[i + 1], f)) {
        left_total_.push_back(static_cast<double>(i + 1));
        left_attack_.push_back(static_cast<double>(attacks));
        position_.push_back(i);
      }
    }
    if (position_.empty()) return std::nullopt;

    scores_.resize(position_.size());
    kernels::score_splits({left_total_, left_attack_, static_cast<double>(n), static_cast<double>(a)},
                          scores_);

    // The double scores shortlist near-maximal candidates; the exact integer
    // comparison decides among them so ties break deterministically.
    const double top = *std::max_element(scores_.begin(), scores_.end());
    const double floor = top - std::abs(top) * 1e-9;
    std::optional<Candidate> best;
    for (std::size_t j = 0; j < position_.size(); ++j) {
      if (scores_[j] < floor) continue;
      const auto score = ExactScore::of(n, a, static_cast<std::uint64_t>(left_total_[j]),
                                        static_cast<std::uint64_t>(left_attack_[j]));
      if (!best || score.beats(best->score)) {
        const std::size_t i = position_[j];
        best = Candidate{f, midpoint_threshold(data_.value(list[i], f), data_.value(list[i + 1], f)),
                         score};
      }
    }
    return best;
  }

  const LabeledDataset& data_;
  std::vector<double> left_total_;
  std::vector<double> left_attack_;
  std::vector<std::size_t> position_;
  std::vector<double> scores_;
};

ClassCounts count_classes(const LabeledDataset& data, const std::vector<std::uint32_t>& rows) {
  ClassCounts counts{};
  for (const auto r : rows) ++counts[class_index(data.label(r))];
  return counts;
}

class Grower {
 public:
  Grower(const LabeledDataset& data, const TrainConfig& config)
      : data_(data), config_(config), search_(data), goes_left_(data.size(), 0) {}

  std::int32_t build(SortedRows sorted, int depth) {
    const auto counts = count_classes(data_, sorted.front());
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(TreeNode{});
    nodes_[index].counts = counts;

    if (depth >= config_.max_depth) return index;
    const auto split = search_.find(sorted, counts);
    if (!split) return index;

    const std::size_t f = split->feature;
    for (const auto r : sorted.front()) goes_left_[r] = data_.value(r, f) <= split->threshold ? 1 : 0;

    SortedRows left(sorted.size());
    SortedRows right(sorted.size());
    for (std::size_t g = 0; g < sorted.size(); ++g) {
      for (const auto r : sorted[g]) (goes_left_[r] ? left[g] : right[g]).push_back(r);
      sorted[g].clear();
      sorted[g].shrink_to_fit();
    }

    nodes_[index].feature = static_cast<std::int32_t>(f);
    nodes_[index].threshold = split->threshold;
    const auto l = build(std::move(left), depth + 1);
    const auto r = build(std::move(right), depth + 1);
    nodes_[index].left = l;
    nodes_[index].right = r;
    return index;
  }

  std::vector<TreeNode> take_nodes() { return std::move(nodes_); }

 private:
  const LabeledDataset& data_;
  const TrainConfig& config_;
  SplitSearch search_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<TreeNode> nodes_;
};

struct PruneInfo {
  std::vector<std::uint64_t> subtree_errors;
  std::vector<std::size_t> subtree_leaves;
};

PruneInfo prune_info(const std::vector<TreeNode>& nodes) {
  PruneInfo info{std::vector<std::uint64_t>(nodes.size()), std::vector<std::size_t>(nodes.size())};
  // Children follow their parent in pre-order.
  for (std::size_t i = nodes.size(); i-- > 0;) {
    const auto& node = nodes[i];
    if (node.is_leaf()) {
      info.subtree_errors[i] = misclassified(node.counts);
      info.subtree_leaves[i] = 1;
    } else {
      const auto l = static_cast<std::size_t>(node.left);
      const auto r = static_cast<std::size_t>(node.right);
      info.subtree_errors[i] = info.subtree_errors[l] + info.subtree_errors[r];
      info.subtree_leaves[i] = info.subtree_leaves[l] + info.subtree_leaves[r];
    }
  }
  return info;
}

struct WeakestLink {
  std::size_t node = 0;
  double alpha = 0.0;
};

std::optional<WeakestLink> weakest_link(const DecisionTree& tree) {
  const auto& nodes = tree.nodes();
  const auto& root = tree.root().counts;
  const double total = static_cast<double>(root[0] + root[1]);
  if (nodes.size() < 2 || total == 0.0) return std::nullopt;
  const auto info = prune_info(nodes);
  std::optional<WeakestLink> weakest;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    const double gain = static_cast<double>(misclassified(nodes[i].counts) - info.subtree_errors[i]);
    const double alpha = gain / (total * static_cast<double>(info.subtree_leaves[i] - 1));
    if (!weakest || alpha < weakest->alpha) weakest = WeakestLink{i, alpha};
  }
  return weakest;
}

DecisionTree collapse(const DecisionTree& tree, std::size_t index) {
  auto nodes = tree.nodes();
  nodes[index].feature = -1;
  nodes[index].left = -1;
  nodes[index].right = -1;
  return DecisionTree(tree.n_features(), std::move(nodes));
}

[[noreturn]] void format_error(std::size_t line, const std::string& what) {
  throw ModelFormatError("model line " + std::to_string(line) + ": " + what);
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

FlowClass majority_class(const ClassCounts& counts) {
  return counts[1] > counts[0] ? FlowClass::attack : FlowClass::benign;
}

void TrainConfig::validate() const {
  if (max_depth < 1) throw Error("max_depth must be at least 1");
  if (!(ccp_alpha >= 0.0) || !std::isfinite(ccp_alpha)) throw Error("ccp_alpha must be a finite value >= 0");
}

DecisionTree::DecisionTree(std::size_t n_features, std::vector<TreeNode> nodes, std::size_t root)
    : n_features_(n_features) {
  if (n_features_ == 0) throw ModelFormatError("tree needs at least one feature");
  if (root >= nodes.size()) throw ModelFormatError("tree has no root node");

  // Iterative pre-order walk; `origin` maps new slots back to input nodes.
  std::vector<std::uint8_t> visited(nodes.size(), 0);
  std::vector<std::size_t> origin;
  std::vector<std::size_t> depth_of;
  origin.reserve(nodes.size());
  struct Pending {
    std::size_t source;
    std::size_t parent;  // new index, or npos for the root
    bool is_left;
    std::size_t depth;
  };
  constexpr auto npos = std::numeric_limits<std::size_t>::max();
  std::vector<Pending> stack{{root, npos, false, 0}};
  nodes_.reserve(nodes.size());
  while (!stack.empty()) {
    const auto item = stack.back();
    stack.pop_back();
    if (visited[item.source]) throw ModelFormatError("tree node reached twice (shared or cyclic child)");
    visited[item.source] = 1;
    TreeNode node = nodes[item.source];
    const auto self = nodes_.size();
    if (item.parent != npos) {
      (item.is_left ? nodes_[item.parent].left : nodes_[item.parent].right) = static_cast<std::int32_t>(self);
    }
    if (!node.is_leaf()) {
      if (static_cast<std::size_t>(node.feature) >= n_features_) {
        throw ModelFormatError("split feature " + std::to_string(node.feature) + " out of range");
      }
      if (!std::isfinite(node.threshold)) throw ModelFormatError("non-finite split threshold");
      const auto l = node.left;
      const auto r = node.right;
      if (l < 0 || r < 0 || static_cast<std::size_t>(l) >= nodes.size() ||
          static_cast<std::size_t>(r) >= nodes.size()) {
        throw ModelFormatError("internal node with a missing child");
      }
      stack.push_back({static_cast<std::size_t>(r), self, false, item.depth + 1});
      stack.push_back({static_cast<std::size_t>(l), self, true, item.depth + 1});
    } else {
      node.feature = -1;
      node.threshold = 0.0;
    }
    node.left = -1;
    node.right = -1;
    nodes_.push_back(node);
    origin.push_back(item.source);
    depth_of.push_back(item.depth);
  }

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.is_leaf()) {
      const auto& l = nodes_[static_cast<std::size_t>(node.left)].counts;
      const auto& r = nodes_[static_cast<std::size_t>(node.right)].counts;
      node.counts = {l[0] + r[0], l[1] + r[1]};
    }
    node.predicted = majority_class(node.counts);
  }

  stats_.node_count = nodes_.size();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    stats_.depth = std::max(stats_.depth, depth_of[i]);
    if (nodes_[i].is_leaf()) {
      ++stats_.leaf_count;
    } else {
      stats_.features_used.insert(static_cast<std::size_t>(nodes_[i].feature));
    }
  }
}

DecisionTree DecisionTree::leaf(std::size_t n_features, ClassCounts counts) {
  TreeNode node;
  node.counts = counts;
  return DecisionTree(n_features, {node});
}

std::size_t DecisionTree::leaf_index(FlowRecord record) const {
  if (record.size() != n_features_) {
    throw DataError("record has " + std::to_string(record.size()) + " features, tree expects " +
                    std::to_string(n_features_));
  }
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& node = nodes_[i];
    i = static_cast<std::size_t>(record[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                 : node.right);
  }
  return i;
}

FlowClass DecisionTree::predict(FlowRecord record) const { return nodes_[leaf_index(record)].predicted; }

bool operator==(const DecisionTree& a, const DecisionTree& b) {
  if (a.n_features_ != b.n_features_ || a.nodes_.size() != b.nodes_.size()) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.feature != y.feature || x.left != y.left || x.right != y.right) return false;
    if (x.is_leaf() ? x.counts != y.counts : x.threshold != y.threshold) return false;
  }
  return true;
}

TreeStats tree_stats(const DecisionTree& tree) { return tree.stats(); }

double gini(const ClassCounts& counts) {
  const auto total = counts[0] + counts[1];
  if (total == 0) throw DataError("gini of an empty node");
  const double n = static_cast<double>(total);
  const double p0 = static_cast<double>(counts[0]) / n;
  const double p1 = static_cast<double>(counts[1]) / n;
  return 1.0 - (p0 * p0 + p1 * p1);
}

std::optional<Split> best_split(const LabeledDataset& data, std::span<const std::size_t> rows) {
  if (rows.size() > kMaxRows) throw DataError("too many rows for exact split search");
  for (const auto r : rows) {
    if (r >= data.size()) throw DataError("row index out of range");
  }
  const auto sorted = sort_rows(data, rows);
  SplitSearch search(data);
  return search.find(sorted, count_classes(data, sorted.front()));
}

DecisionTree grow(const LabeledDataset& train, const TrainConfig& config) {
  config.validate();
  if (train.size() > kMaxRows) throw DataError("too many rows for exact split search");
  const auto counts = train.class_counts();
  if (counts[0] == 0 || counts[1] == 0) {
    if (!config.allow_single_class) throw DataError("training data contains a single class");
    return DecisionTree::leaf(train.feature_count(), counts);
  }
  std::vector<std::size_t> all(train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Grower grower(train, config);
  grower.build(sort_rows(train, all), 0);
  return DecisionTree(train.feature_count(), grower.take_nodes());
}

DecisionTree fit(const LabeledDataset& train, const TrainConfig& config) {
  return ccp_prune(grow(train, config), config.ccp_alpha);
}

DecisionTree ccp_prune(const DecisionTree& tree, double alpha) {
  DecisionTree current = tree;
  while (true) {
    const auto link = weakest_link(current);
    if (!link || !(link->alpha < alpha)) return current;
    current = collapse(current, link->node);
  }
}

std::vector<double> ccp_path(const DecisionTree& tree) {
  std::vector<double> alphas;
  DecisionTree current = tree;
  while (const auto link = weakest_link(current)) {
    alphas.push_back(link->alpha);
    current = collapse(current, link->node);
  }
  return alphas;
}

std::string serialize_tree(const DecisionTree& tree) {
  std::string out;
  out.reserve(tree.node_count() * 24 + 32);
  out += kMagic;
  out += kVersion;
  out += " n_features=" + std::to_string(tree.n_features()) + "\n";
  for (const auto& node : tree.nodes()) {
    if (node.is_leaf()) {
      out += "L " + std::to_string(node.counts[0]) + " " + std::to_string(node.counts[1]) + "\n";
    } else {
      out += "I " + std::to_string(node.feature) + " " + format_double(node.threshold) + "\n";
    }
  }
  return out;
}

DecisionTree parse_tree(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw ModelFormatError("model file is empty");

  const auto header = tokens(lines.front());
  if (header.empty() || header[0].substr(0, kMagic.size()) != kMagic) {
    throw ModelFormatError("not an edgetree model (bad header)");
  }
  if (header[0].substr(kMagic.size()) != kVersion) {
    throw ModelFormatError("unsupported model version '" + std::string(header[0]) + "'");
  }
  constexpr std::string_view key = "n_features=";
  std::size_t n_features = 0;
  if (header.size() != 2 || header[1].substr(0, key.size()) != key ||
      !parse_int(header[1].substr(key.size()), n_features) || n_features == 0) {
    format_error(1, "header must be 'edgetree-v1 n_features=<n>'");
  }

  std::vector<TreeNode> nodes;
  std::vector<std::size_t> open;  // internal nodes still missing a child
  bool complete = false;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (complete) format_error(ln + 1, "content after the tree is complete");
    const auto tok = tokens(lines[ln]);
    TreeNode node;
    if (tok.size() == 3 && tok[0] == "I") {
      std::int32_t feature = 0;
      const auto thr = parse_double(tok[2]);
      if (!parse_int(tok[1], feature) || feature < 0) format_error(ln + 1, "bad feature index");
      if (!thr || !std::isfinite(*thr)) format_error(ln + 1, "bad threshold");
      node.feature = feature;
      node.threshold = *thr;
    } else if (tok.size() == 3 && tok[0] == "L") {
      if (!parse_int(tok[1], node.counts[0]) || !parse_int(tok[2], node.counts[1])) {
        format_error(ln + 1, "bad leaf counts");
      }
    } else {
      format_error(ln + 1, "expected 'I <feature> <threshold>' or 'L <count0> <count1>'");
    }
    const auto self = static_cast<std::int32_t>(nodes.size());
    if (!open.empty()) {
      auto& parent = nodes[open.back()];
      if (parent.left < 0) {
        parent.left = self;
      } else {
        parent.right = self;
        open.pop_back();
      }
    }
    if (!node.is_leaf()) open.push_back(nodes.size());
    nodes.push_back(node);
    complete = open.empty();
  }
  if (!complete) throw ModelFormatError("model file is truncated");
  return DecisionTree(n_features, std::move(nodes));
}

void save_tree(const DecisionTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write model '" + path.string() + "'");
  out << serialize_tree(tree);
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

DecisionTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open model '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_tree(buffer.str());
}

}  // namespace edgetree
