#pragma once

// Independent tree walkers used as oracles for predict() and codegen.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "edgetree/cart.hpp"
#include "edgetree/numfmt.hpp"

namespace edgetree::testing {

// Recursive walk over the raw node table; majority recomputed from counts.
inline int walk_predict(const DecisionTree& tree, FlowRecord x, std::size_t i = 0) {
  const auto& n = tree.nodes()[i];
  if (n.feature < 0) return n.counts[1] > n.counts[0] ? 1 : 0;
  const double v = x[static_cast<std::size_t>(n.feature)];
  return walk_predict(tree, x, static_cast<std::size_t>(v <= n.threshold ? n.left : n.right));
}

// Tree reconstructed from emitted nested-if C text.
struct ParsedNode {
  bool leaf = true;
  int klass = 0;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::unique_ptr<ParsedNode> left;
  std::unique_ptr<ParsedNode> right;
};

// Micro-parser for the emitter's nested-if grammar:
//   stmt := "return" INT ";" | "if (" IDENT "<=" NUMBER ") {" stmt "} else {" stmt "}"
class NestedIfParser {
 public:
  NestedIfParser(std::string_view text, const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) index_[names[i]] = i;
    const auto body = text.find("int predict(void)");
    if (body == std::string_view::npos) throw std::runtime_error("no predict function");
    const auto open = text.find('{', body);
    std::size_t start = open + 1;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      const auto line = trim(text.substr(start, end - start));
      if (!line.empty()) lines_.push_back(line);
      start = end + 1;
    }
  }

  std::unique_ptr<ParsedNode> parse() {
    auto root = stmt();
    if (pos_ >= lines_.size() || lines_[pos_] != "}") throw std::runtime_error("missing closing brace");
    return root;
  }

 private:
  std::unique_ptr<ParsedNode> stmt() {
    if (pos_ >= lines_.size()) throw std::runtime_error("unexpected end");
    const auto line = lines_[pos_++];
    auto node = std::make_unique<ParsedNode>();
    if (line.rfind("return ", 0) == 0) {
      node->klass = line.substr(7) == "1;" ? 1 : 0;
      if (line.substr(7) != "1;" && line.substr(7) != "0;") throw std::runtime_error("bad return");
      return node;
    }
    if (line.rfind("if (", 0) != 0 || line.substr(line.size() - 3) != ") {") {
      throw std::runtime_error("bad line: " + std::string(line));
    }
    const auto cond = line.substr(4, line.size() - 7);
    const auto le = cond.find(" <= ");
    const auto name = std::string(cond.substr(0, le));
    const auto value = parse_double(cond.substr(le + 4));
    if (!value || !index_.count(name)) throw std::runtime_error("bad condition: " + std::string(cond));
    node->leaf = false;
    node->feature = index_.at(name);
    node->threshold = *value;
    node->left = stmt();
    if (pos_ >= lines_.size() || lines_[pos_++] != "} else {") throw std::runtime_error("missing else");
    node->right = stmt();
    if (pos_ >= lines_.size() || lines_[pos_++] != "}") throw std::runtime_error("missing if close");
    return node;
  }

  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
  std::map<std::string, std::size_t> index_;
};

inline bool same_shape(const ParsedNode& parsed, const DecisionTree& tree, std::size_t i = 0) {
  const auto& n = tree.node(i);
  if (parsed.leaf != n.is_leaf()) return false;
  if (parsed.leaf) return parsed.klass == static_cast<int>(class_index(n.predicted));
  return parsed.feature == static_cast<std::size_t>(n.feature) && parsed.threshold == n.threshold &&
         same_shape(*parsed.left, tree, static_cast<std::size_t>(n.left)) &&
         same_shape(*parsed.right, tree, static_cast<std::size_t>(n.right));
}

}  // namespace edgetree::testing
