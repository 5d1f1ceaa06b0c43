#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "edgetree/cart.hpp"
#include "edgetree/error.hpp"
#include "edgetree/metrics.hpp"
#include "edgetree/process.hpp"
#include "edgetree/split_kernels.hpp"
#include "oracles/brute_cart.hpp"
#include "oracles/generators.hpp"
#include "oracles/path_walk.hpp"

using namespace edgetree;
using namespace edgetree::testing;

namespace {

TrainConfig config(int depth, double alpha = 0.0) {
  TrainConfig c;
  c.max_depth = depth;
  c.ccp_alpha = alpha;
  return c;
}

DecisionTree stump(double threshold = 2.5) {
  std::vector<TreeNode> nodes(3);
  nodes[0].feature = 0;
  nodes[0].threshold = threshold;
  nodes[0].left = 1;
  nodes[0].right = 2;
  nodes[1].counts = {4, 0};
  nodes[2].counts = {0, 4};
  return DecisionTree(2, nodes);
}

double training_accuracy(const DecisionTree& tree, const LabeledDataset& data) {
  return accuracy(score(tree, data));
}

}  // namespace

TEST_CASE("gini values") {
  CHECK(gini({5, 5}) == 0.5);
  CHECK(gini({10, 0}) == 0.0);
  CHECK(std::abs(gini({3, 1}) - 0.375) <= 1e-12);
  CHECK_THROWS_AS(gini({0, 0}), DataError);
}

TEST_CASE("best_split") {
  SUBCASE("[1,2,3,4] / [0,0,1,1]") {
    const LabeledDataset ds(FlowSchema::generic(1), {1, 2, 3, 4},
                            {FlowClass::benign, FlowClass::benign, FlowClass::attack, FlowClass::attack});
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const auto s = best_split(ds, rows);
    REQUIRE(s);
    CHECK(s->feature == 0);
    CHECK(s->threshold == 2.5);
    CHECK(std::abs(s->impurity_decrease - 0.5) <= 1e-12);
  }
  SUBCASE("constant feature") {
    const LabeledDataset ds(FlowSchema::generic(1), {3, 3, 3},
                            {FlowClass::benign, FlowClass::attack, FlowClass::attack});
    const std::vector<std::size_t> rows{0, 1, 2};
    CHECK_FALSE(best_split(ds, rows));
  }
  SUBCASE("feature 1 separates") {
    const LabeledDataset ds(FlowSchema::generic(2), {1, 10, 2, 11, 1, 20, 2, 21},
                            {FlowClass::benign, FlowClass::benign, FlowClass::attack, FlowClass::attack});
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    const auto s = best_split(ds, rows);
    REQUIRE(s);
    CHECK(s->feature == 1);
    CHECK(s->threshold == 15.5);
  }
  SUBCASE("ties go to the lowest feature, then the lowest threshold") {
    // Both features separate identically; f0 must win.
    const LabeledDataset ds(FlowSchema::generic(2), {0, 0, 1, 1},
                            {FlowClass::benign, FlowClass::attack});
    const std::vector<std::size_t> rows{0, 1};
    CHECK(best_split(ds, rows)->feature == 0);
    // Symmetric labels [0,1,1,0]: thresholds 1.5 and 3.5 tie.
    const LabeledDataset sym(FlowSchema::generic(1), {1, 2, 3, 4},
                             {FlowClass::benign, FlowClass::attack, FlowClass::attack, FlowClass::benign});
    const std::vector<std::size_t> r4{0, 1, 2, 3};
    CHECK(best_split(sym, r4)->threshold == 1.5);
  }
  SUBCASE("midpoint that rounds up falls back to the lower value") {
    const double lo = 1.0;
    const double hi = std::nextafter(1.0, 2.0);
    const LabeledDataset ds(FlowSchema::generic(1), {lo, hi}, {FlowClass::benign, FlowClass::attack});
    const std::vector<std::size_t> rows{0, 1};
    const auto s = best_split(ds, rows);
    REQUIRE(s);
    CHECK(s->threshold == lo);
    CHECK(fit(ds, config(3)).predict(ds.record(1)) == FlowClass::attack);
  }
}

TEST_CASE("fit examples") {
  SUBCASE("separable one-feature data gives a stump") {
    const LabeledDataset ds(FlowSchema::generic(1), {1, 2, 3, 10, 11, 12},
                            {FlowClass::benign, FlowClass::benign, FlowClass::benign, FlowClass::attack,
                             FlowClass::attack, FlowClass::attack});
    const auto tree = fit(ds, config(12));
    CHECK(tree.depth() == 1);
    CHECK(tree.node_count() == 3);
    CHECK(tree.node(1).counts == ClassCounts{3, 0});
    CHECK(tree.node(2).counts == ClassCounts{0, 3});
  }
  SUBCASE("XOR with max_depth 1") {
    std::vector<double> v;
    std::vector<FlowClass> y;
    for (int rep = 0; rep < 5; ++rep) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          v.push_back(a + 0.01 * rep);
          v.push_back(b + 0.01 * rep);
          y.push_back(a != b ? FlowClass::attack : FlowClass::benign);
        }
      }
    }
    const LabeledDataset ds(FlowSchema::generic(2), v, y);
    const auto tree = fit(ds, config(1));
    CHECK(tree.depth() <= 1);
    CHECK(training_accuracy(tree, ds) <= 0.75);
  }
  SUBCASE("deterministic") {
    const auto ds = synthetic_flows(4, 500, 0.1);
    CHECK(fit(ds, config(8, 1e-4)) == fit(ds, config(8, 1e-4)));
  }
  SUBCASE("single class") {
    const LabeledDataset ds(FlowSchema::generic(1), {1, 2}, {FlowClass::attack, FlowClass::attack});
    CHECK_THROWS_AS(fit(ds, config(3)), DataError);
    auto c = config(3);
    c.allow_single_class = true;
    const auto tree = fit(ds, c);
    CHECK(tree.node_count() == 1);
    CHECK(tree.root().predicted == FlowClass::attack);
  }
  SUBCASE("invalid config") {
    const auto ds = separable_dataset(1, 30);
    CHECK_THROWS(fit(ds, config(0)));
    CHECK_THROWS(fit(ds, config(3, -1.0)));
  }
}

TEST_CASE("fit matches the exhaustive oracle on small random data") {
  std::mt19937_64 rng(1234);
  for (int t = 0; t < 300; ++t) {
    const auto rows = 2 + rng() % 29;
    const auto features = 1 + rng() % 3;
    const int depth = 1 + int(rng() % 3);
    const auto ds = random_small_dataset(rng, rows, features, t % 2 ? 3 : 9);
    const auto oracle = brute_cart(ds, depth);
    const auto tree = fit(ds, config(depth));
    REQUIRE(same_tree(*oracle, tree));
  }
}

TEST_CASE("trained-tree invariants") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 40; ++t) {
    const int depth = 1 + int(rng() % 10);
    const auto ds = synthetic_flows(rng(), 300, 0.05);
    const auto tree = fit(ds, config(depth, 0.0));
    REQUIRE(tree.depth() <= std::size_t(depth));
    // Each internal node's children are strictly purer in the weighted sense.
    for (const auto& n : tree.nodes()) {
      if (n.is_leaf()) continue;
      const auto& l = tree.node(std::size_t(n.left)).counts;
      const auto& r = tree.node(std::size_t(n.right)).counts;
      const double nl = double(l[0] + l[1]), nr = double(r[0] + r[1]), all = nl + nr;
      REQUIRE(gini(n.counts) - nl / all * gini(l) - nr / all * gini(r) > 0.0);
    }
  }
  // Separable data reaches 100% training accuracy.
  for (int t = 0; t < 10; ++t) {
    const auto ds = separable_dataset(t, 100 + 10 * t, 4);
    REQUIRE(training_accuracy(fit(ds, config(12, 0.0)), ds) == 1.0);
  }
}

TEST_CASE("ccp_prune") {
  std::mt19937_64 rng(55);
  SUBCASE("alpha 0 is identity, alpha 1 collapses, node count monotone") {
    for (int t = 0; t < 100; ++t) {
      const auto ds = synthetic_flows(rng(), 400, 0.1);
      const auto grown = grow(ds, config(1 + int(rng() % 12)));
      REQUIRE(ccp_prune(grown, 0.0) == grown);
      REQUIRE(ccp_prune(grown, 1.0).node_count() == 1);
      std::size_t prev = grown.node_count();
      for (double a : {1e-5, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.5}) {
        const auto pruned = ccp_prune(grown, a);
        REQUIRE(pruned.node_count() <= prev);
        prev = pruned.node_count();
      }
    }
  }
  SUBCASE("zero-improvement split is pruned for any alpha > 0") {
    std::vector<TreeNode> nodes(3);
    nodes[0].feature = 0;
    nodes[0].left = 1;
    nodes[0].right = 2;
    nodes[1].counts = {5, 1};
    nodes[2].counts = {3, 2};
    const DecisionTree tree(1, nodes);
    CHECK(ccp_prune(tree, 0.0).node_count() == 3);
    const auto pruned = ccp_prune(tree, 1e-12);
    CHECK(pruned.node_count() == 1);
    CHECK(pruned.root().counts == ClassCounts{8, 3});
  }
  SUBCASE("pruned stats are componentwise not larger") {
    for (int t = 0; t < 30; ++t) {
      const auto ds = synthetic_flows(rng(), 300, 0.1);
      const auto grown = grow(ds, config(12));
      const auto pruned = ccp_prune(grown, 0.002);
      REQUIRE(pruned.depth() <= grown.depth());
      REQUIRE(pruned.node_count() <= grown.node_count());
      REQUIRE(pruned.leaf_count() <= grown.leaf_count());
      REQUIRE(pruned.root().counts == grown.root().counts);
    }
  }
  SUBCASE("path alphas are nondecreasing and the last one collapses the root") {
    const auto grown = grow(synthetic_flows(9, 400, 0.1), config(8));
    const auto path = ccp_path(grown);
    REQUIRE_FALSE(path.empty());
    for (std::size_t i = 1; i < path.size(); ++i) CHECK(path[i] >= path[i - 1]);
    CHECK(ccp_prune(grown, std::nextafter(path.back(), 1.0)).node_count() == 1);
    CHECK(ccp_prune(grown, path.back()).node_count() > 1);
  }
}

TEST_CASE("predict") {
  const auto s = stump();
  const std::vector<double> at{2.5, 0.0};
  const std::vector<double> above{std::nextafter(2.5, 3.0), 0.0};
  CHECK(s.predict(at) == FlowClass::benign);
  CHECK(s.predict(above) == FlowClass::attack);
  const std::vector<double> short_record{1.0};
  CHECK_THROWS_AS(s.predict(short_record), DataError);

  const auto leaf = DecisionTree::leaf(3, {1, 2});
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x{double(rng() % 100), -1.0, 1e9};
    CHECK(leaf.predict(x) == FlowClass::attack);
  }

  const auto tree = random_tree(rng, {12, 6, 0.7, false});
  CHECK(tree.depth() == 12);
  const auto probes = probe_inputs(rng, tree, 1000);
  for (std::size_t r = 0; r < probes.size(); ++r) {
    REQUIRE(int(class_index(tree.predict(probes.record(r)))) == walk_predict(tree, probes.record(r)));
  }
}

TEST_CASE("tree_stats") {
  const auto leaf = DecisionTree::leaf(2, {3, 1});
  CHECK(tree_stats(leaf) == TreeStats{0, 1, 1, {}});
  CHECK(tree_stats(stump()) == TreeStats{1, 3, 2, {0}});
  std::mt19937_64 rng(4);
  const auto tree = random_tree(rng, {7, 5, 0.5, true});
  const auto stats = tree_stats(tree);
  std::size_t leaves = 0;
  for (const auto& n : tree.nodes()) leaves += n.is_leaf();
  CHECK(stats.leaf_count == leaves);
  CHECK(stats.node_count == 2 * leaves - 1);
  CHECK(stats.depth == 7);
}

TEST_CASE("DecisionTree validates and canonicalizes") {
  std::vector<TreeNode> nodes(3);
  nodes[2].feature = 0;
  nodes[2].threshold = 1.0;
  nodes[2].left = 0;
  nodes[2].right = 1;
  nodes[0].counts = {1, 0};
  nodes[1].counts = {0, 1};
  const DecisionTree tree(1, nodes, 2);
  CHECK(tree.root().feature == 0);
  CHECK(tree.root().counts == ClassCounts{1, 1});
  CHECK(tree.node(1).counts == ClassCounts{1, 0});

  auto cyclic = nodes;
  cyclic[2].left = 2;
  CHECK_THROWS_AS(DecisionTree(1, cyclic, 2), ModelFormatError);
  auto shared = nodes;
  shared[2].right = 0;
  CHECK_THROWS_AS(DecisionTree(1, shared, 2), ModelFormatError);
  CHECK_THROWS_AS(DecisionTree(0, nodes, 2), ModelFormatError);
}

TEST_CASE("tree file round-trip") {
  TempDir dir;
  SUBCASE("stump") {
    save_tree(stump(), dir.path() / "s.tree");
    CHECK(load_tree(dir.path() / "s.tree") == stump());
  }
  SUBCASE("random depth-12 trees") {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 50; ++t) {
      const auto tree = random_tree(rng, {12, 8, 0.6, t % 2 == 0});
      REQUIRE(parse_tree(serialize_tree(tree)) == tree);
    }
  }
  SUBCASE("truncated file") {
    std::mt19937_64 rng(1);
    const auto text = serialize_tree(random_tree(rng, {5, 3, 0.6, false}));
    const auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
    std::ofstream(dir.path() / "t.tree") << cut;
    CHECK_THROWS_AS(load_tree(dir.path() / "t.tree"), ModelFormatError);
  }
  SUBCASE("version and garbage") {
    CHECK_THROWS_AS(parse_tree("edgetree-v9 n_features=1\nL 1 0\n"), ModelFormatError);
    CHECK_THROWS_AS(parse_tree("edgetree-v1 n_features=1\nL 1 0\nL 0 1\n"), ModelFormatError);
    CHECK_THROWS_AS(parse_tree("edgetree-v1 n_features=1\nI 3 0.5\nL 1 0\nL 0 1\n"), ModelFormatError);
    CHECK_THROWS_AS(parse_tree(""), ModelFormatError);
    CHECK_THROWS_AS(load_tree(dir.path() / "missing.tree"), ModelFormatError);
  }
}

TEST_CASE("fit is identical under every split kernel") {
  const auto saved = kernels::active_isa();
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto ds = synthetic_flows(rng(), 500 + rng() % 1500, 0.05);
    kernels::set_active_isa(kernels::Isa::scalar);
    const auto scalar = fit(ds, config(12, 1e-4));
    for (auto isa : {kernels::Isa::avx2}) {
      if (!kernels::isa_supported(isa)) continue;
      kernels::set_active_isa(isa);
      REQUIRE(fit(ds, config(12, 1e-4)) == scalar);
    }
  }
  kernels::set_active_isa(saved);
}
