#include <gtest/gtest.h>

#include <queue>
#include <set>

#include "mshift/tree.hpp"

using namespace mshift;

namespace {

// independent BFS over the T_{n0,k0} edge rule: the only branching vertex is the depth-k0 vertex of the trunk
struct TnkOracle {
  std::vector<int> depth;
  std::vector<VertexId> parent;
  std::vector<std::vector<VertexId>> kids;
  TnkOracle(int n0, int k0, int maxdepth) {
    depth = {0};
    parent = {0};
    kids = {{}};
    std::queue<VertexId> q;
    q.push(0);
    while (!q.empty()) {
      VertexId v = q.front();
      q.pop();
      if (depth[v] >= maxdepth) continue;
      int nk = (depth[v] == k0 && v == static_cast<VertexId>(k0)) ? n0 : 1;
      for (int i = 0; i < nk; ++i) {
        VertexId w = depth.size();
        depth.push_back(depth[v] + 1);
        parent.push_back(v);
        kids.push_back({});
        kids[v].push_back(w);
        q.push(w);
      }
    }
  }
};

}  // namespace

TEST(Tree, ChildrenOfBinaryHub) {
  auto t = RootedTree::tnk(2, 0);
  EXPECT_EQ(t.children(0), (std::vector<VertexId>{1, 2}));
  EXPECT_EQ(t.children(1), (std::vector<VertexId>{3}));
  EXPECT_EQ(t.children(2), (std::vector<VertexId>{4}));
}

TEST(Tree, UnaryChainChildren) {
  auto t = RootedTree::tnk(1, 0);
  for (VertexId n = 0; n < 20; ++n) EXPECT_EQ(t.children(n), (std::vector<VertexId>{n + 1}));
}

TEST(Tree, DepthMatchesBfsOracle) {
  for (auto [n0, k0] : std::vector<std::pair<int, int>>{{2, 0}, {1, 0}, {3, 2}, {2, 3}}) {
    TnkOracle o(n0, k0, 9);
    auto t = RootedTree::tnk(n0, k0);
    t.materialize(9);
    ASSERT_GE(t.enumerated(), o.depth.size());
    for (VertexId v = 0; v < o.depth.size(); ++v) {
      EXPECT_EQ(t.depth(v), o.depth[v]) << n0 << "," << k0 << " v=" << v;
      if (v) {
        EXPECT_EQ(*t.parent(v), o.parent[v]);
      }
      if (o.depth[v] < 9) {
        EXPECT_EQ(t.children(v), o.kids[v]);
      }
    }
  }
  auto hub = RootedTree::tnk(2, 0);
  hub.materialize(2);
  EXPECT_EQ(hub.depth(3), 2);
  EXPECT_EQ(RootedTree::tnk(1, 0).depth(0), 0);
  auto chain = RootedTree::tnk(1, 0);
  chain.materialize(7);
  EXPECT_EQ(chain.depth(7), 7);
}

TEST(Tree, UnenumeratedVertexIsAnError) {
  auto t = RootedTree::tnk(2, 0);
  EXPECT_THROW(t.depth(1000), std::out_of_range);
  EXPECT_THROW(t.children(1000), std::out_of_range);
}

TEST(Tree, Siblings) {
  auto t = RootedTree::tnk(2, 0);
  t.materialize(3);
  EXPECT_EQ(t.sib(1), (std::vector<VertexId>{1, 2}));
  // 3 and 4 hang off different trunk vertices (1 -> 3, 2 -> 4), so 4 is alone in its class
  EXPECT_EQ(t.sib(4), (std::vector<VertexId>{4}));
  EXPECT_EQ(t.sib(3), (std::vector<VertexId>{3}));
  auto chain = RootedTree::tnk(1, 0);
  chain.materialize(6);
  EXPECT_EQ(chain.sib(5), (std::vector<VertexId>{5}));
  EXPECT_THROW(t.sib(0), std::invalid_argument);
}

TEST(Tree, SiblingsAreChildrenOfParent) {
  for (auto t : {RootedTree::tnk(2, 0), RootedTree::tnk(3, 1), RootedTree::nary(2)}) {
    t.materialize(5);
    for (VertexId v = 1; v < t.enumerated(); ++v) {
      auto s = t.sib(v);
      EXPECT_EQ(s, t.children(*t.parent(v)));
      EXPECT_NE(std::find(s.begin(), s.end(), v), s.end());
      EXPECT_EQ(t.num_siblings(v), s.size());
    }
  }
}

TEST(Tree, BranchingIndex) {
  EXPECT_EQ(RootedTree::tnk(2, 0).branching_index(10), 1);
  EXPECT_EQ(RootedTree::tnk(1, 0).branching_index(10), 0);
  EXPECT_EQ(RootedTree::tnk(2, 3).branching_index(10), 4);
  EXPECT_FALSE(RootedTree::tnk(2, 3).branching_index(2).has_value());
  EXPECT_FALSE(RootedTree::nary(2).branching_index(100).has_value());
}

TEST(Tree, GenerationsPartitionAndSizes) {
  for (auto [n0, k0] : std::vector<std::pair<int, int>>{{2, 0}, {3, 2}, {1, 0}, {4, 1}}) {
    auto t = RootedTree::tnk(n0, k0);
    std::set<VertexId> seen;
    for (int g = 0; g <= 8; ++g) {
      auto G = t.generation(g);
      EXPECT_EQ(G.size(), g <= k0 ? 1u : static_cast<std::size_t>(n0));
      for (VertexId v : G) {
        EXPECT_TRUE(seen.insert(v).second);
        EXPECT_EQ(t.depth(v), g);
      }
    }
    // everything of depth <= 8 was listed
    for (VertexId v = 0; v < t.enumerated(); ++v)
      if (t.depth(v) <= 8) {
        EXPECT_TRUE(seen.count(v));
      }
  }
}

TEST(Tree, ExplicitPrefixWithUnaryTail) {
  auto t = RootedTree::explicit_prefix({{0, {1, 2}}, {1, {3}}, {2, {4}}});
  EXPECT_EQ(t.children(0), (std::vector<VertexId>{1, 2}));
  t.materialize(3);
  EXPECT_EQ(t.children(3).size(), 1u);
  EXPECT_EQ(t.branching_index(5), 1);
  // same generations as T_{2,0}
  auto ref = RootedTree::tnk(2, 0);
  for (int g = 0; g < 7; ++g) EXPECT_EQ(t.generation(g), ref.generation(g));

  auto deep = RootedTree::explicit_prefix({{0, {1}}, {1, {2, 3, 4}}});
  EXPECT_EQ(deep.branching_index(10), 2);
  EXPECT_EQ(deep.generation_size(5), 3u);
}

TEST(Tree, ExplicitPrefixRejectsBadInput) {
  EXPECT_THROW(RootedTree::explicit_prefix({{0, {2, 1}}}), std::invalid_argument);
  EXPECT_THROW(RootedTree::explicit_prefix({{0, {}}}), std::invalid_argument);
  EXPECT_THROW(RootedTree::explicit_prefix({{0, {1, 2}}, {2, {3}}, {1, {4}}}), std::invalid_argument);
  // unlisted vertices continue as chains, so 7 is reached at depth 7
  auto ok = RootedTree::explicit_prefix({{0, {1}}, {7, {8, 9}}});
  EXPECT_EQ(ok.branching_index(10), 8);
}

TEST(Tree, NaryGrowth) {
  auto t = RootedTree::nary(3);
  for (int g = 0; g < 6; ++g) {
    std::size_t expect = 1;
    for (int i = 0; i < g; ++i) expect *= 3;
    EXPECT_EQ(t.generation_size(g), expect);
  }
  EXPECT_FALSE(t.certified());
}
