#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mshift {

using VertexId = std::size_t;

// Rooted, leafless, locally finite directed tree with lazily enumerated BFS levels.
// Ids are dense in BFS order and the children of a vertex are consecutive.
class RootedTree {
 public:
  enum class Kind { Tnk, Explicit, Nary, Custom };
  using ChildCount = std::function<std::size_t(VertexId)>;

  static RootedTree tnk(int n0, int k0) {
    if (n0 < 1) throw std::invalid_argument("tnk: n0 must be positive");
    if (k0 < 0) throw std::invalid_argument("tnk: k0 must be nonnegative");
    RootedTree t(Kind::Tnk);
    t.n0_ = n0;
    t.k0_ = k0;
    const auto hub = static_cast<VertexId>(k0);
    const auto n = static_cast<std::size_t>(n0);
    t.count_ = [hub, n](VertexId v) -> std::size_t { return v == hub ? n : 1; };
    if (n0 >= 2) t.certified_ = k0 + 1;
    else t.certified_ = 0;
    return t;
  }

  // full n-ary tree; branching never stops, so no branching index is certified for n >= 2
  static RootedTree nary(int n) {
    if (n < 1) throw std::invalid_argument("nary: n must be positive");
    RootedTree t(Kind::Nary);
    t.n0_ = n;
    const auto m = static_cast<std::size_t>(n);
    t.count_ = [m](VertexId) { return m; };
    if (n == 1) t.certified_ = 0;
    return t;
  }

  // children map over a finite prefix; every vertex outside the map continues as a unary chain.
  // Ids must already follow BFS order (checked).
  static RootedTree explicit_prefix(const std::map<VertexId, std::vector<VertexId>>& children) {
    RootedTree t(Kind::Explicit);
    std::map<VertexId, std::size_t> counts;
    VertexId next = 1;
    std::vector<VertexId> queue{0};
    std::vector<int> qdepth{0};
    std::size_t head = 0, pending = children.size();
    int maxdepth_branch = -1;
    // simulate BFS; vertices outside the map get one implicit child while map entries remain
    while (head < queue.size() && pending > 0) {
      VertexId v = queue[head];
      int dv = qdepth[head++];
      auto it = children.find(v);
      if (it == children.end()) {
        queue.push_back(next++);
        qdepth.push_back(dv + 1);
        continue;
      }
      --pending;
      if (it->second.empty()) throw std::invalid_argument("explicit tree: vertex " + std::to_string(v) + " has no children (tree must be leafless)");
      for (VertexId c : it->second) {
        if (c != next) throw std::invalid_argument("explicit tree: ids must follow BFS order (expected " + std::to_string(next) + ", got " + std::to_string(c) + ")");
        ++next;
        queue.push_back(c);
        qdepth.push_back(dv + 1);
      }
      counts[v] = it->second.size();
      if (it->second.size() >= 2) maxdepth_branch = std::max(maxdepth_branch, dv);
    }
    if (pending > 0) throw std::invalid_argument("explicit tree: some listed vertices are not reachable from the root");
    // everything outside the map is a unary chain
    t.count_ = [counts](VertexId v) -> std::size_t {
      auto it = counts.find(v);
      return it == counts.end() ? 1 : it->second;
    };
    t.certified_ = maxdepth_branch + 1;
    t.explicit_ = children;
    return t;
  }

  // children counts supplied by a callback invoked once per vertex, in increasing id order
  static RootedTree custom(ChildCount count, std::optional<int> certified_branching_index) {
    RootedTree t(Kind::Custom);
    t.count_ = std::move(count);
    t.certified_ = certified_branching_index;
    return t;
  }

  Kind kind() const { return kind_; }
  int n0() const { return n0_; }
  int k0() const { return k0_; }
  const std::map<VertexId, std::vector<VertexId>>& explicit_children() const { return explicit_; }

  VertexId root() const { return 0; }

  void materialize(int depth) const {
    while (static_cast<int>(level_start_.size()) - 2 < depth) grow();
  }
  // grow levels until id v exists
  void enumerate_through(VertexId v) const {
    while (v >= parent_.size()) grow();
  }
  int materialized_depth() const { return static_cast<int>(level_start_.size()) - 2; }
  std::size_t enumerated() const { return parent_.size(); }

  std::vector<VertexId> children(VertexId v) const {
    check(v);
    ensure_children(v);
    std::vector<VertexId> out(nchild_[v]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = first_child_[v] + i;
    return out;
  }
  std::size_t num_children(VertexId v) const {
    check(v);
    ensure_children(v);
    return nchild_[v];
  }
  VertexId first_child(VertexId v) const {
    check(v);
    ensure_children(v);
    return first_child_[v];
  }

  std::optional<VertexId> parent(VertexId v) const {
    check(v);
    if (v == 0) return std::nullopt;
    return parent_[v];
  }

  int depth(VertexId v) const {
    check(v);
    return depth_[v];
  }

  std::vector<VertexId> sib(VertexId v) const {
    check(v);
    if (v == 0) throw std::invalid_argument("root has no siblings");
    return children(parent_[v]);
  }
  std::size_t num_siblings(VertexId v) const {
    check(v);
    if (v == 0) return 0;
    return nchild_[parent_[v]];
  }
  // smallest id in the sibling class
  VertexId sib_min(VertexId v) const {
    check(v);
    if (v == 0) return 0;
    return first_child_[parent_[v]];
  }

  std::vector<VertexId> generation(int n) const {
    if (n < 0) return {};
    materialize(n);
    std::vector<VertexId> out;
    for (VertexId v = level_start_[n]; v < level_start_[n + 1]; ++v) out.push_back(v);
    return out;
  }
  std::size_t generation_size(int n) const {
    materialize(n);
    return level_start_[n + 1] - level_start_[n];
  }
  VertexId generation_first(int n) const {
    materialize(n);
    return level_start_[n];
  }

  // descendants of v at relative depth k
  std::vector<VertexId> descendants(VertexId v, int k) const {
    std::vector<VertexId> cur{v};
    for (int i = 0; i < k; ++i) {
      std::vector<VertexId> nxt;
      for (VertexId u : cur)
        for (VertexId c : children(u)) nxt.push_back(c);
      cur.swap(nxt);
    }
    return cur;
  }

  VertexId ancestor(VertexId v, int k) const {
    for (int i = 0; i < k; ++i) {
      auto p = parent(v);
      if (!p) throw std::invalid_argument("ancestor: walked past the root");
      v = *p;
    }
    return v;
  }

  bool certified() const { return certified_.has_value(); }

  // k_T = 1 + sup depth of branching vertices (0 if none); nullopt means "exceeds budget"
  std::optional<int> branching_index(int depth_budget) const {
    if (!certified_) return std::nullopt;
    if (*certified_ - 1 > depth_budget) return std::nullopt;
    return *certified_;
  }

  // V_prec: vertices with at least two children (needs a certified branching index)
  std::vector<VertexId> branching_vertices() const {
    if (!certified_) throw std::logic_error("branching vertices: branching index not certified");
    std::vector<VertexId> out;
    for (int t = 0; t < *certified_; ++t)
      for (VertexId v : generation(t))
        if (num_children(v) >= 2) out.push_back(v);
    return out;
  }

  // Chi(V_prec)
  std::vector<VertexId> branching_children() const {
    std::vector<VertexId> out;
    for (VertexId v : branching_vertices())
      for (VertexId c : children(v)) out.push_back(c);
    return out;
  }

 private:
  explicit RootedTree(Kind k) : kind_(k) {
    parent_.push_back(0);
    depth_.push_back(0);
    first_child_.push_back(0);
    nchild_.push_back(0);
    has_children_.push_back(false);
    level_start_ = {0, 1};
  }

  void check(VertexId v) const {
    if (v >= parent_.size()) throw std::out_of_range("unenumerated vertex " + std::to_string(v));
  }

  void ensure_children(VertexId v) const {
    if (!has_children_[v]) materialize(depth_[v] + 1);
  }

  // appends one level
  void grow() const {
    const std::size_t lo = level_start_[level_start_.size() - 2];
    const std::size_t hi = level_start_.back();
    const int d = depth_[lo] + 1;
    for (VertexId v = lo; v < hi; ++v) {
      std::size_t c = count_(v);
      if (c == 0) throw std::logic_error("tree generator produced a leaf at vertex " + std::to_string(v));
      first_child_[v] = parent_.size();
      nchild_[v] = c;
      has_children_[v] = true;
      for (std::size_t i = 0; i < c; ++i) {
        parent_.push_back(v);
        depth_.push_back(d);
        first_child_.push_back(0);
        nchild_.push_back(0);
        has_children_.push_back(false);
      }
    }
    level_start_.push_back(parent_.size());
  }

  Kind kind_;
  int n0_ = 0, k0_ = 0;
  ChildCount count_;
  std::optional<int> certified_;
  std::map<VertexId, std::vector<VertexId>> explicit_;

  // lazily grown caches; call materialize() up front before sharing across threads
  mutable std::vector<VertexId> parent_;
  mutable std::vector<int> depth_;
  mutable std::vector<VertexId> first_child_;
  mutable std::vector<std::size_t> nchild_;
  mutable std::vector<bool> has_children_;
  mutable std::vector<std::size_t> level_start_;
};

}  // namespace mshift
