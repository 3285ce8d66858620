#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mshift/tree.hpp"

namespace mshift {

using Coords = std::vector<VertexId>;
using MultiIndex = std::vector<int>;
using PVertex = std::size_t;
using Subset = std::uint32_t;  // bitmask over axes 0..d-1

inline bool has_axis(Subset F, int j) { return (F >> j) & 1u; }

inline std::string coords_str(const Coords& c) {
  std::string s = "(";
  for (std::size_t i = 0; i < c.size(); ++i) s += (i ? "," : "") + std::to_string(c[i]);
  return s + ")";
}

inline int total(const MultiIndex& a) { return std::accumulate(a.begin(), a.end(), 0); }

// all multi-indices of length d with |alpha| = n, lexicographically decreasing in the first entry
inline std::vector<MultiIndex> multi_indices_exact(int d, int n) {
  std::vector<MultiIndex> out;
  MultiIndex cur(d, 0);
  std::function<void(int, int)> rec = [&](int j, int left) {
    if (j == d - 1) {
      cur[j] = left;
      out.push_back(cur);
      return;
    }
    for (int k = left; k >= 0; --k) {
      cur[j] = k;
      rec(j + 1, left - k);
    }
  };
  if (d > 0) rec(0, n);
  return out;
}

inline std::vector<MultiIndex> multi_indices_upto(int d, int n) {
  std::vector<MultiIndex> out;
  for (int k = 0; k <= n; ++k)
    for (auto& a : multi_indices_exact(d, k)) out.push_back(a);
  return out;
}

// box [0,hi]^d
inline std::vector<MultiIndex> multi_indices_box(int d, int hi) {
  std::vector<MultiIndex> out;
  MultiIndex cur(d, 0);
  while (true) {
    out.push_back(cur);
    int j = d - 1;
    while (j >= 0 && cur[j] == hi) cur[j--] = 0;
    if (j < 0) break;
    ++cur[j];
  }
  return out;
}

struct CoordsHash {
  std::size_t operator()(const Coords& c) const {
    std::size_t h = 1469598103934665603ull;
    for (auto x : c) h = (h ^ (x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2))) * 1099511628211ull;
    return h;
  }
};

// Directed Cartesian product T_1 x ... x T_d. Vertices are interned lazily to dense ids.
class ProductTree {
 public:
  ProductTree(std::vector<std::shared_ptr<const RootedTree>> factors, int depth_budget)
      : factors_(std::move(factors)), budget_(depth_budget) {
    if (factors_.empty()) throw std::invalid_argument("product needs at least one factor");
    if (factors_.size() > 31) throw std::invalid_argument("too many factors");
    if (depth_budget < 0) throw std::invalid_argument("depth budget must be nonnegative");
    intern(Coords(factors_.size(), 0));
  }

  int d() const { return static_cast<int>(factors_.size()); }
  int budget() const { return budget_; }
  const RootedTree& factor(int j) const { return *factors_.at(j); }
  std::shared_ptr<const RootedTree> factor_ptr(int j) const { return factors_.at(j); }
  Subset full() const { return (Subset(1) << d()) - 1; }

  PVertex root() const { return 0; }
  std::size_t interned() const { return coords_.size(); }

  PVertex intern(const Coords& c) const {
    if (c.size() != factors_.size()) throw std::invalid_argument("coordinate tuple has wrong length");
    auto it = index_.find(c);
    if (it != index_.end()) return it->second;
    MultiIndex dep(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) {
      factors_[j]->enumerate_through(c[j]);
      dep[j] = factors_[j]->depth(c[j]);
    }
    PVertex id = coords_.size();
    coords_.push_back(c);
    depth_.push_back(dep);
    index_.emplace(c, id);
    return id;
  }
  std::optional<PVertex> find(const Coords& c) const {
    auto it = index_.find(c);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Coords& coords(PVertex v) const { return coords_.at(v); }
  const MultiIndex& depth(PVertex v) const { return depth_.at(v); }
  int total_depth(PVertex v) const { return total(depth_.at(v)); }

  std::vector<PVertex> chi(int j, PVertex v) const {
    guard(total_depth(v) + 1);
    std::vector<PVertex> out;
    Coords c = coords(v);
    for (VertexId x : factor(j).children(c[j])) {
      c[j] = x;
      out.push_back(intern(c));
    }
    return out;
  }
  std::size_t num_chi(int j, PVertex v) const { return factor(j).num_children(coords(v)[j]); }

  std::optional<PVertex> par(int j, PVertex v) const {
    Coords c = coords(v);
    auto p = factor(j).parent(c[j]);
    if (!p) return std::nullopt;
    c[j] = *p;
    return intern(c);
  }

  PVertex par_multi(const MultiIndex& a, PVertex v) const {
    Coords c = coords(v);
    for (int j = 0; j < d(); ++j) c[j] = factor(j).ancestor(c[j], a[j]);
    return intern(c);
  }

  // Chi^<alpha>(v): per-axis descendants, sorted by coords
  std::vector<PVertex> chi_multi(const MultiIndex& a, PVertex v) const {
    guard(total_depth(v) + total(a));
    std::vector<std::vector<VertexId>> per(d());
    for (int j = 0; j < d(); ++j) per[j] = factor(j).descendants(coords(v)[j], a[j]);
    return cartesian(per);
  }

  // Chi(v) = union of Chi_j(v)
  std::vector<PVertex> chi_all(PVertex v) const {
    std::vector<PVertex> out;
    for (int j = 0; j < d(); ++j)
      for (PVertex w : chi(j, v)) out.push_back(w);
    return out;
  }

  // generation G_t, sorted lexicographically by coords
  const std::vector<PVertex>& generation(int t) const {
    guard(t);
    if (auto it = gens_.find(t); it != gens_.end()) return it->second;
    std::vector<PVertex> out;
    for (const auto& a : multi_indices_exact(d(), t)) {
      std::vector<std::vector<VertexId>> per(d());
      for (int j = 0; j < d(); ++j) per[j] = factor(j).generation(a[j]);
      for (PVertex v : cartesian(per)) out.push_back(v);
    }
    std::sort(out.begin(), out.end(), [this](PVertex x, PVertex y) { return coords(x) < coords(y); });
    return gens_.emplace(t, std::move(out)).first->second;
  }

  std::vector<PVertex> vertices_upto(int n) const {
    std::vector<PVertex> out;
    for (int t = 0; t <= n; ++t)
      for (PVertex v : generation(t)) out.push_back(v);
    return out;
  }

  Subset support_axes(PVertex v) const {
    Subset F = 0;
    for (int j = 0; j < d(); ++j)
      if (coords(v)[j] != 0) F |= Subset(1) << j;
    return F;
  }

  // sib_j(u) = Chi_j(par_j(u)); empty when u_j is the root
  std::vector<PVertex> sib(int j, PVertex u) const {
    auto p = par(j, u);
    if (!p) return {};
    return chi(j, *p);
  }

  std::vector<PVertex> sib_F(Subset F, PVertex u) const {
    if ((support_axes(u) & F) != F || (support_axes(u) & ~F) != 0)
      throw std::invalid_argument("sib_F: vertex " + coords_str(coords(u)) + " is not in Phi_F");
    std::vector<std::vector<VertexId>> per(d());
    for (int j = 0; j < d(); ++j) {
      VertexId x = coords(u)[j];
      if (has_axis(F, j)) per[j] = factor(j).sib(x);
      else per[j] = {x};
    }
    return cartesian(per);
  }

  bool in_phi(Subset F, PVertex v) const { return support_axes(v) == F; }

  std::vector<PVertex> phi_F(Subset F, int n) const {
    std::vector<PVertex> out;
    for (PVertex v : vertices_upto(n))
      if (in_phi(F, v)) out.push_back(v);
    return out;
  }

  // representative of the sib_F class: coordinate-wise smallest sibling, i.e. lexicographic minimum
  PVertex sib_F_rep(Subset F, PVertex u) const {
    Coords c = coords(u);
    for (int j = 0; j < d(); ++j)
      if (has_axis(F, j)) c[j] = factor(j).sib_min(c[j]);
    return intern(c);
  }

  std::vector<PVertex> omega_F(Subset F, int n) const {
    std::vector<PVertex> out;
    for (PVertex v : phi_F(F, n))
      if (sib_F_rep(F, v) == v) out.push_back(v);
    return out;
  }

  bool certified() const {
    for (const auto& f : factors_)
      if (!f->certified()) return false;
    return true;
  }

  // (k_{T_1},...,k_{T_d}); nullopt if some factor is not certified within the budget
  std::optional<MultiIndex> joint_branching_index() const {
    MultiIndex k(d());
    for (int j = 0; j < d(); ++j) {
      auto kj = factor(j).branching_index(budget_);
      if (!kj) return std::nullopt;
      k[j] = *kj;
    }
    return k;
  }

  // product branching vertices within depth n: every coordinate branches
  std::vector<PVertex> branching_vertices(int n) const {
    std::vector<PVertex> out;
    for (PVertex v : vertices_upto(n)) {
      bool all = true;
      for (int j = 0; j < d() && all; ++j) all = num_chi(j, v) >= 2;
      if (all) out.push_back(v);
    }
    return out;
  }

  std::vector<PVertex> cartesian(const std::vector<std::vector<VertexId>>& per) const {
    std::vector<PVertex> out;
    for (const auto& p : per)
      if (p.empty()) return out;
    std::vector<std::size_t> idx(per.size(), 0);
    Coords c(per.size());
    while (true) {
      for (std::size_t j = 0; j < per.size(); ++j) c[j] = per[j][idx[j]];
      out.push_back(intern(c));
      int j = static_cast<int>(per.size()) - 1;
      while (j >= 0 && idx[j] + 1 == per[j].size()) idx[j--] = 0;
      if (j < 0) break;
      ++idx[j];
    }
    return out;
  }

 private:
  void guard(int depth) const {
    if (depth > budget_)
      throw std::out_of_range("depth budget exceeded: need total depth " + std::to_string(depth) + ", budget " + std::to_string(budget_));
  }

  std::vector<std::shared_ptr<const RootedTree>> factors_;
  int budget_;
  mutable std::vector<Coords> coords_;
  mutable std::vector<MultiIndex> depth_;
  mutable std::unordered_map<Coords, PVertex, CoordsHash> index_;
  mutable std::map<int, std::vector<PVertex>> gens_;
};

inline std::shared_ptr<const RootedTree> share(RootedTree t) { return std::make_shared<const RootedTree>(std::move(t)); }

inline ProductTree make_product(const std::vector<RootedTree>& trees, int budget) {
  std::vector<std::shared_ptr<const RootedTree>> f;
  for (const auto& t : trees) f.push_back(share(t));
  return ProductTree(std::move(f), budget);
}

// Root component of the tensor product: children(v) = Chi_1 ... Chi_d(v).
struct TensorRootComponent {
  std::shared_ptr<RootedTree> tree;
  std::shared_ptr<std::vector<Coords>> coords;  // coords[id] in V
  int depth(VertexId v) const { return tree->depth(v); }
};

inline TensorRootComponent tensor_root_component(const ProductTree& p) {
  auto coords = std::make_shared<std::vector<Coords>>();
  coords->push_back(Coords(p.d(), 0));
  std::vector<std::shared_ptr<const RootedTree>> fs;
  for (int j = 0; j < p.d(); ++j) fs.push_back(p.factor_ptr(j));
  std::optional<int> k = 0;
  for (const auto& f : fs) {
    auto kj = f->branching_index(1 << 30);
    if (!kj) k.reset();
    else if (k) k = std::max(*k, *kj);
  }
  auto count = [coords, fs](VertexId v) -> std::size_t {
    const Coords c = coords->at(v);
    std::vector<std::vector<VertexId>> per;
    std::size_t n = 1;
    for (std::size_t j = 0; j < fs.size(); ++j) {
      per.push_back(fs[j]->children(c[j]));
      n *= per.back().size();
    }
    std::vector<std::size_t> idx(per.size(), 0);
    Coords w(per.size());
    for (std::size_t m = 0; m < n; ++m) {
      for (std::size_t j = 0; j < per.size(); ++j) w[j] = per[j][idx[j]];
      coords->push_back(w);
      for (int j = static_cast<int>(per.size()) - 1; j >= 0; --j) {
        if (++idx[j] < per[j].size()) break;
        idx[j] = 0;
      }
    }
    return n;
  };
  TensorRootComponent out;
  out.tree = std::make_shared<RootedTree>(RootedTree::custom(count, k));
  out.coords = coords;
  return out;
}

// level sizes and per-level sorted child-count profile, for isomorphism comparisons between trees
struct LevelProfile {
  std::vector<std::size_t> sizes;
  std::vector<std::vector<std::size_t>> branching;
  bool operator==(const LevelProfile&) const = default;
};

inline LevelProfile level_profile(const RootedTree& t, int depth) {
  LevelProfile lp;
  for (int n = 0; n <= depth; ++n) {
    lp.sizes.push_back(t.generation_size(n));
    std::vector<std::size_t> b;
    for (VertexId v : t.generation(n)) b.push_back(t.num_children(v));
    std::sort(b.begin(), b.end());
    lp.branching.push_back(b);
  }
  return lp;
}

// d = 2 matrix decomposition sets
struct D2Sets {
  std::vector<VertexId> G[2], W[2];
  std::vector<PVertex> F1, F2, F3;
  std::vector<std::pair<Coords, std::vector<PVertex>>> L;  // L_v for v in G_1 x G_2
};

inline D2Sets d2_decomposition_sets(const ProductTree& p, int n) {
  if (p.d() != 2) throw std::invalid_argument("decompose2 requires d = 2");
  if (!p.certified()) throw std::invalid_argument("decompose2 requires certified finite branching index on both factors");
  D2Sets s;
  std::set<VertexId> Wset[2];
  for (int j = 0; j < 2; ++j) {
    const RootedTree& t = p.factor(j);
    auto bv = t.branching_vertices();
    if (bv.empty()) {
      s.G[j] = {0};
    } else {
      std::set<VertexId> branching(bv.begin(), bv.end());
      int k = *t.branching_index(1 << 30);
      for (VertexId c : t.branching_children()) {
        // unary forever iff no branching vertex among descendants (they are all shallower than k)
        bool unary = true;
        for (int r = 0; t.depth(c) + r < k && unary; ++r)
          for (VertexId x : t.descendants(c, r))
            if (branching.count(x)) unary = false;
        if (unary) s.G[j].push_back(c);
      }
      for (VertexId g : s.G[j]) {
        VertexId x = g;
        while (auto par = t.parent(x)) {
          x = *par;
          Wset[j].insert(x);
        }
      }
    }
    s.W[j].assign(Wset[j].begin(), Wset[j].end());
  }
  auto descends = [&](int j, VertexId x, VertexId g) {
    const RootedTree& t = p.factor(j);
    int dx = t.depth(x), dg = t.depth(g);
    return dx >= dg && t.ancestor(x, dx - dg) == g;
  };
  for (VertexId g1 : s.G[0])
    for (VertexId g2 : s.G[1]) s.L.push_back({Coords{g1, g2}, {}});
  for (PVertex v : p.vertices_upto(n)) {
    const Coords& c = p.coords(v);
    if (Wset[0].count(c[0])) {
      s.F1.push_back(v);
    } else if (Wset[1].count(c[1])) {
      s.F2.push_back(v);
    } else {
      s.F3.push_back(v);
      for (auto& [g, block] : s.L)
        if (descends(0, c[0], g[0]) && descends(1, c[1], g[1])) block.push_back(v);
    }
  }
  return s;
}

}  // namespace mshift
