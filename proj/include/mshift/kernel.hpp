#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mshift/multishift.hpp"

namespace mshift {

inline bool colex_less(const Coords& a, const Coords& b) {
  for (std::size_t j = a.size(); j-- > 0;)
    if (a[j] != b[j]) return a[j] < b[j];
  return false;
}

// sum_{w in sib_i(v_G|u_i)} f(w) lambda^{(i)}_w = 0 for each axis i in F and each v_G
struct LinearSystem {
  Subset F = 0;
  PVertex u = 0;
  std::vector<PVertex> unknowns;  // sib_F(u), colex order ((1,1),(2,1),(1,2),(2,2))
  struct Row {
    int axis;
    PVertex v_G;  // the equation's vertex: axis coordinate moved to its parent
  };
  std::vector<Row> rows;
  Eigen::MatrixXd A;
};

inline LinearSystem build_system(const ProductTree& p, const WeightSystem& ws, Subset F, PVertex u) {
  if (!p.in_phi(F, u)) throw std::invalid_argument("build_system: u=" + coords_str(p.coords(u)) + " is not in Phi_F");
  if (p.sib_F_rep(F, u) != u) throw std::invalid_argument("build_system: u=" + coords_str(p.coords(u)) + " is not the representative of its sib_F class");
  LinearSystem s;
  s.F = F;
  s.u = u;
  s.unknowns = p.sib_F(F, u);
  auto by_colex = [&](PVertex x, PVertex y) { return colex_less(p.coords(x), p.coords(y)); };
  std::sort(s.unknowns.begin(), s.unknowns.end(), by_colex);
  std::map<PVertex, std::size_t> col;
  for (std::size_t k = 0; k < s.unknowns.size(); ++k) col[s.unknowns[k]] = k;
  std::vector<std::vector<std::pair<std::size_t, double>>> entries;
  for (int i = 0; i < p.d(); ++i) {
    if (!has_axis(F, i)) continue;
    std::vector<PVertex> bases;
    for (PVertex w : s.unknowns) bases.push_back(*p.par(i, w));
    std::sort(bases.begin(), bases.end(), by_colex);
    bases.erase(std::unique(bases.begin(), bases.end()), bases.end());
    for (PVertex b : bases) {
      s.rows.push_back({i, b});
      std::vector<std::pair<std::size_t, double>> row;
      for (PVertex w : p.chi(i, b)) row.push_back({col.at(w), ws.weight(p, i, w)});
      entries.push_back(row);
    }
  }
  s.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.rows.size()), static_cast<Eigen::Index>(s.unknowns.size()));
  for (std::size_t r = 0; r < entries.size(); ++r)
    for (auto [c, x] : entries[r]) s.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
  return s;
}

struct NullSpace {
  Eigen::MatrixXd basis;  // columns, orthonormal
  Eigen::VectorXd singular;
  int rank = 0;
};

inline NullSpace null_space(const Eigen::MatrixXd& A, double tol) {
  NullSpace out;
  const auto n = A.cols();
  if (A.rows() == 0) {
    out.basis = Eigen::MatrixXd::Identity(n, n);
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  out.singular = svd.singularValues();
  const double smax = out.singular.size() ? out.singular(0) : 0.0;
  for (Eigen::Index k = 0; k < out.singular.size(); ++k)
    if (out.singular(k) > tol * smax) ++out.rank;
  out.basis = svd.matrixV().rightCols(n - out.rank);
  return out;
}

inline int numerical_rank(const Eigen::MatrixXd& A, double tol) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& s = svd.singularValues();
  int r = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) > tol * s(0)) ++r;
  return r;
}

struct KernelBlock {
  Subset F = 0;
  PVertex u = 0;
  int generation = 0;
  std::vector<PVertex> support;
  std::vector<VertexFunction> basis;
  std::size_t equations = 0;
};

struct KernelBasis {
  std::vector<KernelBlock> blocks;
  std::optional<std::pair<long, long>> bounds;  // dim-formula bounds, when the branching index is certified
  bool truncated = false;                        // uncertified trees: blocks only within the generation window
  int window = 0;
  double max_residual = 0;
  bool commuting = true;

  std::size_t dim() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.basis.size();
    return n;
  }
  std::vector<VertexFunction> all() const {
    std::vector<VertexFunction> out;
    for (const auto& b : blocks)
      for (const auto& f : b.basis) out.push_back(f);
    return out;
  }
};

inline double max_adjoint_residual(const WeightSystem& ws, const ProductTree& p, const VertexFunction& f) {
  double r = 0;
  for (int j = 0; j < p.d(); ++j) r = std::max(r, std::sqrt(norm2(apply(ws, p, j, f, true))));
  return r / std::sqrt(norm2(f));
}

// first child of every branching vertex of factor j (within depth `window` for uncertified trees)
inline std::vector<VertexId> sibling_class_heads(const RootedTree& t, int window) {
  std::vector<VertexId> out;
  if (t.certified()) {
    for (VertexId v : t.branching_vertices()) out.push_back(t.first_child(v));
  } else {
    for (int g = 0; g < window; ++g)
      for (VertexId v : t.generation(g))
        if (t.num_children(v) >= 2) out.push_back(t.first_child(v));
  }
  return out;
}

inline std::optional<std::pair<long, long>> dim_bounds(const ProductTree& p) {
  if (!p.certified()) return std::nullopt;
  long lo = 1, hi = 1;
  for (int j = 0; j < p.d(); ++j) {
    long chi = 0;
    for (VertexId v : p.factor(j).branching_vertices()) {
      long c = static_cast<long>(p.factor(j).num_children(v));
      lo += c - 1;
      chi += c;
    }
    hi *= chi + 1;
  }
  return std::make_pair(lo, hi);
}

// E = [e_root] + sum over F, u of L_{u,F}; blocks whose class is a singleton on some axis are zero
inline KernelBasis joint_kernel(const ProductTree& p, const WeightSystem& ws, double tol = 1e-10, std::optional<int> window = std::nullopt) {
  KernelBasis kb;
  kb.truncated = !p.certified();
  kb.window = kb.truncated ? window.value_or(p.budget()) : p.budget();
  std::vector<std::vector<VertexId>> heads(p.d());
  for (int j = 0; j < p.d(); ++j) heads[j] = sibling_class_heads(p.factor(j), kb.window);
  kb.blocks.push_back({0, p.root(), 0, {p.root()}, {delta(p.root())}, 0});
  for (Subset F = 1; F <= p.full(); ++F) {
    std::vector<std::vector<VertexId>> per(p.d());
    for (int j = 0; j < p.d(); ++j) per[j] = has_axis(F, j) ? heads[j] : std::vector<VertexId>{0};
    std::vector<Coords> us;
    {
      bool empty = false;
      for (const auto& x : per) empty |= x.empty();
      if (empty) continue;
      std::vector<std::size_t> idx(p.d(), 0);
      while (true) {
        Coords c(p.d());
        for (int j = 0; j < p.d(); ++j) c[j] = per[j][idx[j]];
        us.push_back(c);
        int j = p.d() - 1;
        while (j >= 0 && idx[j] + 1 == per[j].size()) idx[j--] = 0;
        if (j < 0) break;
        ++idx[j];
      }
    }
    std::sort(us.begin(), us.end(), colex_less);
    for (const Coords& c : us) {
      int g = 0;
      for (int j = 0; j < p.d(); ++j) g += p.factor(j).depth(c[j]);
      if (g > kb.window) {
        if (!kb.truncated) throw std::out_of_range("joint_kernel: depth budget " + std::to_string(p.budget()) + " too small to contain Chi(V_prec) (need " + std::to_string(g) + ")");
        continue;
      }
      PVertex u = p.intern(c);
      LinearSystem sys = build_system(p, ws, F, u);
      NullSpace ns = null_space(sys.A, tol);
      KernelBlock blk{F, u, g, sys.unknowns, {}, sys.rows.size()};
      for (Eigen::Index k = 0; k < ns.basis.cols(); ++k) {
        Eigen::VectorXd x = ns.basis.col(k);
        // sign convention: first nonzero entry positive
        for (Eigen::Index r = 0; r < x.size(); ++r)
          if (std::abs(x(r)) > 1e-12) {
            if (x(r) < 0) x = -x;
            break;
          }
        VertexFunction f;
        for (std::size_t r = 0; r < sys.unknowns.size(); ++r)
          if (x(static_cast<Eigen::Index>(r)) != 0) f[sys.unknowns[r]] = x(static_cast<Eigen::Index>(r));
        kb.max_residual = std::max(kb.max_residual, max_adjoint_residual(ws, p, f));
        blk.basis.push_back(f);
      }
      if (!blk.basis.empty()) kb.blocks.push_back(blk);
    }
  }
  kb.bounds = dim_bounds(p);
  int maxg = 0;
  for (const auto& b : kb.blocks) maxg = std::max(maxg, b.generation);
  // explicit tables may stop short of the probe depth; treat that as "not known to commute"
  try {
    kb.commuting = p.budget() >= 2 && commuting_check(ws, p, std::min(p.budget() - 2, maxg + 1)).ok;
  } catch (const std::out_of_range&) {
    kb.commuting = false;
  }
  return kb;
}

// d = 1: E = [e_root] + sum_v (l^2(Chi(v)) minus [Gamma_v])
inline KernelBasis onevar_kernel(const ProductTree& p, const WeightSystem& ws, std::optional<int> window = std::nullopt) {
  if (p.d() != 1) throw std::invalid_argument("onevar_kernel requires d = 1");
  KernelBasis kb;
  kb.truncated = !p.certified();
  kb.window = window.value_or(p.budget());
  kb.blocks.push_back({0, p.root(), 0, {p.root()}, {delta(p.root())}, 0});
  const RootedTree& t = p.factor(0);
  std::vector<VertexId> bv;
  if (t.certified()) bv = t.branching_vertices();
  else
    for (int g = 0; g < kb.window; ++g)
      for (VertexId v : t.generation(g))
        if (t.num_children(v) >= 2) bv.push_back(v);
  for (VertexId v : bv) {
    PVertex pv = p.intern({v});
    auto ch = p.chi(0, pv);
    Eigen::VectorXd gamma(static_cast<Eigen::Index>(ch.size()));
    for (std::size_t k = 0; k < ch.size(); ++k) gamma(static_cast<Eigen::Index>(k)) = ws.weight(p, 0, ch[k]);
    Eigen::MatrixXd g = gamma;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd Q = qr.householderQ();
    KernelBlock blk{1, ch.front(), t.depth(ch.front()), ch, {}, 1};
    for (Eigen::Index k = 1; k < Q.cols(); ++k) {
      VertexFunction f;
      for (std::size_t r = 0; r < ch.size(); ++r) f[ch[r]] = Q(static_cast<Eigen::Index>(r), k);
      kb.max_residual = std::max(kb.max_residual, max_adjoint_residual(ws, p, f));
      blk.basis.push_back(f);
    }
    kb.blocks.push_back(blk);
  }
  kb.bounds = dim_bounds(p);
  return kb;
}

// f -> S^alpha f; the beta-product formula when commuting, otherwise iterated application
inline VertexFunction shift_power(const WeightSystem& ws, const ProductTree& p, const MultiIndex& a, const VertexFunction& f, bool commuting) {
  if (!commuting) return apply_multi(ws, p, a, f);
  VertexFunction out;
  for (const auto& [v, c] : f) axpy(c, power_apply(ws, p, a, v, false), out);
  return out;
}

struct WanderingResult {
  std::size_t expected = 0;
  int rank = 0;
  std::size_t vectors = 0;
  bool ok() const { return static_cast<std::size_t>(rank) == expected; }
};

// rank of {S^alpha f : f in E supported in generation g, g + |alpha| <= N} against card(V_{<=N})
inline WanderingResult wandering_rank_check(const ProductTree& p, const WeightSystem& ws, const KernelBasis& kb, int N, double tol = 1e-8) {
  if (N > p.budget()) throw std::out_of_range("wandering_rank_check: N exceeds budget");
  auto verts = p.vertices_upto(N);
  std::map<PVertex, Eigen::Index> row;
  for (std::size_t k = 0; k < verts.size(); ++k) row[verts[k]] = static_cast<Eigen::Index>(k);
  std::vector<VertexFunction> cols;
  for (const auto& blk : kb.blocks) {
    if (blk.generation > N) continue;
    for (const auto& a : multi_indices_upto(p.d(), N - blk.generation))
      for (const auto& f : blk.basis) cols.push_back(shift_power(ws, p, a, f, kb.commuting));
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(verts.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (const auto& [v, x] : cols[c]) M(row.at(v), static_cast<Eigen::Index>(c)) = x;
  WanderingResult r;
  r.expected = verts.size();
  r.vectors = cols.size();
  r.rank = numerical_rank(M, tol);
  return r;
}

struct KernelConditionResult {
  bool holds = true;
  double max_residual = 0;
  std::size_t checked = 0;
  struct Witness {
    std::size_t basis_index;
    int axis;
    MultiIndex alpha;
    double residual;
  };
  std::vector<Witness> witnesses;
};

// E inside ker S_j^* prod_{i != j} (S^t_i)^{alpha_i}, |alpha| <= budget
inline KernelConditionResult kernel_condition_K(const ProductTree& p, const WeightSystem& ws, const KernelBasis& kb, int alpha_budget, double tol = 1e-9) {
  int maxg = 0;
  for (const auto& b : kb.blocks) maxg = std::max(maxg, b.generation);
  auto inf = invertibility_infima(ws, p, std::min(p.budget() - 1, maxg + alpha_budget));
  if (!inf.toral_left_invertible()) throw std::invalid_argument("kernel condition: not toral left invertible");
  WeightSystem dual = cauchy_dual(ws, p, DualMode::Toral, 0);
  KernelConditionResult r;
  auto basis = kb.all();
  for (std::size_t k = 0; k < basis.size(); ++k)
    for (int j = 0; j < p.d(); ++j)
      for (const auto& a : multi_indices_upto(p.d(), alpha_budget)) {
        if (a[j] != 0) continue;
        VertexFunction g = apply_multi(dual, p, a, basis[k]);
        double res = std::sqrt(norm2(apply(ws, p, j, g, true)) / norm2(basis[k]));
        ++r.checked;
        r.max_residual = std::max(r.max_residual, res);
        if (res > tol) {
          r.holds = false;
          if (r.witnesses.size() < 16) r.witnesses.push_back({k, j, a, res});
        }
      }
  return r;
}

struct ShimorinCoeffs {
  std::map<std::pair<MultiIndex, MultiIndex>, Eigen::MatrixXd> coeff;  // (alpha, beta) -> P_E S^t*alpha S^t beta |_E
  MultiIndex band;                                                    // k_{T_j}
  double max_outside_band = 0;
  double max_inside_band = 0;
  bool in_band(const MultiIndex& a, const MultiIndex& b) const {
    for (std::size_t j = 0; j < a.size(); ++j)
      if (std::abs(a[j] - b[j]) > band[j]) return false;
    return true;
  }
};

inline ShimorinCoeffs shimorin_kernel_coeffs(const ProductTree& p, const WeightSystem& ws, const KernelBasis& kb, int alpha_budget, double tol = 1e-9) {
  auto k = p.joint_branching_index();
  if (!k) throw std::invalid_argument("shimorin coefficients: joint branching index not finite within budget");
  WeightSystem dual = cauchy_dual(ws, p, DualMode::Toral, std::max(0, p.budget() - 1));
  auto dc = commuting_check(dual, p, std::max(0, std::min(p.budget() - 2, alpha_budget + 2)), tol);
  if (!dc.ok) throw std::invalid_argument("shimorin coefficients: toral Cauchy dual is not commuting (" + dc.witness + ")");
  auto K = kernel_condition_K(p, ws, kb, alpha_budget, tol);
  if (!K.holds) throw std::invalid_argument("shimorin coefficients: kernel condition (K) fails, E not inside ker S_j^* (S^t)^alpha_[j]");
  ShimorinCoeffs out;
  out.band = *k;
  auto basis = kb.all();
  auto idx = multi_indices_upto(p.d(), alpha_budget);
  std::map<MultiIndex, std::vector<VertexFunction>> images;
  for (const auto& a : idx)
    for (const auto& f : basis) images[a].push_back(apply_multi(dual, p, a, f));
  const auto n = static_cast<Eigen::Index>(basis.size());
  for (const auto& a : idx)
    for (const auto& b : idx) {
      Eigen::MatrixXd M(n, n);
      for (Eigen::Index l = 0; l < n; ++l)
        for (Eigen::Index m = 0; m < n; ++m) M(l, m) = inner(images[b][static_cast<std::size_t>(m)], images[a][static_cast<std::size_t>(l)]);
      double nrm = n ? M.jacobiSvd().singularValues()(0) : 0.0;
      if (out.in_band(a, b)) out.max_inside_band = std::max(out.max_inside_band, nrm);
      else out.max_outside_band = std::max(out.max_outside_band, nrm);
      out.coeff.emplace(std::make_pair(a, b), std::move(M));
    }
  return out;
}

struct RkhsBlockTable {
  Subset F = 0;
  PVertex u = 0;
  MultiIndex alpha_u;
  struct Entry {
    MultiIndex alpha;
    double coeff;   // closed form
    double moment;  // ||S^alpha f||^2 for a unit f in the block
  };
  std::vector<Entry> entries;
};

// alpha_u!/(alpha_u+alpha)! prod_{j<|alpha|} (|alpha_u|+a+j); the root block is alpha_u = 0
inline double rkhs_coeff_closed(const MultiIndex& au, const MultiIndex& a, double pa) {
  double x = 1;
  const int t = total(au);
  int step = 0;
  for (std::size_t j = 0; j < a.size(); ++j)
    for (int k = 1; k <= a[j]; ++k) {
      x *= (t + pa + step) / (au[j] + k);
      ++step;
    }
  return x;
}

inline std::vector<RkhsBlockTable> rkhs_coeffs_power_family(const ProductTree& p, const WeightSystem& ws, const KernelBasis& kb, int alpha_budget) {
  if (ws.family() != WeightSystem::Family::Power) throw std::invalid_argument("rkhs coefficients require power-family weights");
  std::vector<RkhsBlockTable> out;
  for (const auto& blk : kb.blocks) {
    if (blk.generation + alpha_budget > p.budget()) continue;
    RkhsBlockTable t{blk.F, blk.u, p.depth(blk.u), {}};
    const auto& f = blk.basis.front();
    for (const auto& a : multi_indices_upto(p.d(), alpha_budget)) {
      double m = norm2(apply_multi(ws, p, a, f)) / norm2(f);
      t.entries.push_back({a, rkhs_coeff_closed(t.alpha_u, a, ws.a()), m});
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace mshift
