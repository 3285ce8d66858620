#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mshift/kernel.hpp"
#include "mshift/multishift.hpp"

namespace mshift {

enum class Verdict { Yes, YesAtWindow, No, Inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Yes: return "yes";
    case Verdict::YesAtWindow: return "yes-at-window";
    case Verdict::No: return "no";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

// C_t = sum_j ||S_j e_v||^2 on generation t. Closed form for the balanced families,
// otherwise read off the materialized product (which must be spherically balanced there).
inline std::function<double(int)> joint_c_sequence(const WeightSystem& ws, const ProductTree& p) {
  const int d = p.d();
  switch (ws.family()) {
    case WeightSystem::Family::Power: {
      double a = ws.a();
      return [a, d](int t) { return (t + d) / (t + a); };
    }
    case WeightSystem::Family::SphericallyBalanced:
      return [ws](int t) { return ws.seq(t); };
    case WeightSystem::Family::TorallyBalanced:
      return [ws, d](int t) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += ws.c(t, j);
        return s;
      };
    default: {
      auto rep = balanced_detect(ws, p, p.budget() - 1);
      if (!rep.spherically) throw std::invalid_argument("not spherically balanced: " + rep.spherical_witness);
      auto c = rep.spherical_c;
      return [c](int t) {
        if (t < 0 || t >= static_cast<int>(c.size())) throw std::out_of_range("C_t beyond the materialized depth (t=" + std::to_string(t) + ")");
        return c[static_cast<std::size_t>(t)];
      };
    }
  }
}

// one-variable balanced shift S_theta on the root component of the tensor product
struct AssociatedShift {
  TensorRootComponent tree;
  std::function<double(int)> c;

  double theta(VertexId w) const {
    const RootedTree& t = *tree.tree;
    return std::sqrt(c(t.depth(w) - 1) / static_cast<double>(t.num_siblings(w)));
  }
  // ||S_theta^k e_v||^2 by recursion over the tree
  double moment(int k, VertexId v) const {
    if (k == 0) return 1.0;
    double s = 0;
    for (VertexId w : tree.tree->children(v)) {
      double th = theta(w);
      s += th * th * moment(k - 1, w);
    }
    return s;
  }
  double moment_closed(int k, int t) const {
    double x = 1;
    for (int p = 0; p < k; ++p) x *= c(t + p);
    return x;
  }
  VertexId vertex_at(int t) const { return tree.tree->generation_first(t); }
};

inline AssociatedShift associated_shift(const ProductTree& p, const WeightSystem& ws, int check_depth = 4) {
  check_depth = std::min(check_depth, p.budget() - 1);
  auto rep = balanced_detect(ws, p, check_depth);
  if (!rep.spherically) throw std::invalid_argument("associated shift: not spherically balanced (" + rep.spherical_witness + ")");
  auto inf = invertibility_infima(ws, p, check_depth);
  if (!inf.joint_left_invertible()) throw std::invalid_argument("associated shift: not joint left invertible");
  return {tensor_root_component(p), joint_c_sequence(ws, p)};
}

inline double multinomial(const MultiIndex& a) {
  double x = std::lgamma(total(a) + 1.0);
  for (int k : a) x -= std::lgamma(k + 1.0);
  return std::round(std::exp(x));
}

// <Q^n(I) e_v, e_v> = sum_{|alpha|=n} n!/alpha! ||S^alpha e_v||^2
inline double q_power_diag(const ProductTree& p, const WeightSystem& ws, int n, PVertex v, MomentCache* cache = nullptr) {
  if (p.total_depth(v) + n > p.budget()) throw std::out_of_range("q_power_diag: |alpha_v| + n exceeds budget");
  MomentCache local(ws, p);
  MomentCache& m = cache ? *cache : local;
  double s = 0;
  for (const auto& a : multi_indices_exact(p.d(), n)) s += multinomial(a) * m(a, v);
  return s;
}

struct QnIdentity {
  double max_relerr = 0;
  std::size_t checked = 0;
  double max_q = 0, max_theta = 0;  // finite-window sup over v of both sides
};

inline QnIdentity qn_identity_check(const ProductTree& p, const WeightSystem& ws, int n_max, int v_depth) {
  AssociatedShift S = associated_shift(p, ws);
  MomentCache cache(ws, p);
  QnIdentity r;
  for (PVertex v : p.vertices_upto(v_depth)) {
    const int t = p.total_depth(v);
    for (int n = 0; n <= n_max; ++n) {
      double q = q_power_diag(p, ws, n, v, &cache);
      double th = S.moment(n, S.vertex_at(t));
      r.max_relerr = std::max(r.max_relerr, std::abs(q - th) / std::abs(th));
      if (n == n_max) {
        r.max_q = std::max(r.max_q, q);
        r.max_theta = std::max(r.max_theta, th);
      }
      ++r.checked;
    }
  }
  return r;
}

struct RadiiEstimate {
  int n_max = 0, k_max = 0;
  std::vector<double> sup_k;  // per n: sup_{k<=k_max} (prod_{p<n} C_{k+p})^{1/2n}
  std::vector<double> inf_k;
  double r_est = 0;           // inf over n of sup_k (the limit of a subadditive sequence is its infimum)
  double r_est_max_over_n = 0;
  double m_inf_est = 0;       // sup over n of inf_k
};

inline RadiiEstimate radii_estimates(const std::function<double(int)>& c, int n_max, int k_max) {
  if (n_max < 1 || k_max < 0) throw std::invalid_argument("radii: need n_max >= 1, k_max >= 0");
  std::vector<double> logc(static_cast<std::size_t>(k_max + n_max));
  for (int t = 0; t < k_max + n_max; ++t) {
    double x = c(t);
    if (!(x > 0)) throw std::invalid_argument("radii: C_t must be positive");
    logc[static_cast<std::size_t>(t)] = std::log(x);
  }
  std::vector<double> prefix(logc.size() + 1, 0.0);
  for (std::size_t t = 0; t < logc.size(); ++t) prefix[t + 1] = prefix[t] + logc[t];
  RadiiEstimate r;
  r.n_max = n_max;
  r.k_max = k_max;
  r.r_est = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= n_max; ++n) {
    double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= k_max - 0 && k + n <= static_cast<int>(logc.size()); ++k) {
      double L = (prefix[static_cast<std::size_t>(k + n)] - prefix[static_cast<std::size_t>(k)]) / (2.0 * n);
      hi = std::max(hi, L);
      lo = std::min(lo, L);
    }
    r.sup_k.push_back(std::exp(hi));
    r.inf_k.push_back(std::exp(lo));
    r.r_est = std::min(r.r_est, std::exp(hi));
    r.r_est_max_over_n = std::max(r.r_est_max_over_n, std::exp(hi));
    r.m_inf_est = std::max(r.m_inf_est, std::exp(lo));
  }
  return r;
}

inline RadiiEstimate radii_estimates(const ProductTree& p, const WeightSystem& ws, int n_max, int k_max) {
  return radii_estimates(joint_c_sequence(ws, p), n_max, k_max);
}

// ---- subnormality

struct SubnormalityReport {
  Verdict verdict = Verdict::Inconclusive;
  int window = 0;
  double tol = 0;
  std::vector<Coords> W_tilde;
  struct Witness {
    Coords v;
    MultiIndex alpha, beta;
    double value;
  };
  std::optional<Witness> witness;
  std::size_t differences_checked = 0;
  // spherically balanced joint contractions: complete monotonicity of prod_{p<n} C_p
  std::optional<Verdict> spherical_path;
};

// W_j = Chi(V_prec^(j)) + {root_j}
inline std::vector<PVertex> w_tilde(const ProductTree& p, int window) {
  std::vector<std::vector<VertexId>> per(p.d());
  for (int j = 0; j < p.d(); ++j) {
    const RootedTree& t = p.factor(j);
    per[j] = {0};
    std::vector<VertexId> bv;
    if (t.certified()) bv = t.branching_vertices();
    else
      for (int g = 0; g < window; ++g)
        for (VertexId v : t.generation(g))
          if (t.num_children(v) >= 2) bv.push_back(v);
    for (VertexId v : bv)
      for (VertexId c : t.children(v)) per[j].push_back(c);
    std::sort(per[j].begin(), per[j].end());
    per[j].erase(std::unique(per[j].begin(), per[j].end()), per[j].end());
  }
  return p.cartesian(per);
}

// smallest |beta| first, then beta, then alpha lexicographically
struct CmFailure {
  MultiIndex alpha, beta;
  double value;
};

// forward differences nabla^beta phi(alpha) >= -tol * (sum of |terms|), alpha, beta in [0,w]^d
inline std::optional<CmFailure> complete_monotonicity(int d, int w, const std::function<double(const MultiIndex&)>& phi, double tol, std::size_t* checked = nullptr) {
  const int side = 2 * w + 1;
  auto flat = [&](const MultiIndex& a) {
    std::size_t k = 0;
    for (int j = 0; j < d; ++j) k = k * static_cast<std::size_t>(side) + static_cast<std::size_t>(a[j]);
    return k;
  };
  std::vector<MultiIndex> all = multi_indices_box(d, 2 * w);
  std::vector<double> base(all.size());
  for (const auto& a : all) base[flat(a)] = phi(a);
  // D_beta and |D|_beta over the box; built along beta in lexicographic order by peeling one axis
  std::map<MultiIndex, std::pair<std::vector<double>, std::vector<double>>> D;
  std::vector<double> absb(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) absb[k] = std::abs(base[k]);
  D[MultiIndex(d, 0)] = {base, absb};
  std::vector<MultiIndex> betas = multi_indices_box(d, w);
  std::sort(betas.begin(), betas.end(), [](const MultiIndex& x, const MultiIndex& y) {
    int tx = total(x), ty = total(y);
    return tx != ty ? tx < ty : x < y;
  });
  std::optional<CmFailure> fail;
  for (const auto& b : betas) {
    if (total(b) > 0) {
      int j = 0;
      while (b[j] == 0) ++j;
      MultiIndex prev = b;
      --prev[j];
      const auto& [pv, pa] = D.at(prev);
      std::vector<double> cur(base.size(), 0.0), cura(base.size(), 0.0);
      for (const auto& a : all) {
        bool ok = true;
        for (int i = 0; i < d; ++i) ok &= a[i] + b[i] <= 2 * w;
        if (!ok) continue;
        MultiIndex a1 = a;
        ++a1[j];
        cur[flat(a)] = pv[flat(a)] - pv[flat(a1)];
        cura[flat(a)] = pa[flat(a)] + pa[flat(a1)];
      }
      D[b] = {std::move(cur), std::move(cura)};
    }
    const auto& [cv, ca] = D.at(b);
    for (const auto& a : multi_indices_box(d, w)) {
      if (checked) ++*checked;
      double x = cv[flat(a)];
      if (x < -tol * ca[flat(a)] && !fail) fail = CmFailure{a, b, x};
    }
    if (fail) return fail;
  }
  return fail;
}

// vertex_window only matters for trees without a certified branching index (W is infinite there)
inline SubnormalityReport subnormality_classify(const ProductTree& p, const WeightSystem& ws, int window, double tol = 1e-9, int vertex_window = 2) {
  SubnormalityReport r;
  r.window = window;
  r.tol = tol;
  auto W = w_tilde(p, vertex_window);
  int maxdepth = 0;
  for (PVertex v : W) maxdepth = std::max(maxdepth, p.total_depth(v));
  const int probe = p.certified() ? maxdepth + 2 * p.d() * window : maxdepth + 2;
  auto inf = invertibility_infima(ws, p, std::min(p.budget() - 1, probe));
  for (int j = 0; j < p.d(); ++j)
    if (inf.toral_sup[j] > 1 + 1e-12) throw std::invalid_argument("subnormality: not a toral contraction (sup ||S_" + std::to_string(j + 1) + " e_v||^2 = " + std::to_string(inf.toral_sup[j]) + ")");
  const bool closed = ws.family() == WeightSystem::Family::Power || ws.family() == WeightSystem::Family::SphericallyBalanced || ws.family() == WeightSystem::Family::TorallyBalanced;
  MomentCache cache(ws, p);
  for (PVertex v : W) {
    r.W_tilde.push_back(p.coords(v));
    auto phi = [&](const MultiIndex& a) { return closed ? moment_closed(ws, p, a, v) : cache(a, v); };
    auto f = complete_monotonicity(p.d(), window, phi, tol, &r.differences_checked);
    if (f && !r.witness) r.witness = SubnormalityReport::Witness{p.coords(v), f->alpha, f->beta, f->value};
  }
  r.verdict = r.witness ? Verdict::No : Verdict::YesAtWindow;
  // spherically balanced joint contraction: the one-variable sequence prod_{p<n} C_p
  auto rep = balanced_detect(ws, p, std::min(p.budget() - 1, 4));
  if (rep.spherically) {
    auto c = joint_c_sequence(ws, p);
    bool contraction = true;
    for (int t = 0; t <= 2 * window; ++t) contraction &= c(t) <= 1 + 1e-12;
    if (contraction) {
      auto s = [&](const MultiIndex& n) {
        double x = 1;
        for (int q = 0; q < n[0]; ++q) x *= c(q);
        return x;
      };
      r.spherical_path = complete_monotonicity(1, window, s, tol) ? Verdict::No : Verdict::YesAtWindow;
    }
  }
  return r;
}

// ---- hyponormality

struct HyponormalityReport {
  Verdict verdict = Verdict::Inconclusive;
  int t_max = 0;
  std::vector<double> min_eig;  // per generation, normalized by max |entry|
  struct Witness {
    int generation;
    double min_eigenvalue;
    std::vector<std::pair<std::pair<int, Coords>, double>> vector;  // (axis, vertex) -> component
  };
  std::optional<Witness> witness;
  std::optional<Verdict> spherical_path;  // C_t increasing
  std::optional<int> spherical_first_decrease;
};

// G[(i,w),(j,v)] = <[S_j^*, S_i] e_v, e_w> over generation t
inline Eigen::MatrixXd hyponormality_gram(const ProductTree& p, const WeightSystem& ws, int t) {
  const auto& G = p.generation(t);
  std::map<PVertex, Eigen::Index> idx;
  for (std::size_t k = 0; k < G.size(); ++k) idx[G[k]] = static_cast<Eigen::Index>(k);
  const auto n = static_cast<Eigen::Index>(G.size());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p.d() * n, p.d() * n);
  for (int j = 0; j < p.d(); ++j)
    for (std::size_t k = 0; k < G.size(); ++k) {
      VertexFunction ev = delta(G[k]);
      VertexFunction sj = apply(ws, p, j, ev, true);
      for (int i = 0; i < p.d(); ++i) {
        VertexFunction c = difference(apply(ws, p, j, apply(ws, p, i, ev), true), apply(ws, p, i, sj));
        for (const auto& [w, x] : c) M(i * n + idx.at(w), j * n + static_cast<Eigen::Index>(k)) += x;
      }
    }
  return M;
}

inline HyponormalityReport hyponormality_classify(const ProductTree& p, const WeightSystem& ws, int t_max, double tol = 1e-8) {
  if (t_max + 1 > p.budget()) throw std::out_of_range("hyponormality: t_max + 1 exceeds budget");
  auto cc = commuting_check(ws, p, std::max(0, std::min(t_max, p.budget() - 2)));
  if (!cc.ok) throw std::invalid_argument("hyponormality requires commuting weights: " + cc.witness);
  HyponormalityReport r;
  r.t_max = t_max;
  for (int t = 0; t <= t_max; ++t) {
    Eigen::MatrixXd M = hyponormality_gram(p, ws, t);
    double scale = M.cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    double mn = es.eigenvalues()(0);
    r.min_eig.push_back(scale > 0 ? mn / scale : 0.0);
    if (mn < -tol * scale && !r.witness) {
      HyponormalityReport::Witness w{t, mn, {}};
      const auto& G = p.generation(t);
      Eigen::VectorXd x = es.eigenvectors().col(0);
      for (int i = 0; i < p.d(); ++i)
        for (std::size_t k = 0; k < G.size(); ++k) {
          double c = x(i * static_cast<Eigen::Index>(G.size()) + static_cast<Eigen::Index>(k));
          if (std::abs(c) > 1e-12) w.vector.push_back({{i, p.coords(G[k])}, c});
        }
      r.witness = w;
    }
  }
  r.verdict = r.witness ? Verdict::No : Verdict::Yes;
  auto rep = balanced_detect(ws, p, std::min(p.budget() - 1, t_max + 1));
  if (rep.spherically) {
    auto c = joint_c_sequence(ws, p);
    r.spherical_path = Verdict::Yes;
    for (int t = 0; t <= t_max; ++t)
      if (c(t + 1) < c(t) * (1 - 1e-12)) {
        r.spherical_path = Verdict::No;
        r.spherical_first_decrease = t;
        break;
      }
  }
  return r;
}

// ---- essential normality

struct EssentialRow {
  int t;
  int axis;
  double max_B_norm;  // over sibling blocks of [S_j^*, S_j] outside the unary part
  double max_A;       // |lambda_w^2 - lambda_v^2| on the unary part
};

struct EssentialScan {
  std::vector<EssentialRow> rows;
  double slope = 0;  // least-squares slope of log max_B vs log t over the fit range
  int fit_lo = 0, fit_hi = 0;
};

// block of [S_j^*, S_j] on the sib_j class of v: diag(||S_j e_u||^2) - lambda lambda^T
inline Eigen::MatrixXd commutator_block(const ProductTree& p, const WeightSystem& ws, int j, PVertex v) {
  std::vector<PVertex> cls = p.sib(j, v);
  if (cls.empty()) cls = {v};
  const auto n = static_cast<Eigen::Index>(cls.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    B(k, k) = ws.norm2(p, j, cls[static_cast<std::size_t>(k)]);
    if (p.coords(v)[j] != 0) lam(k) = ws.weight(p, j, cls[static_cast<std::size_t>(k)]);
  }
  return B - lam * lam.transpose();
}

// <[S_j^*, S_j] e_v, e_v>
inline double commutator_diag(const ProductTree& p, const WeightSystem& ws, int j, PVertex v) {
  double l = p.coords(v)[j] != 0 ? ws.weight(p, j, v) : 0.0;
  return ws.norm2(p, j, v) - l * l;
}

inline double loglog_slope(const std::vector<std::pair<double, double>>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(pts.size());
  for (auto [t, y] : pts) {
    double x = std::log(t), ly = std::log(y);
    sx += x;
    sy += ly;
    sxx += x * x;
    sxy += x * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline EssentialScan essential_normality_scan(const ProductTree& p, const WeightSystem& ws, int t_max, int fit_lo = 4) {
  if (ws.family() != WeightSystem::Family::Power) throw std::invalid_argument("essential normality scan expects power-family weights");
  if (t_max + 1 > p.budget()) throw std::out_of_range("essential normality scan: t_max + 1 exceeds budget");
  EssentialScan s;
  s.fit_lo = fit_lo;
  s.fit_hi = t_max;
  std::vector<std::vector<std::pair<double, double>>> fit(p.d());
  for (int t = 1; t <= t_max; ++t)
    for (int j = 0; j < p.d(); ++j) {
      EssentialRow row{t, j, 0, 0};
      std::set<PVertex> seen;
      for (PVertex v : p.generation(t)) {
        if (seen.count(v)) continue;
        std::vector<PVertex> cls = p.sib(j, v);
        if (cls.empty()) cls = {v};
        for (PVertex u : cls) seen.insert(u);
        const bool unary = cls.size() == 1 && p.num_chi(j, v) == 1 && p.coords(v)[j] != 0;
        if (unary) {
          row.max_A = std::max(row.max_A, std::abs(commutator_diag(p, ws, j, v)));
        } else {
          Eigen::MatrixXd B = commutator_block(p, ws, j, v);
          row.max_B_norm = std::max(row.max_B_norm, B.jacobiSvd().singularValues()(0));
        }
      }
      if (t >= fit_lo && row.max_B_norm > 0) fit[j].push_back({double(t), row.max_B_norm});
      s.rows.push_back(row);
    }
  // slope of the overall max over axes
  std::vector<std::pair<double, double>> all;
  for (int t = fit_lo; t <= t_max; ++t) {
    double m = 0;
    for (const auto& row : s.rows)
      if (row.t == t) m = std::max(m, row.max_B_norm);
    if (m > 0) all.push_back({double(t), m});
  }
  s.slope = all.size() >= 2 ? loglog_slope(all) : 0.0;
  return s;
}

// <[S_1^*, S_1] e_v, e_v> at v of depth (k, k) for k = 1..k_max
inline std::vector<std::pair<int, double>> commutator_diagonal_walk(const ProductTree& p, const WeightSystem& ws, int k_max, int axis = 0) {
  if (p.d() != 2) throw std::invalid_argument("diagonal walk expects d = 2");
  std::vector<std::pair<int, double>> out;
  for (int k = 1; k <= k_max; ++k) {
    Coords c{p.factor(0).generation_first(k), p.factor(1).generation_first(k)};
    out.push_back({k, commutator_diag(p, ws, axis, p.intern(c))});
  }
  return out;
}

// ---- von Neumann spot check

struct VonNeumannReport {
  std::string mode;
  int trials = 0, deg = 0;
  double worst_ratio = 0;  // lhs / (grid max * (1 + slack))
  double slack = 1e-3;
};

using Poly = std::vector<std::pair<MultiIndex, std::complex<double>>>;

inline std::complex<double> eval_poly(const Poly& q, const std::vector<std::complex<double>>& z) {
  std::complex<double> s = 0;
  for (const auto& [b, a] : q) {
    std::complex<double> m = a;
    for (std::size_t j = 0; j < z.size(); ++j)
      for (int k = 0; k < b[j]; ++k) m *= z[j];
    s += m;
  }
  return s;
}

// grid max of |q| on the torus (64^d) or the sphere (angle grids for d <= 2, random samples otherwise)
inline double grid_sup(const Poly& q, int d, bool spherical, std::mt19937_64& rng) {
  const int G = 64;
  const double tau = 2 * M_PI;
  double best = 0;
  if (!spherical) {
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    std::vector<std::complex<double>> z(static_cast<std::size_t>(d));
    while (true) {
      for (int j = 0; j < d; ++j) z[static_cast<std::size_t>(j)] = std::polar(1.0, tau * idx[static_cast<std::size_t>(j)] / G);
      best = std::max(best, std::abs(eval_poly(q, z)));
      int j = d - 1;
      while (j >= 0 && idx[static_cast<std::size_t>(j)] == G - 1) idx[static_cast<std::size_t>(j--)] = 0;
      if (j < 0) break;
      ++idx[static_cast<std::size_t>(j)];
    }
    return best;
  }
  if (d == 1) {
    for (int k = 0; k < G; ++k) best = std::max(best, std::abs(eval_poly(q, {std::polar(1.0, tau * k / G)})));
    return best;
  }
  if (d == 2) {
    for (int a = 0; a <= G; ++a) {
      double phi = M_PI / 2 * a / G;
      for (int b = 0; b < G; ++b)
        for (int c = 0; c < G; ++c)
          best = std::max(best, std::abs(eval_poly(q, {std::polar(std::cos(phi), tau * b / G), std::polar(std::sin(phi), tau * c / G)})));
    }
    return best;
  }
  std::normal_distribution<double> N(0, 1);
  for (int s = 0; s < 200000; ++s) {
    std::vector<std::complex<double>> z(static_cast<std::size_t>(d));
    double nn = 0;
    for (auto& x : z) {
      x = {N(rng), N(rng)};
      nn += std::norm(x);
    }
    for (auto& x : z) x /= std::sqrt(nn);
    best = std::max(best, std::abs(eval_poly(q, z)));
  }
  return best;
}

inline VonNeumannReport von_neumann_spot_check(const ProductTree& p, const WeightSystem& ws, DualMode mode, int trials, int deg, std::uint64_t seed, int v_depth = -1) {
  if (v_depth < 0) v_depth = p.budget() - deg;
  if (v_depth < 0) throw std::out_of_range("von Neumann check: budget smaller than the degree");
  const int probe = std::max(0, std::min(p.budget() - 2, v_depth + deg));
  auto cc = commuting_check(ws, p, probe);
  if (!cc.ok) throw std::invalid_argument("von Neumann check requires commuting weights: " + cc.witness);
  auto rep = balanced_detect(ws, p, std::min(p.budget() - 1, v_depth + deg));
  auto inf = invertibility_infima(ws, p, std::min(p.budget() - 1, v_depth + deg));
  if (mode == DualMode::Toral) {
    if (!rep.torally) throw std::invalid_argument("von Neumann (torus): not torally balanced (" + rep.toral_witness + ")");
    for (int j = 0; j < p.d(); ++j)
      if (inf.toral_sup[j] > 1 + 1e-12) throw std::invalid_argument("von Neumann (torus): not a toral contraction");
  } else {
    if (!rep.spherically) throw std::invalid_argument("von Neumann (ball): not spherically balanced (" + rep.spherical_witness + ")");
    if (inf.joint_sup > 1 + 1e-12) throw std::invalid_argument("von Neumann (ball): not a joint contraction");
  }
  VonNeumannReport r;
  r.mode = mode == DualMode::Toral ? "torus" : "ball";
  r.trials = trials;
  r.deg = deg;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0, 1);
  auto verts = p.vertices_upto(v_depth);
  auto idx = multi_indices_upto(p.d(), deg);
  // S^beta e_v for every v and beta, reused across trials
  std::vector<std::vector<VertexFunction>> img(verts.size());
  for (std::size_t k = 0; k < verts.size(); ++k)
    for (const auto& b : idx) img[k].push_back(apply_multi(ws, p, b, delta(verts[k])));
  for (int tr = 0; tr < trials; ++tr) {
    Poly q;
    for (const auto& b : idx) q.push_back({b, {N(rng), N(rng)}});
    double rhs = grid_sup(q, p.d(), mode == DualMode::Spherical, rng) * (1 + r.slack);
    double lhs = 0;
    for (std::size_t k = 0; k < verts.size(); ++k) {
      VertexFunction re, im;
      for (std::size_t m = 0; m < idx.size(); ++m) {
        axpy(q[m].second.real(), img[k][m], re);
        axpy(q[m].second.imag(), img[k][m], im);
      }
      lhs = std::max(lhs, std::sqrt(norm2(re) + norm2(im)));
    }
    r.worst_ratio = std::max(r.worst_ratio, lhs / rhs);
  }
  return r;
}

// telescoping identity for commuting families: 1 - sum_{|a|=n} C(|a|,a) X^a Y^a
//   = sum_{|b|<=n-1} C(|b|,b) X^b (1 - sum_i X_i Y_i) Y^b
inline double telescoping_identity_residual(const std::vector<Eigen::MatrixXd>& X, const std::vector<Eigen::MatrixXd>& Y, int n) {
  const int d = static_cast<int>(X.size());
  const auto m = X[0].rows();
  auto power = [&](const std::vector<Eigen::MatrixXd>& T, const MultiIndex& a) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(m, m);
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < a[j]; ++k) P = P * T[static_cast<std::size_t>(j)];
    return P;
  };
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd lhs = I;
  for (const auto& a : multi_indices_exact(d, n)) lhs -= multinomial(a) * power(X, a) * power(Y, a);
  Eigen::MatrixXd D = I;
  for (int i = 0; i < d; ++i) D -= X[static_cast<std::size_t>(i)] * Y[static_cast<std::size_t>(i)];
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, m);
  for (const auto& b : multi_indices_upto(d, n - 1)) rhs += multinomial(b) * power(X, b) * D * power(Y, b);
  return (lhs - rhs).norm() / std::max(1.0, lhs.norm());
}

}  // namespace mshift
