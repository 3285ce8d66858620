#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mshift/product.hpp"
#include "mshift/weights.hpp"

namespace mshift {

using VertexFunction = std::map<PVertex, double>;

inline bool rel_close(double a, double b, double tol) {
  const double s = std::max({std::abs(a), std::abs(b), std::numeric_limits<double>::min()});
  return std::abs(a - b) <= tol * s;
}

inline double norm2(const VertexFunction& f) {
  double s = 0;
  for (const auto& [v, x] : f) s += x * x;
  return s;
}

inline double inner(const VertexFunction& f, const VertexFunction& g) {
  double s = 0;
  for (const auto& [v, x] : f)
    if (auto it = g.find(v); it != g.end()) s += x * it->second;
  return s;
}

inline VertexFunction delta(PVertex v) { return {{v, 1.0}}; }

inline void axpy(double a, const VertexFunction& x, VertexFunction& y) {
  for (const auto& [v, c] : x) y[v] += a * c;
}

inline VertexFunction difference(const VertexFunction& f, const VertexFunction& g) {
  VertexFunction out = f;
  axpy(-1.0, g, out);
  return out;
}

// S_j f or S_j^* f
inline VertexFunction apply(const WeightSystem& ws, const ProductTree& p, int j, const VertexFunction& f, bool adjoint = false) {
  VertexFunction out;
  for (const auto& [v, c] : f) {
    if (c == 0) continue;
    if (!adjoint) {
      for (PVertex w : p.chi(j, v)) out[w] += c * ws.weight(p, j, w);
    } else if (auto pv = p.par(j, v)) {
      out[*pv] += c * ws.weight(p, j, v);
    }
  }
  return out;
}

// S^alpha f = S_1^{a_1} ... S_d^{a_d} f (axis d applied first)
inline VertexFunction apply_multi(const WeightSystem& ws, const ProductTree& p, const MultiIndex& a, VertexFunction f) {
  for (int j = p.d() - 1; j >= 0; --j)
    for (int k = 0; k < a[j]; ++k) f = apply(ws, p, j, f);
  return f;
}

// S^{*alpha} f = (S^alpha)^* f: axis 1 adjoints first
inline VertexFunction apply_multi_adjoint(const WeightSystem& ws, const ProductTree& p, const MultiIndex& a, VertexFunction f) {
  for (int j = 0; j < p.d(); ++j)
    for (int k = 0; k < a[j]; ++k) f = apply(ws, p, j, f, true);
  return f;
}

// beta(j,w,n) = lambda^{(j)}_w lambda^{(j)}_{par_j w} ... (n factors)
inline double beta(const WeightSystem& ws, const ProductTree& p, int j, PVertex w, int n) {
  double b = 1;
  for (int k = 0; k < n; ++k) {
    b *= ws.weight(p, j, w);
    w = *p.par(j, w);
  }
  return b;
}

struct CheckResult {
  bool ok = true;
  std::string witness;
  double max_rel = 0;
  std::size_t checked = 0;
};

// lambda^{(j)}_u lambda^{(i)}_{par_j u} = lambda^{(i)}_u lambda^{(j)}_{par_i u}, u in Chi_j Chi_i(v)
inline CheckResult commuting_check_at(const WeightSystem& ws, const ProductTree& p, PVertex v, double tol, CheckResult r = {}) {
  for (int i = 0; i < p.d(); ++i)
    for (int j = i + 1; j < p.d(); ++j)
      for (PVertex x : p.chi(i, v))
        for (PVertex u : p.chi(j, x)) {
          double lhs = ws.weight(p, j, u) * ws.weight(p, i, *p.par(j, u));
          double rhs = ws.weight(p, i, u) * ws.weight(p, j, *p.par(i, u));
          double rel = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
          ++r.checked;
          r.max_rel = std::max(r.max_rel, rel);
          if (rel > tol && r.ok) {
            r.ok = false;
            std::ostringstream os;
            os << "commuting identity fails at u=" << coords_str(p.coords(u)) << " axes (" << i + 1 << "," << j + 1 << "): " << lhs << " vs " << rhs;
            r.witness = os.str();
          }
        }
  return r;
}

inline CheckResult commuting_check(const WeightSystem& ws, const ProductTree& p, int depth, double tol = 1e-9) {
  if (depth + 2 > p.budget()) throw std::out_of_range("commuting_check: depth+2 exceeds budget");
  CheckResult r;
  for (PVertex v : p.vertices_upto(depth)) r = commuting_check_at(ws, p, v, tol, r);
  return r;
}

// commuting on the descendants of v reached in at most `steps` moves
inline CheckResult commuting_check_below(const WeightSystem& ws, const ProductTree& p, PVertex v, int steps, double tol = 1e-9) {
  CheckResult r;
  std::vector<PVertex> cur{v};
  std::set<PVertex> seen{v};
  for (int s = 0; s + 2 <= steps; ++s) {
    std::vector<PVertex> nxt;
    for (PVertex x : cur) {
      r = commuting_check_at(ws, p, x, tol, r);
      for (PVertex y : p.chi_all(x))
        if (seen.insert(y).second) nxt.push_back(y);
    }
    cur.swap(nxt);
  }
  return r;
}

// S_j^* S_i = S_i S_j^* for i != j, in addition to commuting
inline CheckResult doubly_commuting_check(const WeightSystem& ws, const ProductTree& p, int depth, double tol = 1e-9) {
  CheckResult r = commuting_check(ws, p, depth, tol);
  for (PVertex v : p.vertices_upto(depth))
    for (int j = 0; j < p.d(); ++j) {
      if (p.coords(v)[j] == 0) continue;
      for (int i = 0; i < p.d(); ++i) {
        if (i == j) continue;
        for (PVertex u : p.chi(i, v)) {
          double lhs = ws.weight(p, j, v) * ws.weight(p, i, *p.par(j, u));
          double rhs = ws.weight(p, i, u) * ws.weight(p, j, u);
          double rel = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
          ++r.checked;
          r.max_rel = std::max(r.max_rel, rel);
          if (rel > tol && r.ok) {
            r.ok = false;
            std::ostringstream os;
            os << "doubly commuting identity fails at v=" << coords_str(p.coords(v)) << " u=" << coords_str(p.coords(u)) << " (i,j)=(" << i + 1 << "," << j + 1 << "): " << lhs << " vs " << rhs;
            r.witness = os.str();
          }
        }
      }
    }
  return r;
}

// S^alpha e_v via the beta-product formula
inline VertexFunction power_apply(const WeightSystem& ws, const ProductTree& p, const MultiIndex& a, PVertex v, bool check = true) {
  if (check) {
    auto c = commuting_check_below(ws, p, v, total(a));
    if (!c.ok) throw std::invalid_argument("power_apply requires commuting weights: " + c.witness);
  }
  VertexFunction out;
  for (PVertex w : p.chi_multi(a, v)) {
    double coef = 1;
    PVertex x = w;
    for (int j = 0; j < p.d(); ++j) {
      coef *= beta(ws, p, j, x, a[j]);
      MultiIndex step(p.d(), 0);
      step[j] = a[j];
      x = p.par_multi(step, x);
    }
    out[w] = coef;
  }
  return out;
}

// ||S^alpha e_v||^2 by iterated application
inline double moment_brute(const WeightSystem& ws, const ProductTree& p, const MultiIndex& a, PVertex v) {
  return norm2(apply_multi(ws, p, a, delta(v)));
}

// memoized ||S^alpha e_v||^2 = sum_{w in Chi_j(v)} lambda_w^2 ||S^{alpha-e_j} e_w||^2
class MomentCache {
 public:
  MomentCache(const WeightSystem& ws, const ProductTree& p) : ws_(ws), p_(p) {}
  double operator()(const MultiIndex& a, PVertex v) {
    int j = 0;
    while (j < p_.d() && a[j] == 0) ++j;
    if (j == p_.d()) return 1.0;
    auto key = std::make_pair(v, a);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    MultiIndex b = a;
    --b[j];
    double s = 0;
    for (PVertex w : p_.chi(j, v)) {
      double l = ws_.weight(p_, j, w);
      s += l * l * (*this)(b, w);
    }
    memo_.emplace(key, s);
    return s;
  }

 private:
  const WeightSystem& ws_;
  const ProductTree& p_;
  std::map<std::pair<PVertex, MultiIndex>, double> memo_;
};

inline double log_factorial(int n) { return std::lgamma(n + 1.0); }

// closed forms for the balanced families
inline double moment_closed(const WeightSystem& ws, const ProductTree& p, const MultiIndex& a, PVertex v) {
  const MultiIndex& av = p.depth(v);
  const int t = total(av), n = total(a), d = p.d();
  switch (ws.family()) {
    case WeightSystem::Family::Power:
    case WeightSystem::Family::SphericallyBalanced: {
      const double s = ws.family() == WeightSystem::Family::Power ? ws.a() : d;
      double lg = 0;
      for (int j = 0; j < d; ++j) lg += log_factorial(av[j] + a[j]) - log_factorial(av[j]);
      lg -= std::lgamma(t + s + n) - std::lgamma(t + s);
      if (n <= 30) {
        double x = 1;
        for (int j = 0; j < d; ++j)
          for (int k = 1; k <= a[j]; ++k) x *= av[j] + k;
        for (int k = 0; k < n; ++k) x /= t + s + k;
        if (ws.family() == WeightSystem::Family::SphericallyBalanced)
          for (int k = 0; k < n; ++k) x *= ws.seq(t + k);
        return x;
      }
      if (ws.family() == WeightSystem::Family::SphericallyBalanced)
        for (int k = 0; k < n; ++k) lg += std::log(ws.seq(t + k));
      return std::exp(lg);
    }
    case WeightSystem::Family::TorallyBalanced: {
      // S^alpha applies axis d first; each step multiplies by c(generation, axis)
      double lg = 0, x = 1;
      int g = t;
      for (int j = d - 1; j >= 0; --j)
        for (int k = 0; k < a[j]; ++k, ++g) {
          double c = ws.c(g, j);
          if (n <= 30) x *= c;
          else lg += std::log(c);
        }
      return n <= 30 ? x : std::exp(lg);
    }
    default:
      throw std::invalid_argument("moment_closed: no closed form for this weight family");
  }
}

struct Infima {
  std::vector<double> toral;  // per axis inf ||S_j e_v||^2
  std::vector<double> toral_sup;
  double joint = 0, joint_sup = 0;
  bool toral_left_invertible() const {
    for (double x : toral)
      if (!(x > 0)) return false;
    return true;
  }
  bool joint_left_invertible() const { return joint > 0; }
};

inline Infima invertibility_infima(const WeightSystem& ws, const ProductTree& p, int depth) {
  Infima r;
  r.toral.assign(p.d(), std::numeric_limits<double>::infinity());
  r.toral_sup.assign(p.d(), 0);
  r.joint = std::numeric_limits<double>::infinity();
  for (PVertex v : p.vertices_upto(depth)) {
    double s = 0;
    for (int j = 0; j < p.d(); ++j) {
      double x = ws.norm2(p, j, v);
      r.toral[j] = std::min(r.toral[j], x);
      r.toral_sup[j] = std::max(r.toral_sup[j], x);
      s += x;
    }
    r.joint = std::min(r.joint, s);
    r.joint_sup = std::max(r.joint_sup, s);
  }
  return r;
}

enum class DualMode { Toral, Spherical };

inline WeightSystem cauchy_dual(const WeightSystem& ws, const ProductTree& p, DualMode mode, int depth) {
  auto inf = invertibility_infima(ws, p, depth);
  if (mode == DualMode::Toral && !inf.toral_left_invertible()) throw std::invalid_argument("toral Cauchy dual: not toral left invertible");
  if (mode == DualMode::Spherical && !inf.joint_left_invertible()) throw std::invalid_argument("spherical Cauchy dual: not joint left invertible");
  auto base = std::make_shared<const WeightSystem>(ws);
  return WeightSystem::derived(base, mode == DualMode::Toral ? WeightSystem::Derivation::ToralDual : WeightSystem::Derivation::SphericalDual);
}

struct BalancedReport {
  bool torally = true, spherically = true;
  std::vector<std::vector<double>> toral_c;  // [t][j]
  std::vector<double> spherical_c;           // [t]
  std::string toral_witness, spherical_witness;
};

// constancy of ||S_j e_v||^2 and sum_j ||S_j e_v||^2 on each generation t <= depth
inline BalancedReport balanced_detect(const WeightSystem& ws, const ProductTree& p, int depth, double tol = 1e-9) {
  if (depth + 1 > p.budget()) throw std::out_of_range("balanced_detect: depth+1 exceeds budget");
  BalancedReport r;
  for (int t = 0; t <= depth; ++t) {
    const auto& G = p.generation(t);
    std::vector<double> c0(p.d());
    double s0 = 0;
    for (int j = 0; j < p.d(); ++j) {
      c0[j] = ws.norm2(p, j, G.front());
      s0 += c0[j];
    }
    for (PVertex v : G) {
      double s = 0;
      for (int j = 0; j < p.d(); ++j) {
        double x = ws.norm2(p, j, v);
        s += x;
        if (r.torally && !rel_close(x, c0[j], tol)) {
          r.torally = false;
          r.toral_witness = "||S_" + std::to_string(j + 1) + " e_v||^2 not constant on generation " + std::to_string(t) + " at " + coords_str(p.coords(v));
        }
      }
      if (r.spherically && !rel_close(s, s0, tol)) {
        r.spherically = false;
        r.spherical_witness = "C(v) not constant on generation " + std::to_string(t) + " at " + coords_str(p.coords(v));
      }
    }
    r.toral_c.push_back(c0);
    r.spherical_c.push_back(s0);
  }
  if (!r.torally) r.toral_c.clear();
  if (!r.spherically) r.spherical_c.clear();
  return r;
}

struct PolarDecomposition {
  WeightSystem isometry;
  // toral: diag[v][j] = ||S_j e_v||; spherical: diag[v][0] = sqrt(C(v))
  std::map<PVertex, std::vector<double>> diag;
};

inline PolarDecomposition polar_decompose(const WeightSystem& ws, const ProductTree& p, DualMode mode, int depth, double tol = 1e-9) {
  if (depth + 3 > p.budget()) throw std::out_of_range("polar_decompose: depth+3 exceeds budget");
  auto inf = invertibility_infima(ws, p, depth);
  auto base = std::make_shared<const WeightSystem>(ws);
  PolarDecomposition out{WeightSystem::derived(base, mode == DualMode::Toral ? WeightSystem::Derivation::ToralIsometry : WeightSystem::Derivation::SphericalIsometry), {}};
  if (mode == DualMode::Toral) {
    if (!inf.toral_left_invertible()) throw std::invalid_argument("toral polar decomposition: not toral left invertible");
    // ||S_j e_{par_j v}|| ||S_i e_{par_i par_j v}|| = ||S_i e_{par_i v}|| ||S_j e_{par_j par_i v}||
    for (PVertex v : p.vertices_upto(depth + 2))
      for (int i = 0; i < p.d(); ++i)
        for (int j = i + 1; j < p.d(); ++j) {
          auto pj = p.par(j, v), pi = p.par(i, v);
          if (!pj || !pi) continue;
          double lhs = std::sqrt(ws.norm2(p, j, *pj) * ws.norm2(p, i, *p.par(i, *pj)));
          double rhs = std::sqrt(ws.norm2(p, i, *pi) * ws.norm2(p, j, *p.par(j, *pi)));
          if (!rel_close(lhs, rhs, tol))
            throw std::invalid_argument("toral polar decomposition: t-commuting identity ||S_j e_{par_j v}|| ||S_i e_{par_i par_j v}|| = ||S_i e_{par_i v}|| ||S_j e_{par_j par_i v}|| fails at v=" + coords_str(p.coords(v)));
        }
    for (PVertex v : p.vertices_upto(depth)) {
      std::vector<double> dv;
      for (int j = 0; j < p.d(); ++j) dv.push_back(std::sqrt(ws.norm2(p, j, v)));
      out.diag[v] = dv;
    }
  } else {
    if (!inf.joint_left_invertible()) throw std::invalid_argument("spherical polar decomposition: not joint left invertible");
    // C(par_i u) = C(par_j u) for u in Chi_i Chi_j(v)
    for (PVertex v : p.vertices_upto(depth))
      for (int i = 0; i < p.d(); ++i)
        for (int j = i + 1; j < p.d(); ++j)
          for (PVertex x : p.chi(j, v))
            for (PVertex u : p.chi(i, x)) {
              double a = ws.joint_norm2(p, *p.par(i, u)), b = ws.joint_norm2(p, *p.par(j, u));
              if (!rel_close(a, b, tol))
                throw std::invalid_argument("spherical polar decomposition: C(par_i u) = C(par_j u) fails at u=" + coords_str(p.coords(u)));
            }
    for (PVertex v : p.vertices_upto(depth)) out.diag[v] = {std::sqrt(ws.joint_norm2(p, v))};
  }
  return out;
}

// sum over w in Chi^<alpha>(v) of prod 1/card(sib_j(par_j^l par_{j-1}^{a_{j-1}} ... par_1^{a_1} w)); equals 1
inline double normalization_sum(const ProductTree& p, const MultiIndex& a, PVertex v) {
  double s = 0;
  for (PVertex w : p.chi_multi(a, v)) {
    double prod = 1;
    PVertex x = w;
    for (int j = 0; j < p.d(); ++j)
      for (int l = 0; l < a[j]; ++l) {
        prod /= static_cast<double>(p.sib(j, x).size());
        x = *p.par(j, x);
      }
    s += prod;
  }
  return s;
}

}  // namespace mshift
