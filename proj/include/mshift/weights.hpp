#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mshift/product.hpp"

namespace mshift {

// Weight system lambda^{(j)}_w, w in Chi_j(V). Axes are 0-based here.
class WeightSystem {
 public:
  enum class Family { Explicit, TorallyBalanced, SphericallyBalanced, Power, Derived };
  enum class Derivation { ToralDual, SphericalDual, ToralIsometry, SphericalIsometry };
  using CFun = std::function<double(int t, int j)>;
  using Table = std::map<std::pair<int, Coords>, double>;

  static WeightSystem power(double a) {
    if (!(a > 0)) throw std::invalid_argument("power family: a must be positive");
    WeightSystem w(Family::Power);
    w.a_ = a;
    return w;
  }

  // lambda_c, c(t,j) = ||S_j e_v||^2 on generation t
  static WeightSystem torally_balanced(CFun c, std::string description) {
    WeightSystem w(Family::TorallyBalanced);
    w.c_ = std::move(c);
    w.descr_ = std::move(description);
    return w;
  }

  // c(t,j) = scale_j (t+b)/(t+a); satisfies c(t,i)c(t-1,j) = c(t,j)c(t-1,i)
  static WeightSystem torally_balanced_ratio(std::vector<double> scale, double a, double b) {
    for (double s : scale)
      if (!(s > 0)) throw std::invalid_argument("torally balanced: scales must be positive");
    if (!(a > 0) || !(b > 0)) throw std::invalid_argument("torally balanced: a, b must be positive");
    auto c = [scale, a, b](int t, int j) { return scale.at(j) * (t + b) / (t + a); };
    WeightSystem w = torally_balanced(c, "ratio");
    w.ratio_ = {scale, a, b};
    return w;
  }

  static WeightSystem torally_balanced_table(std::vector<std::vector<double>> table) {
    for (const auto& row : table)
      for (double x : row)
        if (!(x > 0)) throw std::invalid_argument("torally balanced: table entries must be positive");
    auto c = [table](int t, int j) {
      if (t < 0 || t >= static_cast<int>(table.size())) throw std::out_of_range("torally balanced: c table too short for generation " + std::to_string(t));
      return table[t].at(j);
    };
    WeightSystem w = torally_balanced(c, "table");
    w.table_ = std::move(table);
    return w;
  }

  // lambda_C with sequence c_t
  static WeightSystem spherically_balanced(std::vector<double> c) {
    for (double x : c)
      if (!(x > 0)) throw std::invalid_argument("spherically balanced: c_t must be positive");
    WeightSystem w(Family::SphericallyBalanced);
    w.seq_ = std::move(c);
    return w;
  }

  static WeightSystem explicit_weights(Table entries) {
    for (const auto& [k, x] : entries)
      if (!(x > 0)) throw std::invalid_argument("explicit weight at axis " + std::to_string(k.first + 1) + " vertex " + coords_str(k.second) + " must be positive");
    WeightSystem w(Family::Explicit);
    w.table_entries_ = std::move(entries);
    return w;
  }

  static WeightSystem derived(std::shared_ptr<const WeightSystem> base, Derivation how) {
    WeightSystem w(Family::Derived);
    w.base_ = std::move(base);
    w.how_ = how;
    return w;
  }

  Family family() const { return family_; }
  double a() const { return a_; }
  const std::vector<double>& sequence() const { return seq_; }
  const Table& entries() const { return table_entries_; }
  const std::string& description() const { return descr_; }
  const std::vector<std::vector<double>>& c_table() const { return table_; }
  struct Ratio {
    std::vector<double> scale;
    double a = 0, b = 0;
  };
  const Ratio& ratio() const { return ratio_; }
  double c(int t, int j) const { return c_(t, j); }
  double seq(int t) const {
    if (t < 0 || t >= static_cast<int>(seq_.size())) throw std::out_of_range("spherically balanced: c_t sequence too short for generation " + std::to_string(t));
    return seq_[t];
  }
  const WeightSystem* base() const { return base_.get(); }
  Derivation derivation() const { return how_; }

  double weight(const ProductTree& p, int j, PVertex w) const {
    auto pv = p.par(j, w);
    if (!pv) throw std::invalid_argument("no parent on axis " + std::to_string(j + 1) + " for vertex " + coords_str(p.coords(w)));
    const PVertex v = *pv;
    const MultiIndex& av = p.depth(v);
    const int t = total(av);
    switch (family_) {
      case Family::Power: {
        const double card = static_cast<double>(p.num_chi(j, v));
        return std::sqrt((av[j] + 1.0) / (t + a_)) / std::sqrt(card);
      }
      case Family::SphericallyBalanced: {
        const double card = static_cast<double>(p.num_chi(j, v));
        return std::sqrt(seq(t) / card) * std::sqrt((av[j] + 1.0) / (t + p.d()));
      }
      case Family::TorallyBalanced: {
        const double card = static_cast<double>(p.num_chi(j, v));
        return std::sqrt(c_(t, j) / card);
      }
      case Family::Explicit: {
        auto it = table_entries_.find({j, p.coords(w)});
        if (it == table_entries_.end()) throw std::out_of_range("explicit weights: no entry for axis " + std::to_string(j + 1) + " vertex " + coords_str(p.coords(w)));
        return it->second;
      }
      case Family::Derived: {
        const double lam = base_->weight(p, j, w);
        switch (how_) {
          case Derivation::ToralDual: return lam / base_->norm2(p, j, v);
          case Derivation::SphericalDual: return lam / base_->joint_norm2(p, v);
          case Derivation::ToralIsometry: return lam / std::sqrt(base_->norm2(p, j, v));
          case Derivation::SphericalIsometry: return lam / std::sqrt(base_->joint_norm2(p, v));
        }
      }
    }
    throw std::logic_error("unknown weight family");
  }

  // ||S_j e_v||^2
  double norm2(const ProductTree& p, int j, PVertex v) const {
    double s = 0;
    for (PVertex w : p.chi(j, v)) {
      double x = weight(p, j, w);
      s += x * x;
    }
    return s;
  }

  // sum_j ||S_j e_v||^2
  double joint_norm2(const ProductTree& p, PVertex v) const {
    double s = 0;
    for (int j = 0; j < p.d(); ++j) s += norm2(p, j, v);
    return s;
  }

 private:
  explicit WeightSystem(Family f) : family_(f) {}

  Family family_;
  double a_ = 0;
  CFun c_;
  std::string descr_;
  Ratio ratio_;
  std::vector<std::vector<double>> table_;
  std::vector<double> seq_;
  Table table_entries_;
  std::shared_ptr<const WeightSystem> base_;
  Derivation how_ = Derivation::ToralDual;
};

// iid weights in [lo,hi] on every w in Chi_j(V) with total depth <= n; not commuting in general
inline WeightSystem random_weights(const ProductTree& p, int n, std::uint64_t seed, double lo = 0.5, double hi = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  WeightSystem::Table t;
  for (PVertex w : p.vertices_upto(n))
    for (int j = 0; j < p.d(); ++j)
      if (p.coords(w)[j] != 0) t[{j, p.coords(w)}] = U(rng);
  return WeightSystem::explicit_weights(std::move(t));
}

// lambda^{(j)}_w = g(w)/g(par_j w) for a random positive potential g; always commuting
inline WeightSystem random_commuting_weights(const ProductTree& p, int n, std::uint64_t seed, double lo = 0.5, double hi = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  std::map<PVertex, double> g;
  for (PVertex v : p.vertices_upto(n)) g[v] = U(rng);
  WeightSystem::Table t;
  for (PVertex w : p.vertices_upto(n))
    for (int j = 0; j < p.d(); ++j)
      if (auto pw = p.par(j, w)) t[{j, p.coords(w)}] = g[w] / g[*pw];
  return WeightSystem::explicit_weights(std::move(t));
}

// weights depending only on the axis-j coordinate of w; doubly commuting
inline WeightSystem random_separable_weights(const ProductTree& p, int n, std::uint64_t seed, double lo = 0.5, double hi = 1.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  std::map<std::pair<int, VertexId>, double> axis;
  WeightSystem::Table t;
  for (PVertex w : p.vertices_upto(n))
    for (int j = 0; j < p.d(); ++j) {
      VertexId x = p.coords(w)[j];
      if (x == 0) continue;
      auto key = std::make_pair(j, x);
      if (!axis.count(key)) axis[key] = U(rng);
      t[{j, p.coords(w)}] = axis[key];
    }
  return WeightSystem::explicit_weights(std::move(t));
}

// materialize any weight system into an explicit table over total depth <= n
inline WeightSystem to_explicit(const WeightSystem& ws, const ProductTree& p, int n) {
  WeightSystem::Table t;
  for (PVertex w : p.vertices_upto(n))
    for (int j = 0; j < p.d(); ++j)
      if (p.coords(w)[j] != 0) t[{j, p.coords(w)}] = ws.weight(p, j, w);
  return WeightSystem::explicit_weights(std::move(t));
}

}  // namespace mshift
