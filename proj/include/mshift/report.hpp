#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "mshift/classify.hpp"
#include "mshift/io.hpp"
#include "mshift/kernel.hpp"

namespace mshift {

struct RunOptions {
  double tol = 1e-10;
  std::uint64_t seed = 0;
  std::string csv;  // optional series output
};

// violated precondition inside an analysis; the CLI maps it to exit status 3
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json coords_json(const ProductTree& p, PVertex v) { return json(p.coords(v)); }

inline json subset_json(Subset F, int d) {
  json a = json::array();
  for (int j = 0; j < d; ++j)
    if (has_axis(F, j)) a.push_back(j + 1);
  return a;
}

inline json function_json(const ProductTree& p, const VertexFunction& f) {
  json a = json::array();
  std::vector<std::pair<Coords, double>> items;
  for (const auto& [v, x] : f) items.push_back({p.coords(v), x});
  std::sort(items.begin(), items.end(), [](const auto& x, const auto& y) { return colex_less(x.first, y.first); });
  for (const auto& [c, x] : items) a.push_back({{"vertex", c}, {"value", x}});
  return a;
}

inline json kernel_json(const ProductTree& p, const KernelBasis& kb) {
  json blocks = json::array();
  for (const auto& b : kb.blocks) {
    json basis = json::array();
    for (const auto& f : b.basis) basis.push_back(function_json(p, f));
    blocks.push_back({{"F", subset_json(b.F, p.d())}, {"u", coords_json(p, b.u)}, {"generation", b.generation}, {"dim", b.basis.size()}, {"unknowns", b.support.size()}, {"equations", b.equations}, {"basis", basis}});
  }
  json out = {{"dimE", kb.dim()}, {"blocks", blocks}, {"max_residual", kb.max_residual}, {"commuting", kb.commuting}, {"truncated", kb.truncated}, {"window", kb.window}};
  out["bounds"] = kb.bounds ? json::array({kb.bounds->first, kb.bounds->second}) : json(nullptr);
  if (kb.bounds) out["within_bounds"] = static_cast<long>(kb.dim()) >= kb.bounds->first && static_cast<long>(kb.dim()) <= kb.bounds->second;
  return out;
}

inline int param_int(const json& params, const std::string& key, int dflt) {
  if (!params.contains(key)) return dflt;
  if (!params[key].is_number_integer()) throw SpecError("$.params." + key, "expected an integer");
  return params[key].get<int>();
}

inline const WeightSystem& need_weights(const Instance& in) {
  if (!in.weights) throw SpecError("$.weights", "missing (this command needs a weight system)");
  return *in.weights;
}

inline KernelBasis kernel_for(const Instance& in, double tol, int window) {
  const ProductTree& p = *in.product;
  const WeightSystem& ws = need_weights(in);
  if (p.d() == 1) return onevar_kernel(p, ws, window);
  return joint_kernel(p, ws, tol, window);
}

inline int default_window(const ProductTree& p) { return p.certified() ? p.budget() : std::min(p.budget(), 6); }

inline json run_build(const Instance& in) {
  const ProductTree& p = *in.product;
  const int gmax = param_int(in.params, "generations", std::min(p.budget(), p.certified() ? 10 : 6));
  json factors = json::array();
  for (int j = 0; j < p.d(); ++j) {
    const RootedTree& t = p.factor(j);
    json sizes = json::array();
    for (int n = 0; n <= gmax; ++n) sizes.push_back(t.generation_size(n));
    auto k = t.branching_index(p.budget());
    factors.push_back({{"generation_sizes", sizes}, {"branching_index", k ? json(*k) : json("exceeds budget")}});
  }
  json gens = json::array();
  for (int n = 0; n <= gmax; ++n) gens.push_back(p.generation(n).size());
  auto tr = tensor_root_component(p);
  json tsizes = json::array();
  const int tmax = p.certified() ? gmax : std::min(gmax, 5);
  for (int n = 0; n <= tmax; ++n) tsizes.push_back(tr.tree->generation_size(n));
  auto tk = tr.tree->branching_index(p.budget());
  json omega = json::object();
  for (Subset F = 0; F <= p.full(); ++F) omega[subset_json(F, p.d()).dump()] = p.omega_F(F, std::min(gmax, 6)).size();
  auto jk = p.joint_branching_index();
  return {{"d", p.d()},
          {"depth_budget", p.budget()},
          {"factors", factors},
          {"generation_sizes", gens},
          {"joint_branching_index", jk ? json(*jk) : json(nullptr)},
          {"tensor_root", {{"generation_sizes", tsizes}, {"branching_index", tk ? json(*tk) : json("exceeds budget")}}},
          {"omega_counts_upto_depth_" + std::to_string(std::min(gmax, 6)), omega}};
}

inline json run_kernel(const Instance& in, const RunOptions& o) {
  auto kb = kernel_for(in, o.tol, param_int(in.params, "window", default_window(*in.product)));
  return kernel_json(*in.product, kb);
}

inline json run_moments(const Instance& in, const RunOptions&) {
  const ProductTree& p = *in.product;
  const WeightSystem& ws = need_weights(in);
  const int n = param_int(in.params, "n", 4), vd = param_int(in.params, "v_depth", 2);
  if (vd + n > p.budget()) throw std::out_of_range("moments: v_depth + n exceeds the depth budget");
  const bool closed = ws.family() == WeightSystem::Family::Power || ws.family() == WeightSystem::Family::SphericallyBalanced || ws.family() == WeightSystem::Family::TorallyBalanced;
  MomentCache cache(ws, p);
  json rows = json::array();
  double maxrel = 0;
  for (PVertex v : p.vertices_upto(vd))
    for (const auto& a : multi_indices_upto(p.d(), n)) {
      double b = cache(a, v);
      json row = {{"v", p.coords(v)}, {"alpha", a}, {"moment", b}};
      if (closed) {
        double c = moment_closed(ws, p, a, v);
        row["closed_form"] = c;
        maxrel = std::max(maxrel, std::abs(b - c) / std::abs(c));
      }
      rows.push_back(row);
    }
  json out = {{"n", n}, {"v_depth", vd}, {"moments", rows}};
  if (closed) out["closed_vs_recursion_max_relerr"] = maxrel;
  return out;
}

inline json radii_json(const RadiiEstimate& r) {
  return {{"r_est", r.r_est}, {"r_est_max_over_n", r.r_est_max_over_n}, {"m_inf_est", r.m_inf_est}, {"n_max", r.n_max}, {"k_max", r.k_max}};
}

inline void write_csv(const std::string& path, const std::string& header, const std::vector<std::vector<double>>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  f << header << '\n';
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) f << (k ? "," : "") << r[k];
    f << '\n';
  }
}

inline json run_radii(const Instance& in, const RunOptions& o) {
  const ProductTree& p = *in.product;
  auto r = radii_estimates(p, need_weights(in), param_int(in.params, "n_max", 64), param_int(in.params, "k_max", 512));
  json out = radii_json(r);
  out["sup_k"] = r.sup_k;
  out["inf_k"] = r.inf_k;
  if (!o.csv.empty()) {
    std::vector<std::vector<double>> rows;
    for (std::size_t n = 0; n < r.sup_k.size(); ++n) rows.push_back({double(n + 1), r.sup_k[n], r.inf_k[n]});
    write_csv(o.csv, "n,sup_k,inf_k", rows);
  }
  return out;
}

template <class F>
json guarded(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    return {{"verdict", "precondition-failed"}, {"reason", e.what()}};
  } catch (const std::out_of_range& e) {
    return {{"verdict", "precondition-failed"}, {"reason", e.what()}};
  }
}

inline json subnormal_json(const SubnormalityReport& s) {
  json out = {{"verdict", to_string(s.verdict)}, {"window", s.window}, {"tol", s.tol}, {"W_tilde", s.W_tilde}, {"differences_checked", s.differences_checked}};
  if (s.witness) out["witness"] = {{"v", s.witness->v}, {"alpha", s.witness->alpha}, {"beta", s.witness->beta}, {"difference", s.witness->value}};
  if (s.spherical_path) out["spherical_path"] = to_string(*s.spherical_path);
  return out;
}

inline json hyponormal_json(const HyponormalityReport& h) {
  json out = {{"verdict", to_string(h.verdict)}, {"t_max", h.t_max}, {"min_eigenvalue_normalized", h.min_eig}};
  if (h.witness) {
    json vec = json::array();
    for (const auto& [k, x] : h.witness->vector) vec.push_back({{"axis", k.first + 1}, {"vertex", k.second}, {"value", x}});
    out["witness"] = {{"generation", h.witness->generation}, {"min_eigenvalue", h.witness->min_eigenvalue}, {"vector", vec}};
  }
  if (h.spherical_path) out["spherical_path"] = to_string(*h.spherical_path);
  if (h.spherical_first_decrease) out["first_decrease_at_t"] = *h.spherical_first_decrease;
  return out;
}

inline json run_classify(const Instance& in, const RunOptions& o) {
  const ProductTree& p = *in.product;
  const WeightSystem& ws = need_weights(in);
  const int window = param_int(in.params, "window", 10);
  const int t_max = param_int(in.params, "t_max", std::min(p.budget() - 1, p.certified() ? 12 : 5));
  json out;
  auto rep = balanced_detect(ws, p, std::min(p.budget() - 1, p.certified() ? 8 : 4));
  out["balanced"] = {{"torally", rep.torally}, {"spherically", rep.spherically}};
  if (rep.spherically) out["balanced"]["C_t"] = rep.spherical_c;
  if (rep.torally) out["balanced"]["c_tj"] = rep.toral_c;
  out["subnormal"] = guarded([&] { return subnormal_json(subnormality_classify(p, ws, window)); });
  out["hyponormal"] = guarded([&] { return hyponormal_json(hyponormality_classify(p, ws, t_max)); });
  if (rep.spherically) {
    out["radii"] = guarded([&] { return radii_json(radii_estimates(p, ws, param_int(in.params, "n_max", 64), param_int(in.params, "k_max", 512))); });
    const int qd = std::min(param_int(in.params, "qn_depth", 4), p.budget() - 1);
    const int qn = std::min(param_int(in.params, "qn_n", 6), p.budget() - qd);
    out["qn_identity"] = guarded([&]() -> json {
      auto q = qn_identity_check(p, ws, qn, qd);
      return {{"n_max", qn}, {"v_depth", qd}, {"max_relerr", q.max_relerr}, {"sup_q", q.max_q}, {"sup_theta", q.max_theta}};
    });
    out["qn_identity_max_relerr"] = out["qn_identity"].value("max_relerr", json(nullptr));
  }
  if (ws.family() == WeightSystem::Family::Power && p.certified()) {
    out["essential_normality"] = guarded([&]() -> json {
      auto e = essential_normality_scan(p, ws, t_max);
      json rows = json::array();
      for (const auto& r : e.rows) rows.push_back({{"t", r.t}, {"axis", r.axis + 1}, {"max_B_norm", r.max_B_norm}, {"max_A", r.max_A}});
      return {{"rows", rows}, {"loglog_slope", e.slope}, {"fit_range", {e.fit_lo, e.fit_hi}}};
    });
  }
  if (!o.csv.empty() && rep.spherically) {
    std::vector<std::vector<double>> rows;
    for (std::size_t t = 0; t < rep.spherical_c.size(); ++t) rows.push_back({double(t), rep.spherical_c[t]});
    write_csv(o.csv, "t,C_t", rows);
  }
  return out;
}

inline json run_rkhs(const Instance& in, const RunOptions& o) {
  const ProductTree& p = *in.product;
  const WeightSystem& ws = need_weights(in);
  const int ab = param_int(in.params, "alpha_budget", 4);
  auto kb = kernel_for(in, o.tol, param_int(in.params, "window", std::min(default_window(p), p.budget() - ab)));
  auto tabs = rkhs_coeffs_power_family(p, ws, kb, ab);
  json blocks = json::array();
  double worst = 0;
  for (const auto& t : tabs) {
    json rows = json::array();
    for (const auto& e : t.entries) {
      rows.push_back({{"alpha", e.alpha}, {"coeff", e.coeff}, {"block_moment", e.moment}});
      worst = std::max(worst, std::abs(e.coeff * e.moment - 1));
    }
    blocks.push_back({{"F", subset_json(t.F, p.d())}, {"u", coords_json(p, t.u)}, {"alpha_u", t.alpha_u}, {"coefficients", rows}});
  }
  return {{"alpha_budget", ab}, {"blocks", blocks}, {"max_abs_coeff_times_moment_minus_one", worst}};
}

inline json run_shimorin(const Instance& in, const RunOptions& o) {
  const ProductTree& p = *in.product;
  const WeightSystem& ws = need_weights(in);
  const int ab = param_int(in.params, "alpha_budget", 3);
  auto kb = kernel_for(in, o.tol, default_window(p));
  auto K = kernel_condition_K(p, ws, kb, ab);
  if (!K.holds)
    throw PreconditionError("shimorin: kernel condition (K) fails: E not inside ker S_" + std::to_string(K.witnesses.front().axis + 1) + "^* (S^t)^alpha_[j] (residual " + std::to_string(K.witnesses.front().residual) + ")");
  json kc = {{"holds", K.holds}, {"max_residual", K.max_residual}, {"checked", K.checked}};
  auto sh = shimorin_kernel_coeffs(p, ws, kb, ab, 1e-9);
  json coeffs = json::array();
  for (const auto& [ab2, M] : sh.coeff) {
    json m = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
      m.push_back(row);
    }
    coeffs.push_back({{"alpha", ab2.first}, {"beta", ab2.second}, {"in_band", sh.in_band(ab2.first, ab2.second)}, {"matrix", m}});
  }
  return {{"alpha_budget", ab}, {"dimE", kb.dim()}, {"band", sh.band}, {"kernel_condition", kc}, {"max_norm_outside_band", sh.max_outside_band}, {"max_norm_inside_band", sh.max_inside_band}, {"coefficients", coeffs}};
}

inline json run_decompose2(const Instance& in) {
  const ProductTree& p = *in.product;
  const int n = param_int(in.params, "n", std::min(p.budget(), 6));
  auto s = d2_decomposition_sets(p, n);
  auto list = [&](const std::vector<PVertex>& v) {
    json a = json::array();
    for (PVertex x : v) a.push_back(p.coords(x));
    return a;
  };
  json L = json::array();
  for (const auto& [g, blk] : s.L) L.push_back({{"v", g}, {"size", blk.size()}, {"vertices", list(blk)}});
  return {{"n", n}, {"G1", s.G[0]}, {"G2", s.G[1]}, {"W1", s.W[0]}, {"W2", s.W[1]}, {"F1", list(s.F1)}, {"F2", list(s.F2)}, {"F3", list(s.F3)}, {"L", L}};
}

inline json run_wandering(const Instance& in, const RunOptions& o) {
  const ProductTree& p = *in.product;
  const WeightSystem& ws = need_weights(in);
  const int N = param_int(in.params, "N", 5);
  auto kb = kernel_for(in, o.tol, p.certified() ? p.budget() : N);
  if (!kb.commuting) throw PreconditionError("wandering: weights are not commuting (lambda^{(j)}_u lambda^{(i)}_{par_j u} = lambda^{(i)}_u lambda^{(j)}_{par_i u} fails)");
  auto r = wandering_rank_check(p, ws, kb, N, 1e-8);
  return {{"N", N}, {"expected", r.expected}, {"rank", r.rank}, {"vectors", r.vectors}, {"ok", r.ok()}, {"dimE_in_window", kb.dim()}};
}

inline json run_fixtures() {
  json a = json::array();
  for (const auto& f : fixtures()) a.push_back({{"name", f.name}, {"description", f.description}, {"spec", f.spec}});
  return a;
}

inline json run_check(const Instance& in) {
  json out = {{"ok", true}, {"d", in.product->d()}, {"depth_budget", in.product->budget()}};
  if (in.weights) out["weights"] = in.spec["weights"]["family"];
  return out;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"build", "kernel", "moments", "classify", "radii", "rkhs", "shimorin", "decompose2", "wandering", "fixtures", "check"};
  return names;
}

// one command on a resolved instance; the result goes under "result"
inline json run_command(const std::string& cmd, const Instance& in, const RunOptions& o) {
  json r;
  try {
    if (cmd == "build") r = run_build(in);
    else if (cmd == "kernel") r = run_kernel(in, o);
    else if (cmd == "moments") r = run_moments(in, o);
    else if (cmd == "classify") r = run_classify(in, o);
    else if (cmd == "radii") r = run_radii(in, o);
    else if (cmd == "rkhs") r = run_rkhs(in, o);
    else if (cmd == "shimorin") r = run_shimorin(in, o);
    else if (cmd == "decompose2") r = run_decompose2(in);
    else if (cmd == "wandering") r = run_wandering(in, o);
    else if (cmd == "check") r = run_check(in);
    else throw SpecError("command", "unknown command \"" + cmd + "\"");
  } catch (const std::invalid_argument& e) {
    throw PreconditionError(e.what());
  } catch (const std::out_of_range& e) {
    throw PreconditionError(e.what());
  }
  return {{"command", cmd}, {"spec", in.spec}, {"tol", o.tol}, {"seed", o.seed}, {"result", r}};
}

}  // namespace mshift
