#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mshift/product.hpp"
#include "mshift/weights.hpp"

namespace mshift {

using json = nlohmann::json;

// malformed descriptor; `path` is a JSON-pointer-like location
class SpecError : public std::runtime_error {
 public:
  SpecError(std::string path, const std::string& msg) : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

namespace detail {

inline const json& need(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw SpecError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SpecError(path + "." + key, "missing");
  return *it;
}

inline long need_int(const json& j, const std::string& key, const std::string& path, long lo) {
  const json& x = need(j, key, path);
  if (!x.is_number_integer()) throw SpecError(path + "." + key, "expected an integer");
  long v = x.get<long>();
  if (v < lo) throw SpecError(path + "." + key, "must be >= " + std::to_string(lo));
  return v;
}

inline double need_pos(const json& j, const std::string& key, const std::string& path) {
  const json& x = need(j, key, path);
  if (!x.is_number()) throw SpecError(path + "." + key, "expected a number");
  double v = x.get<double>();
  if (!(v > 0)) throw SpecError(path + "." + key, "must be positive");
  return v;
}

inline std::vector<double> pos_array(const json& x, const std::string& path) {
  if (!x.is_array() || x.empty()) throw SpecError(path, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x[i].is_number()) throw SpecError(path + "[" + std::to_string(i) + "]", "expected a number");
    double v = x[i].get<double>();
    if (!(v > 0)) throw SpecError(path + "[" + std::to_string(i) + "]", "must be positive");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

inline RootedTree parse_tree(const json& j, const std::string& path) {
  using namespace detail;
  const json& kind = need(j, "kind", path);
  if (!kind.is_string()) throw SpecError(path + ".kind", "expected a string");
  const std::string k = kind.get<std::string>();
  if (k == "tnk") return RootedTree::tnk(static_cast<int>(need_int(j, "n0", path, 1)), static_cast<int>(need_int(j, "k0", path, 0)));
  if (k == "nary") return RootedTree::nary(static_cast<int>(need_int(j, "n", path, 1)));
  if (k == "explicit") {
    if (j.contains("tail") && j["tail"] != "unary") throw SpecError(path + ".tail", "only \"unary\" is supported");
    const json& ch = need(j, "children", path);
    if (!ch.is_object()) throw SpecError(path + ".children", "expected an object mapping vertex ids to child lists");
    std::map<VertexId, std::vector<VertexId>> m;
    for (auto it = ch.begin(); it != ch.end(); ++it) {
      const std::string p = path + ".children." + it.key();
      std::size_t pos = 0;
      long id = -1;
      try {
        id = std::stol(it.key(), &pos);
      } catch (const std::exception&) {
      }
      if (id < 0 || pos != it.key().size()) throw SpecError(p, "vertex id must be a nonnegative integer");
      if (!it->is_array()) throw SpecError(p, "expected an array of child ids");
      std::vector<VertexId> kids;
      for (const auto& c : *it) {
        if (!c.is_number_integer() || c.get<long>() < 0) throw SpecError(p, "child ids must be nonnegative integers");
        kids.push_back(c.get<VertexId>());
      }
      m[static_cast<VertexId>(id)] = kids;
    }
    try {
      return RootedTree::explicit_prefix(m);
    } catch (const std::invalid_argument& e) {
      throw SpecError(path, e.what());
    }
  }
  throw SpecError(path + ".kind", "unknown tree kind \"" + k + "\" (expected tnk, explicit or nary)");
}

inline ProductTree parse_product(const json& j, const std::string& path, std::optional<int> budget_override = std::nullopt) {
  using namespace detail;
  const json& f = need(j, "factors", path);
  if (!f.is_array() || f.empty()) throw SpecError(path + ".factors", "expected a nonempty array of tree descriptors");
  std::vector<std::shared_ptr<const RootedTree>> trees;
  for (std::size_t i = 0; i < f.size(); ++i) trees.push_back(share(parse_tree(f[i], path + ".factors[" + std::to_string(i) + "]")));
  int budget = budget_override ? *budget_override : static_cast<int>(need_int(j, "depth_budget", path, 0));
  if (budget < 0) throw SpecError("--budget", "must be nonnegative");
  return ProductTree(std::move(trees), budget);
}

inline WeightSystem parse_weights(const json& j, const std::string& path, const ProductTree& p) {
  using namespace detail;
  const json& fam = need(j, "family", path);
  if (!fam.is_string()) throw SpecError(path + ".family", "expected a string");
  const std::string f = fam.get<std::string>();
  if (f == "power") return WeightSystem::power(need_pos(j, "a", path));
  if (f == "spherically_balanced") return WeightSystem::spherically_balanced(pos_array(need(j, "c", path), path + ".c"));
  if (f == "torally_balanced") {
    const json& c = need(j, "c", path);
    if (c.is_string()) {
      if (c == "isometry") return WeightSystem::torally_balanced_ratio(std::vector<double>(static_cast<std::size_t>(p.d()), 1.0), 1, 1);
      throw SpecError(path + ".c", "unknown formula id \"" + c.get<std::string>() + "\" (expected \"isometry\", a ratio object or a table)");
    }
    if (c.is_object()) {
      const std::string cp = path + ".c";
      const json& form = need(c, "formula", cp);
      if (form != "ratio") throw SpecError(cp + ".formula", "only \"ratio\" is supported");
      auto scale = pos_array(need(c, "scale", cp), cp + ".scale");
      if (static_cast<int>(scale.size()) != p.d()) throw SpecError(cp + ".scale", "needs one entry per factor");
      return WeightSystem::torally_balanced_ratio(scale, need_pos(c, "a", cp), need_pos(c, "b", cp));
    }
    if (c.is_array()) {
      std::vector<std::vector<double>> table;
      for (std::size_t t = 0; t < c.size(); ++t) {
        auto row = pos_array(c[t], path + ".c[" + std::to_string(t) + "]");
        if (static_cast<int>(row.size()) != p.d()) throw SpecError(path + ".c[" + std::to_string(t) + "]", "needs one entry per factor");
        table.push_back(row);
      }
      // c(t,i)c(t-1,j) = c(t,j)c(t-1,i)
      for (std::size_t t = 1; t < table.size(); ++t)
        for (int i = 0; i < p.d(); ++i)
          for (int k = 0; k < p.d(); ++k) {
            double l = table[t][i] * table[t - 1][k], r = table[t][k] * table[t - 1][i];
            if (std::abs(l - r) > 1e-12 * std::max(l, r)) throw SpecError(path + ".c[" + std::to_string(t) + "]", "violates c(t,i)c(t-1,j) = c(t,j)c(t-1,i)");
          }
      return WeightSystem::torally_balanced_table(table);
    }
    throw SpecError(path + ".c", "expected a formula id, a ratio object or a table");
  }
  if (f == "explicit") {
    const json& e = need(j, "entries", path);
    if (!e.is_array()) throw SpecError(path + ".entries", "expected an array");
    WeightSystem::Table t;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const std::string ep = path + ".entries[" + std::to_string(i) + "]";
      long axis = need_int(e[i], "axis", ep, 1);
      if (axis > p.d()) throw SpecError(ep + ".axis", "axis out of range (1.." + std::to_string(p.d()) + ")");
      const json& v = need(e[i], "vertex", ep);
      if (!v.is_array() || static_cast<int>(v.size()) != p.d()) throw SpecError(ep + ".vertex", "expected a coordinate tuple of length " + std::to_string(p.d()));
      Coords c;
      for (const auto& x : v) {
        if (!x.is_number_integer() || x.get<long>() < 0) throw SpecError(ep + ".vertex", "coordinates must be nonnegative integers");
        c.push_back(x.get<VertexId>());
      }
      if (c[static_cast<std::size_t>(axis - 1)] == 0) throw SpecError(ep, "no parent on axis " + std::to_string(axis) + " for a root coordinate");
      t[{static_cast<int>(axis - 1), c}] = need_pos(e[i], "value", ep);
    }
    return WeightSystem::explicit_weights(std::move(t));
  }
  if (f == "random") {
    const std::string mode = j.value("mode", std::string("commuting"));
    const auto seed = static_cast<std::uint64_t>(need_int(j, "seed", path, 0));
    const int depth = j.contains("depth") ? static_cast<int>(need_int(j, "depth", path, 0)) : p.budget();
    if (depth > p.budget()) throw SpecError(path + ".depth", "exceeds the depth budget");
    if (mode == "commuting") return random_commuting_weights(p, depth, seed);
    if (mode == "generic") return random_weights(p, depth, seed);
    if (mode == "separable") return random_separable_weights(p, depth, seed);
    throw SpecError(path + ".mode", "expected commuting, generic or separable");
  }
  throw SpecError(path + ".family", "unknown weight family \"" + f + "\"");
}

struct Fixture {
  std::string name;
  std::string description;
  json spec;
};

inline json tnk_json(int n0, int k0) { return {{"kind", "tnk"}, {"n0", n0}, {"k0", k0}}; }

inline std::vector<Fixture> fixtures() {
  auto prod = [](std::vector<json> f, int budget) { return json{{"factors", f}, {"depth_budget", budget}}; };
  auto power = [](double a) { return json{{"family", "power"}, {"a", a}}; };
  std::vector<Fixture> out;
  out.push_back({"classical_cauchy_d2", "Cauchy 2-shift: T_{1,0}^2 with all weights 1", {{"product", prod({tnk_json(1, 0), tnk_json(1, 0)}, 12)}, {"weights", {{"family", "torally_balanced"}, {"c", "isometry"}}}}});
  out.push_back({"mixed_2x1", "T_{2,0} x T_{1,0}, power family a=2", {{"product", prod({tnk_json(2, 0), tnk_json(1, 0)}, 12)}, {"weights", power(2)}}});
  out.push_back({"product_2x2", "T_{2,0}^2, power family a=2", {{"product", prod({tnk_json(2, 0), tnk_json(2, 0)}, 12)}, {"weights", power(2)}}});
  out.push_back({"product_2x2_random", "T_{2,0}^2, random commuting weights (seed 7)", {{"product", prod({tnk_json(2, 0), tnk_json(2, 0)}, 10)}, {"weights", {{"family", "random"}, {"mode", "commuting"}, {"seed", 7}}}}});
  out.push_back({"product_2x2_generic", "T_{2,0}^2, random non-commuting weights (seed 7); dim E = 3", {{"product", prod({tnk_json(2, 0), tnk_json(2, 0)}, 10)}, {"weights", {{"family", "random"}, {"mode", "generic"}, {"seed", 7}}}}});
  for (int a : {1, 2, 3})
    out.push_back({"power_family_a" + std::to_string(a) + "_d2", "T_{2,0}^2, power family a=" + std::to_string(a), {{"product", prod({tnk_json(2, 0), tnk_json(2, 0)}, 16)}, {"weights", power(a)}}});
  out.push_back({"power_family_a2_d1_t20", "T_{2,0}, power family a=2", {{"product", prod({tnk_json(2, 0)}, 16)}, {"weights", power(2)}}});
  out.push_back({"drury_arveson_d2", "T_{1,0}^2, power family a=1", {{"product", prod({tnk_json(1, 0), tnk_json(1, 0)}, 16)}, {"weights", power(1)}}});
  out.push_back({"szego_d2", "T_{1,0}^2, power family a=2", {{"product", prod({tnk_json(1, 0), tnk_json(1, 0)}, 16)}, {"weights", power(2)}}});
  out.push_back({"bergman_d2", "T_{1,0}^2, power family a=3", {{"product", prod({tnk_json(1, 0), tnk_json(1, 0)}, 16)}, {"weights", power(3)}}});
  out.push_back({"nary_essential_counterexample", "binary tree squared, power family a=3", {{"product", prod({json{{"kind", "nary"}, {"n", 2}}, json{{"kind", "nary"}, {"n", 2}}}, 26)}, {"weights", power(3)}}});
  out.push_back({"torally_balanced_2x1", "T_{2,0} x T_{1,0}, c(t,j) = (t+1)/(t+2)", {{"product", prod({tnk_json(2, 0), tnk_json(1, 0)}, 12)}, {"weights", {{"family", "torally_balanced"}, {"c", {{"formula", "ratio"}, {"scale", {1.0, 1.0}}, {"a", 2.0}, {"b", 1.0}}}}}}});
  return out;
}

inline std::optional<Fixture> find_fixture(const std::string& name) {
  for (auto& f : fixtures())
    if (f.name == name) return f;
  return std::nullopt;
}

// product + weights resolved from a spec document
struct Instance {
  json spec;
  std::shared_ptr<ProductTree> product;
  std::shared_ptr<WeightSystem> weights;  // absent when the spec has no "weights" (build/decompose2 only)
  json params;
};

inline Instance load_instance(json spec, std::optional<int> budget = std::nullopt) {
  if (!spec.is_object()) throw SpecError("$", "expected an object");
  if (spec.contains("fixture")) {
    if (!spec["fixture"].is_string()) throw SpecError("$.fixture", "expected a string");
    auto f = find_fixture(spec["fixture"].get<std::string>());
    if (!f) throw SpecError("$.fixture", "unknown fixture \"" + spec["fixture"].get<std::string>() + "\"");
    json merged = f->spec;
    if (spec.contains("params")) merged["params"] = spec["params"];
    spec = merged;
  }
  Instance in;
  in.spec = spec;
  in.product = std::make_shared<ProductTree>(parse_product(detail::need(spec, "product", "$"), "$.product", budget));
  if (spec.contains("weights")) in.weights = std::make_shared<WeightSystem>(parse_weights(spec["weights"], "$.weights", *in.product));
  in.params = spec.value("params", json::object());
  if (!in.params.is_object()) throw SpecError("$.params", "expected an object");
  return in;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError(path, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace mshift
