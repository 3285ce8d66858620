#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mshift/report.hpp"

using namespace mshift;

namespace {

const std::map<std::string, std::string> kHelp = {
    {"build", "materialize the product: generation sizes, branching indices, tensor root component"},
    {"kernel", "joint kernel E of S^* by sibling-class blocks"},
    {"moments", "||S^alpha e_v||^2 table, closed form vs recursion"},
    {"classify", "balanced detection, subnormality, hyponormality, radii, Q^n identity"},
    {"radii", "spectral radius and inner radius estimates from C_t"},
    {"rkhs", "reproducing kernel coefficients for the power family"},
    {"shimorin", "Shimorin kernel coefficients and band check"},
    {"decompose2", "d = 2 matrix decomposition sets"},
    {"wandering", "rank of the span of S^alpha E against card(V_<=N)"},
    {"fixtures", "list built-in specs"},
    {"check", "parse and validate a spec"},
};

int fail(int code, const std::string& kind, const std::string& msg) {
  json err = {{"error", kind}, {"message", msg}};
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mshift: weighted multishifts on directed Cartesian products of rooted trees"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string spec_path, out_path, fixture, csv;
  double tol = 1e-10;
  std::optional<std::uint64_t> seed;
  std::optional<int> budget;
  app.add_option("--spec", spec_path, "JSON job spec (product, weights, params)");
  app.add_option("--fixture", fixture, "use a built-in fixture instead of --spec");
  app.add_option("--out", out_path, "write the JSON report here (default stdout)");
  app.add_option("--tol", tol, "numerical tolerance for null spaces")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "seed for random weight descriptors");
  app.add_option("--budget", budget, "override the depth budget")->check(CLI::NonNegativeNumber);
  app.add_option("--csv", csv, "write a CSV series (radii: sup/inf per n; classify: C_t)");

  // command parameters; these override "params" in the spec
  std::map<std::string, std::optional<int>> ints = {{"window", {}}, {"t_max", {}}, {"n_max", {}}, {"k_max", {}}, {"N", {}}, {"alpha_budget", {}}, {"n", {}}, {"v_depth", {}}, {"generations", {}}, {"qn_n", {}}, {"qn_depth", {}}};
  for (auto& [key, val] : ints) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    app.add_option(flag, val, "parameter " + key);
  }

  for (const auto& name : command_names()) app.add_subcommand(name, kHelp.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  json report;
  try {
    if (cmd == "fixtures") {
      report = {{"command", "fixtures"}, {"result", run_fixtures()}};
    } else {
      json spec;
      if (!fixture.empty() && !spec_path.empty()) throw SpecError("--spec", "give either --spec or --fixture, not both");
      if (!fixture.empty()) spec = {{"fixture", fixture}};
      else if (!spec_path.empty()) spec = read_json_file(spec_path);
      else throw SpecError("--spec", "missing (or use --fixture NAME)");
      if (spec.is_object() && spec.contains("fixture") && spec["fixture"].is_string()) {
        auto f = find_fixture(spec["fixture"].get<std::string>());
        if (f) {
          json merged = f->spec;
          if (spec.contains("params")) merged["params"] = spec["params"];
          spec = merged;
        }
      }
      if (seed && spec.is_object() && spec.contains("weights") && spec["weights"].is_object() && spec["weights"].value("family", "") == "random") spec["weights"]["seed"] = *seed;
      for (const auto& [key, val] : ints)
        if (val) spec["params"][key] = *val;
      Instance in = load_instance(spec, budget);
      RunOptions o;
      o.tol = tol;
      o.seed = seed.value_or(0);
      o.csv = csv;
      report = run_command(cmd, in, o);
    }
  } catch (const SpecError& e) {
    return fail(2, "spec", e.what());
  } catch (const PreconditionError& e) {
    return fail(3, "precondition", e.what());
  } catch (const std::exception& e) {
    return fail(1, "runtime", e.what());
  }

  const std::string text = report.dump(2);
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(out_path);
    if (!f) return fail(1, "io", "cannot write " + out_path);
    f << text << "\n";
  }
  return 0;
}
