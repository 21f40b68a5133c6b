// sdeq command-line front end. Exit codes: 0 success, 1 other failure,
// 2 parse or input error, 3 solver non-convergence, 4 infeasible.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdeq/scenario.hpp"

namespace fs = std::filesystem;
using namespace sdeq;

namespace {

enum Exit { ok = 0, other = 1, input = 2, nonconvergence = 3, infeasible = 4 };

int status_exit(const std::string& status) {
  if (status == "infeasible") return infeasible;
  if (status == "max_iterations") return nonconvergence;
  return ok;
}

struct Common {
  std::string config;
  std::string warm;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool warm) {
  cmd->add_option("--config", c.config, "scenario JSON")->required();
  if (warm) cmd->add_option("--warm-start", c.warm, "previous result.json whose times seed the solve");
  cmd->add_option("--out-dir", c.out_dir, "directory for output files");
  cmd->add_option("--seed", c.seed, "overrides solver.seed");
}

Scenario load(const Common& c) {
  Scenario s = load_scenario(c.config);
  if (c.seed) s.solver.seed = *c.seed;
  return s;
}

std::optional<ResultArtifact> load_warm(const Common& c) {
  if (c.warm.empty()) return std::nullopt;
  return read_result(c.warm);
}

void print_summary(const ResultArtifact& a) {
  std::cout << "model " << a.model << ": " << a.status << " after " << a.iterations << " iterations, objective "
            << detail::format_number(a.objective) << ", total travel time " << detail::format_number(a.total_travel_time)
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic equilibrium scenarios: stable dynamics, Beckmann and three-stage models"};
  app.require_subcommand(1);

  Common vc;
  auto* validate = app.add_subcommand("validate", "parse and check a scenario");
  validate->add_option("--config", vc.config, "scenario JSON")->required();

  Common sc;
  auto* solve = app.add_subcommand("solve", "solve a scenario and write result.json and flows.csv");
  add_common(solve, sc, true);

  Common cc;
  std::optional<double> target;
  auto* calib = app.add_subcommand("calibrate-beta", "fit beta to an observed mean trip cost");
  add_common(calib, cc, true);
  calib->add_option("--target", target, "observed mean trip cost (default parameters.observed_mean_cost)");

  Common tc;
  std::string from_result;
  auto* tolls = app.add_subcommand("tolls", "write tolls.csv, solving first unless --result is given");
  add_common(tolls, tc, true);
  tolls->add_option("--result", from_result, "existing result.json to take the tolls from");

  Common wc;
  std::string patch_file;
  bool parallel = false;
  auto* sweep = app.add_subcommand("sweep", "run patch sets against a base scenario and write sweep.csv");
  add_common(sweep, wc, false);
  sweep->add_option("--patches", patch_file, "JSON array of patch sets")->required();
  sweep->add_flag("--parallel", parallel, "run variants cold and concurrently");

  std::string cmp_a, cmp_b, cmp_out = ".";
  auto* compare = app.add_subcommand("compare", "compare two result files and write compare.csv");
  compare->add_option("a", cmp_a, "first result.json")->required();
  compare->add_option("b", cmp_b, "second result.json")->required();
  compare->add_option("--out-dir", cmp_out, "directory for compare.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : input;
  }

  try {
    if (*validate) {
      const Scenario s = load_scenario(vc.config);
      const Network net = scenario_network(s);
      Json j;
      j["model"] = to_string(s.model);
      j["nodes"] = net.node_count();
      j["edges"] = net.edge_count();
      j["zones"] = s.zones.size();
      j["demands"] = s.demands.size();
      j["pins"] = s.pins.size();
      j["patches"] = s.patches.size();
      std::cout << j.dump(2) << "\n";
      return ok;
    }
    if (*solve) {
      const Scenario s = load(sc);
      const auto warm = load_warm(sc);
      const ResultArtifact a = run_scenario(s, warm ? &*warm : nullptr);
      write_result(sc.out_dir, a);
      print_summary(a);
      return status_exit(a.status);
    }
    if (*calib) {
      const Scenario s = load(cc);
      if (!target && !s.params.observed_mean_cost)
        throw InputError("no target: pass --target or set parameters.observed_mean_cost");
      const double c_star = target ? *target : *s.params.observed_mean_cost;
      std::vector<double> t;
      if (!cc.warm.empty()) t = detail::warm_times(scenario_network(s), read_result(cc.warm));
      const HymanResult r = calibrate_beta(s, c_star, t);
      Json j;
      j["beta"] = r.beta;
      j["mean_cost"] = r.cost;
      j["target"] = c_star;
      j["evaluations"] = r.evaluations;
      Json h = Json::array();
      for (const auto& [b, c] : r.history) h.push_back(Json::array({b, c}));
      j["history"] = h;
      detail::write_atomic(fs::path(cc.out_dir) / "calibration.json", j.dump(2) + "\n");
      std::cout << "beta " << detail::format_number(r.beta) << " (mean cost " << detail::format_number(r.cost)
                << ", " << r.evaluations << " evaluations)\n";
      return ok;
    }
    if (*tolls) {
      ResultArtifact a;
      if (!from_result.empty()) {
        a = read_result(from_result);
      } else {
        const Scenario s = load(tc);
        const auto warm = load_warm(tc);
        a = run_scenario(s, warm ? &*warm : nullptr);
      }
      detail::write_atomic(fs::path(tc.out_dir) / "tolls.csv", tolls_csv(a));
      std::cout << "total toll revenue " << detail::format_number(a.total_toll()) << "\n";
      return status_exit(a.status);
    }
    if (*sweep) {
      const Scenario s = load(wc);
      const auto sets = read_patch_sets(patch_file);
      const auto rows = run_sweep(s, sets, parallel);
      detail::write_atomic(fs::path(wc.out_dir) / "sweep.csv", sweep_csv(rows));
      for (const auto& r : rows)
        std::cout << r.name << ": " << r.status << (r.message.empty() ? "" : " (" + r.message + ")") << "\n";
      return ok;
    }
    if (*compare) {
      const ResultArtifact a = read_result(cmp_a);
      const ResultArtifact b = read_result(cmp_b);
      detail::write_atomic(fs::path(cmp_out) / "compare.csv", compare_csv(a, b));
      std::cout << "objective " << detail::format_number(a.objective) << " -> " << detail::format_number(b.objective)
                << ", total travel time " << detail::format_number(a.total_travel_time) << " -> "
                << detail::format_number(b.total_travel_time) << "\n";
      return ok;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return input;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return input;
  } catch (const NonConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nonconvergence;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return infeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return other;
  }
  return other;
}
