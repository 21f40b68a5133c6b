#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "sdeq/scenario.hpp"

using namespace sdeq;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SDEQ_DATA_DIR;

// Fresh directory per test, removed on exit.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("sdeq_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return path_ / name;
  }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

const EdgeResult& edge_by_id(const ResultArtifact& a, std::int64_t id) {
  for (const auto& e : a.edges)
    if (e.id == id) return e;
  throw std::out_of_range("edge");
}

// Runs the CLI and returns its exit status, or -1 when it is unavailable.
int cli(const std::string& args) {
  const char* exe = std::getenv("SDEQ_CLI");
  if (!exe) return -1;
  const std::string cmd = std::string("\"") + exe + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const std::string kTwoRouteEdges = "edge_id,tail,head,mode,t_free,cap\n1,1,2,car,1,10\n2,1,2,car,2,10\n";

fs::path two_route_config(const TempDir& dir, const std::string& sub, double d, const std::string& solver = "{}") {
  fs::create_directories(dir.path() / sub);
  dir.write(sub + "/edges.csv", kTwoRouteEdges);
  dir.write(sub + "/demands.csv", "origin,destination,volume\n1,2," + detail::format_number(d) + "\n");
  return dir.write(sub + "/config.json",
                   R"({"network": "edges.csv", "demands": "demands.csv", "model": "sd", "solver": )" + solver + "}");
}

}  // namespace

TEST(ParseInputs, TwoEdgeSample) {
  const Scenario s = load_scenario(kData / "two_route" / "config.json");
  EXPECT_EQ(s.model, ModelKind::sd);
  EXPECT_EQ(scenario_network(s).edge_count(), 2u);
  ASSERT_EQ(s.demands.size(), 1u);
  EXPECT_EQ(s.demands[0].volume, 15.0);
}

TEST(ParseInputs, CsvErrorsCarryLineAndColumn) {
  TempDir dir;
  const auto bad = dir.write("edges.csv", "edge_id,tail,head,mode,t_free,cap\n1,1,2,car,1,10\n2,1,2,car,abc,10\n");
  const std::string m = message_of([&] { read_edges_csv(bad); });
  EXPECT_NE(m.find("edges.csv:3:11:"), std::string::npos) << m;
  EXPECT_THROW(read_edges_csv(bad), ParseError);

  const auto dup = dir.write("dup.csv", "edge_id,tail,head,mode,t_free,cap\n1,1,2,car,1,10\n1,1,2,car,2,10\n");
  EXPECT_NE(message_of([&] { read_edges_csv(dup); }).find("dup.csv:3:1: duplicate edge id 1"), std::string::npos);

  const auto hdr = dir.write("hdr.csv", "edge_id,tail,head,mode,cap,t_free\n");
  EXPECT_NE(message_of([&] { read_edges_csv(hdr); }).find("hdr.csv:1:24: expected column 't_free'"), std::string::npos);

  const auto mode = dir.write("mode.csv", "edge_id,tail,head,mode,t_free,cap\n# comment\n\n1,1,2,bus,1,10\n");
  EXPECT_NE(message_of([&] { read_edges_csv(mode); }).find("mode.csv:4:7:"), std::string::npos);

  const auto wide = dir.write("wide.csv", "edge_id,tail,head,mode,t_free,cap\n1,1,2,car,1,10,7\n");
  EXPECT_NE(message_of([&] { read_edges_csv(wide); }).find("wide.csv:2:16: expected 6 fields"), std::string::npos);
}

TEST(ParseInputs, JsonErrorsCarryLineAndColumn) {
  TempDir dir;
  dir.write("edges.csv", kTwoRouteEdges);
  const auto cfg = dir.write("config.json", "{\n  \"network\": \"edges.csv\",\n  \"model\": ,\n}\n");
  const std::string m = message_of([&] { load_scenario(cfg); });
  EXPECT_NE(m.find("config.json:3:"), std::string::npos) << m;
  EXPECT_THROW(load_scenario(cfg), ParseError);
}

TEST(ParseInputs, UnknownModelListsValidModels) {
  TempDir dir;
  dir.write("edges.csv", kTwoRouteEdges);
  const auto cfg = dir.write("config.json", R"({"network": "edges.csv", "model": "wardrop"})");
  const std::string m = message_of([&] { load_scenario(cfg); });
  EXPECT_NE(m.find("unknown model 'wardrop'"), std::string::npos);
  EXPECT_NE(m.find("beckmann, sd, sd-split, sd-mixed, 3s, s3s"), std::string::npos);
  EXPECT_THROW(load_scenario(cfg), InputError);
}

TEST(ParseInputs, ZoneSumsMustAgree) {
  TempDir dir;
  const auto z = dir.write("zones.csv", "zone_id,node_id,L,W\nz1,A,50,40\nz2,B,50,50\n");
  const std::string m = message_of([&] { read_zones_csv(z); });
  EXPECT_NE(m.find("sum to 100"), std::string::npos) << m;
  EXPECT_NE(m.find("sum to 90"), std::string::npos) << m;
}

TEST(ParseInputs, ModelRequirementsCheckedUpFront) {
  TempDir dir;
  dir.write("edges.csv", kTwoRouteEdges);
  auto cfg = dir.write("a.json", R"({"network": "edges.csv", "model": "sd"})");
  EXPECT_NE(message_of([&] { load_scenario(cfg); }).find("needs a demands file"), std::string::npos);
  dir.write("demands.csv", "origin,destination,volume\n1,2,3\n");
  cfg = dir.write("b.json", R"({"network": "edges.csv", "demands": "demands.csv", "model": "beckmann"})");
  EXPECT_NE(message_of([&] { load_scenario(cfg); }).find("parameters.family"), std::string::npos);
  cfg = dir.write("c.json", R"({"network": "edges.csv", "demands": "demands.csv", "model": "sd", "colour": 1})");
  EXPECT_NE(message_of([&] { load_scenario(cfg); }).find("unknown key 'colour'"), std::string::npos);
  cfg = dir.write("d.json", R"({"network": "missing.csv", "model": "sd"})");
  EXPECT_NE(message_of([&] { load_scenario(cfg); }).find("missing.csv: cannot open file"), std::string::npos);
  EXPECT_THROW(load_scenario(cfg), ParseError);
}

TEST(ParseInputs, CapacityFromLanes) {
  TempDir dir;
  dir.write("edges.csv", "edge_id,tail,head,mode,t_free,cap,length,lanes\n1,1,2,car,1,,0.5,2\n");
  dir.write("demands.csv", "origin,destination,volume\n1,2,3\n");
  auto cfg = dir.write("config.json",
                       R"({"network": "edges.csv", "demands": "demands.csv", "model": "sd", "parameters": {"q_max": 1800}})");
  const Scenario s = load_scenario(cfg);
  EXPECT_DOUBLE_EQ(scenario_network(s).edge(0).cap, estimate_capacity(1.0, 2.0, 1800.0));
  cfg = dir.write("nolanes.json", R"({"network": "edges.csv", "demands": "demands.csv", "model": "sd"})");
  EXPECT_THROW(load_scenario(cfg), InputError);
}

TEST(ApplyPatches, EmptyListIsIdentity) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  EXPECT_EQ(apply_patches(s, {}), s);
}

TEST(ApplyPatches, CapOverrideTouchesOneField) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  const Scenario before = s;
  const Scenario v = apply_patches(s, {{PatchTarget::edge, "23", "cap", 9.0}});
  EXPECT_EQ(s, before);
  ASSERT_EQ(v.edges.size(), s.edges.size());
  for (std::size_t k = 0; k < s.edges.size(); ++k) {
    if (s.edges[k].rec.id == 23) {
      EXPECT_EQ(v.edges[k].rec.cap, 9.0);
      ScenarioEdge e = v.edges[k];
      e.rec.cap = s.edges[k].rec.cap;
      EXPECT_EQ(e, s.edges[k]);
    } else {
      EXPECT_EQ(v.edges[k], s.edges[k]);
    }
  }
  EXPECT_EQ(v.demands, s.demands);
  EXPECT_EQ(v.params, s.params);
  EXPECT_EQ(v.patches.size(), 1u);
}

TEST(ApplyPatches, ZoneOverrideRenormalizes) {
  const Scenario s = load_scenario(kData / "toy_3s" / "config.json");
  const Scenario v = apply_patches(s, {{PatchTarget::zone, "z1", "L", 150.0}, {PatchTarget::zone, "z1", "W", 150.0}});
  const Network net = scenario_network(v);
  const Zones z = scenario_zones(v, net);
  EXPECT_DOUBLE_EQ(z.l[0], 0.75);
  EXPECT_DOUBLE_EQ(z.l[1], 0.25);
  EXPECT_DOUBLE_EQ(z.w[0], 0.75);
  EXPECT_DOUBLE_EQ(z.total_trips, 200.0);
}

TEST(ApplyPatches, UnknownTargetsAndFields) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  EXPECT_NE(message_of([&] { apply_patches(s, {{PatchTarget::edge, "99", "cap", 1.0}}); }).find("unknown edge id '99'"),
            std::string::npos);
  EXPECT_NE(message_of([&] { apply_patches(s, {{PatchTarget::edge, "12", "colour", 1.0}}); }).find("unknown edge field"),
            std::string::npos);
  EXPECT_THROW(apply_patches(s, {{PatchTarget::zone, "z9", "L", 1.0}}), InputError);
  EXPECT_THROW(apply_patches(s, {{PatchTarget::global, "", "gamma", 1.0}}), InputError);
  const Scenario b = apply_patches(s, {{PatchTarget::global, "", "beta", 2.5}});
  EXPECT_EQ(b.params.beta, 2.5);
  EXPECT_THROW(patches_from_json(Json::parse(R"([{"target": "node", "id": 1, "field": "cap", "value": 1}])"), "p"),
               InputError);
  const auto ps = patches_from_json(Json::parse(R"([{"target": "edge", "id": 12, "field": "enabled", "value": false}])"), "p");
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_EQ(ps[0], (Patch{PatchTarget::edge, "12", "enabled", 0.0}));
  EXPECT_EQ(patch_from_json(patch_to_json(ps[0]), "p"), ps[0]);
}

TEST(Run, TwoRouteGolden) {
  const Scenario s = load_scenario(kData / "two_route" / "config.json");
  const auto a = run_scenario(s);
  EXPECT_EQ(a.status, "converged");
  EXPECT_NEAR(a.edges[0].f, 10, 1e-3);
  EXPECT_NEAR(a.edges[1].f, 5, 1e-3);
  EXPECT_NEAR(a.edges[0].t, 2, 1e-3);
  EXPECT_NEAR(a.edges[1].t, 2, 1e-3);
  EXPECT_NEAR(a.edges[0].toll, 1, 1e-3);
  EXPECT_NEAR(a.total_travel_time, 30, 1e-2);
}

TEST(Run, ThreeStageToy) {
  const Scenario s = load_scenario(kData / "toy_3s" / "config.json");
  const auto a = run_scenario(s);
  EXPECT_EQ(a.status, "converged");
  ASSERT_EQ(a.trips.size(), 2u);
  double total = 0.0;
  for (const auto& row : a.trips)
    for (double x : row) total += x;
  EXPECT_NEAR(total, 100.0, 1e-9);
  EXPECT_NEAR(edge_by_id(a, 1).f, 10.0, 1e-3);
  EXPECT_NEAR(a.trips[0][1], 10.0, 1e-3);
}

TEST(ResultArtifact, JsonRoundTrip) {
  for (const char* name : {"two_route", "toy_3s", "braess"}) {
    const auto a = run_scenario(load_scenario(kData / name / "config.json"));
    EXPECT_EQ(result_from_json(Json::parse(result_json_text(a)), "r"), a) << name;
  }
  ResultArtifact odd;
  odd.model = "sd";
  odd.status = "infeasible";
  odd.objective = -kInf;
  odd.residuals["feasibility"] = kInf;
  odd.edges.push_back({7, "x", "y", Mode::transit, 0.1 + 0.2, 1.0 / 3.0, 0.0});
  EXPECT_EQ(result_from_json(Json::parse(result_json_text(odd)), "r"), odd);

  TempDir dir;
  write_result(dir.path(), odd);
  EXPECT_EQ(read_result(dir.path() / "result.json"), odd);
  EXPECT_TRUE(fs::exists(dir.path() / "flows.csv"));
  EXPECT_FALSE(fs::exists(dir.path() / "trips.csv"));
}

TEST(ResultArtifact, NumbersRoundTripExactly) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  std::uniform_int_distribution<int> ex(-300, 300);
  for (int k = 0; k < 2000; ++k) {
    const double x = std::ldexp(u(rng), ex(rng) / 4);
    EXPECT_EQ(*detail::read_number(detail::format_number(x)), x);
  }
  EXPECT_EQ(detail::format_number(kInf), "inf");
  EXPECT_EQ(*detail::read_number("-inf"), -kInf);
}

TEST(ResultArtifact, RejectsForeignFiles) {
  EXPECT_THROW(result_from_json(Json::parse(R"({"format": "other"})"), "r"), InputError);
  EXPECT_THROW(result_from_json(Json::parse(R"({"format": "sdeq-result", "version": 2})"), "r"), InputError);
}

TEST(Run, Deterministic) {
  for (const char* name : {"two_route", "toy_3s", "braess"}) {
    const Scenario s = load_scenario(kData / name / "config.json");
    EXPECT_EQ(result_json_text(run_scenario(s)), result_json_text(run_scenario(s))) << name;
  }
}

TEST(Run, SeedIsUnusedBySmoothSolve) {
  Scenario s = load_scenario(kData / "toy_3s" / "config.json");
  s.model = ModelKind::smooth_three_stage;
  s.params.temperature = 0.1;
  const auto a = run_scenario(s);
  s.solver.seed = 12345;
  EXPECT_EQ(result_json_text(run_scenario(s)), result_json_text(a));
}

TEST(Run, WarmStartMustMatchTopology) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  const auto two = run_scenario(load_scenario(kData / "two_route" / "config.json"));
  EXPECT_THROW(run_scenario(s, &two), InputError);
  const auto base = run_scenario(s);
  const auto warm = run_scenario(apply_patches(s, {{PatchTarget::edge, "13", "cap", 11.0}}), &base);
  EXPECT_EQ(warm.status, "converged");
}

TEST(Sweep, EmptyListGivesBaseRow) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  const auto rows = run_sweep(s, {});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].name, "base");
  const std::string csv = sweep_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "variant,status,objective,total_travel_time,total_toll,iterations,df_12,df_13,df_23,message");
}

TEST(Sweep, BraessParadoxRow) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  const auto sets = read_patch_sets(kData / "braess" / "drop12.json");
  const auto rows = run_sweep(s, sets);
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_TRUE(rows[0].result && rows[1].result);
  // d_23 (t13 - t12 - t23) = 2 (10 - 3 - 3)
  EXPECT_NEAR(rows[0].result->total_travel_time, 84.0, 1e-3);
  EXPECT_NEAR(rows[1].result->total_travel_time, 76.0, 1e-3);
  EXPECT_NEAR(rows[0].result->total_travel_time - rows[1].result->total_travel_time, 2.0 * (10 - 3 - 3), 1e-3);
  EXPECT_FALSE(rows[1].warm_started);  // an edge was removed
  // every driver weakly gains
  EXPECT_LE(edge_by_id(*rows[1].result, 13).t, 10.0 + 1e-6);
  EXPECT_LE(edge_by_id(*rows[1].result, 23).t, edge_by_id(*rows[0].result, 23).t);
}

TEST(Sweep, DuplicatesAndFailuresPerRow) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  const std::vector<PatchSet> sets{{"a", {{PatchTarget::edge, "13", "cap", 12.0}}},
                                   {"bad", {{PatchTarget::edge, "77", "cap", 1.0}}},
                                   {"b", {{PatchTarget::edge, "13", "cap", 12.0}}}};
  const auto rows = run_sweep(s, sets);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2].status, "error");
  EXPECT_NE(rows[2].message.find("unknown edge id"), std::string::npos);
  ASSERT_TRUE(rows[1].result && rows[3].result);
  EXPECT_TRUE(rows[1].warm_started);
  EXPECT_EQ(result_json_text(*rows[1].result), result_json_text(*rows[3].result));

  const auto par = run_sweep(s, sets, true);
  ASSERT_EQ(par.size(), 4u);
  EXPECT_EQ(par[1].name, "a");
  EXPECT_EQ(par[2].status, "error");
  EXPECT_NEAR(par[1].result->total_travel_time, rows[1].result->total_travel_time, 1e-3);
}

TEST(Compare, UnionOfEdges) {
  const Scenario s = load_scenario(kData / "braess" / "config.json");
  const auto a = run_scenario(s);
  const auto b = run_scenario(apply_patches(s, {{PatchTarget::edge, "12", "enabled", 0.0}}));
  const std::string csv = compare_csv(a, b);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "edge_id,t_a,t_b,dt,f_a,f_b,df");
  std::getline(in, line);
  // edge 12 only on side a
  const auto& e = edge_by_id(a, 12);
  EXPECT_EQ(line, "12," + detail::format_number(e.t) + ",,," + detail::format_number(e.f) + ",,");
}

TEST(Calibrate, RecoversBetaOnToy) {
  Scenario s = load_scenario(kData / "toy_3s" / "config.json");
  const Network net = scenario_network(s);
  const Zones z = scenario_zones(s, net);
  const Matrix C = zone_cost_matrix(net, z, {});
  EXPECT_EQ(C(0, 1), 1.0);
  EXPECT_EQ(C(0, 0), 0.0);
  const double target = mean_cost(gravity_balance(z.l, z.w, C, 1.5).d, C);
  EXPECT_NEAR(calibrate_beta(s, target).beta, 1.5, 0.015);
}

TEST(Cli, ExitCodes) {
  if (!std::getenv("SDEQ_CLI")) GTEST_SKIP() << "SDEQ_CLI not set";
  TempDir dir;
  const std::string out = " --out-dir \"" + dir.path().string() + "\"";
  EXPECT_EQ(cli("validate --config \"" + (kData / "two_route" / "config.json").string() + "\""), 0);
  EXPECT_EQ(cli("solve --config \"" + (kData / "two_route" / "config.json").string() + "\"" + out), 0);
  EXPECT_TRUE(fs::exists(dir.path() / "result.json"));
  EXPECT_TRUE(fs::exists(dir.path() / "flows.csv"));

  const auto bad = dir.write("bad.json", "{ \"network\": ");
  EXPECT_EQ(cli("validate --config \"" + bad.string() + "\""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("solve"), 2);

  const auto infeasible = two_route_config(dir, "d25", 25);
  EXPECT_EQ(cli("solve --config \"" + infeasible.string() + "\"" + out), 4);
  const auto short_run = two_route_config(dir, "short", 15, R"({"max_iter": 4, "epoch_length": 2})");
  EXPECT_EQ(cli("solve --config \"" + short_run.string() + "\"" + out), 3);
}

TEST(Cli, RepeatedRunsWriteIdenticalFiles) {
  if (!std::getenv("SDEQ_CLI")) GTEST_SKIP() << "SDEQ_CLI not set";
  TempDir dir;
  for (const char* name : {"two_route", "toy_3s", "braess"}) {
    const std::string cfg = "--config \"" + (kData / name / "config.json").string() + "\"";
    fs::create_directories(dir.path() / "a");
    fs::create_directories(dir.path() / "b");
    ASSERT_EQ(cli("solve " + cfg + " --out-dir \"" + (dir.path() / "a").string() + "\""), 0) << name;
    ASSERT_EQ(cli("solve " + cfg + " --out-dir \"" + (dir.path() / "b").string() + "\""), 0) << name;
    for (const char* f : {"result.json", "flows.csv"})
      EXPECT_EQ(slurp(dir.path() / "a" / f), slurp(dir.path() / "b" / f)) << name << " " << f;
  }
  const std::string sweep = "sweep --config \"" + (kData / "braess" / "config.json").string() + "\" --patches \"" +
                            (kData / "braess" / "drop12.json").string() + "\" --out-dir \"" + dir.path().string() + "\"";
  ASSERT_EQ(cli(sweep), 0);
  const std::string csv = slurp(dir.path() / "sweep.csv");
  EXPECT_NE(csv.find("\ndrop12,converged,"), std::string::npos) << csv;

  const std::string res = (dir.path() / "a" / "result.json").string();
  ASSERT_EQ(cli("tolls --config x --result \"" + res + "\" --out-dir \"" + dir.path().string() + "\""), 0);
  EXPECT_EQ(slurp(dir.path() / "tolls.csv").substr(0, 14), "edge_id,toll\n1");
  ASSERT_EQ(cli("compare \"" + res + "\" \"" + res + "\" --out-dir \"" + dir.path().string() + "\""), 0);
  EXPECT_TRUE(fs::exists(dir.path() / "compare.csv"));
}
