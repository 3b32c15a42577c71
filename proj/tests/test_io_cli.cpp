#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "conds/cli.hpp"
#include "conds/io.hpp"
#include "conds/scenarios.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace conds;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("conds-test-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name = "") const {
    return name.empty() ? path.string() : (path / name).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("format_double round-trips exactly and uses the shortest form") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.1) == "0.1");
  for (double v : {1.0 / 3.0, -2.5e17, 1e-300, 0.0, 6.02214076e23, -1.25e-5}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("demo CSV round trip is exact") {
  TempDir tmp;
  DemoSet demos = demo_l_shape();
  write_demo_csv(tmp.str("demo.csv"), tmp.str("demo.csv.json"), demos);
  DemoSet back = read_demo_csv(tmp.str("demo.csv"), tmp.str("demo.csv.json"));

  REQUIRE(back.trajectories.size() == demos.trajectories.size());
  CHECK(back.equilibrium == demos.equilibrium);
  for (size_t t = 0; t < demos.trajectories.size(); ++t) {
    CHECK(back.trajectories[t].times == demos.trajectories[t].times);
    CHECK(back.trajectories[t].points == demos.trajectories[t].points);
    CHECK(back.trajectories[t].velocities == demos.trajectories[t].velocities);
  }
}

TEST_CASE("malformed demo CSV is rejected with the offending row") {
  TempDir tmp;
  DemoSet demos = demo_sine();
  demos.trajectories[0].times[5] = demos.trajectories[0].times[7];  // non-monotone
  write_demo_csv(tmp.str("bad.csv"), tmp.str("bad.csv.json"), demos);
  bool threw = false;
  try {
    read_demo_csv(tmp.str("bad.csv"), tmp.str("bad.csv.json"));
  } catch (const ValidationError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("bad-times") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("trace CSV has one documented row per step") {
  TempDir tmp;
  Plant plant = Plant::point_mass(2, 1.0);
  ControllerSpec spec;
  spec.lambdas = Vec::Constant(2, 2.0);
  spec.f = swirl_field();
  spec.x_init = (Vec(2) << 0.5, 0.0).finished();
  Trace trace = simulate(plant, spec, 0.05, 1e-3);
  write_trace_csv(tmp.str("trace.csv"), trace);

  std::ifstream in(tmp.str("trace.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header.find("t,") == 0);
  CHECK(header.find("x1") != std::string::npos);
  CHECK(header.find("s,alpha,beta") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == static_cast<int>(trace.steps.size()));
}

TEST_CASE("field grid CSV covers the region with an omega column") {
  TempDir tmp;
  Box region{(Vec(2) << -1, -1).finished(), (Vec(2) << 1, 1).finished()};
  write_grid_csv(tmp.str("grid.csv"), swirl_field(), region, 5);

  std::ifstream in(tmp.str("grid.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "x1,x2,f1,f2,omega");
  int rows = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    ++rows;
    // swirl has unit angular velocity everywhere
    double omega = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(omega == doctest::Approx(1.0).epsilon(1e-5));
  }
  CHECK(rows == 25);
}

TEST_CASE("cli check: analytic classification and exit codes") {
  TempDir tmp;
  CHECK(run({"--out", tmp.str(), "check", "--scenario", "swirl"}) == 0);
  auto rep = load_json(tmp.str("report.json"));
  CHECK(rep["exact"] == true);
  CHECK(rep["symmetric"] == false);
  CHECK(rep["conservative"] == false);
  CHECK(rep["max_abs_loop_work"].get<double>() > 0.1);

  CHECK(run({"--out", tmp.str(), "check", "--scenario", "exemplar4"}) == 0);
  rep = load_json(tmp.str("report.json"));
  CHECK(rep["conservative"] == true);

  CHECK(run({"--out", tmp.str(), "check", "--scenario", "no-such"}) == 2);
  CHECK(run({"--out", tmp.str(), "check"}) == 2);
  CHECK(run({"--out", tmp.str(), "frobnicate"}) == 2);
}

TEST_CASE("cli simulate and decompose produce their artifacts deterministically") {
  TempDir a, b;

  SUBCASE("simulate snake with a tank") {
    save_json(a.str("cfg.json"),
              nlohmann::json{{"simulate",
                              {{"variant", "tank"}, {"duration", 2.0}, {"tank", {{"s0", 1.0}}}}}});
    CHECK(run({"--config", a.str("cfg.json"), "--out", a.str(), "simulate", "--scenario",
               "snake"}) == 0);
    CHECK(fs::exists(a.path / "trace.csv"));
    auto audit = load_json(a.str("audit.json"));
    CHECK(audit["audited"] == false);  // plain tank binds no storage function

    CHECK(run({"--config", a.str("cfg.json"), "--out", b.str(), "simulate", "--scenario",
               "snake"}) == 0);
    CHECK(slurp(a.str("trace.csv")) == slurp(b.str("trace.csv")));
  }

  SUBCASE("decompose snake") {
    CHECK(run({"--out", a.str(), "decompose", "--scenario", "snake"}) == 0);
    CHECK(run({"--out", b.str(), "decompose", "--scenario", "snake"}) == 0);
    for (const char* f : {"decomp.json", "fc_grid.csv", "fnc_grid.csv"}) {
      CHECK(slurp(a.str(f)) == slurp(b.str(f)));
    }
    auto dec = load_json(a.str("decomp.json"));
    CHECK(dec["nu"].size() == 8);
    CHECK(dec["j1"].get<double>() >= 0.0);
  }

  SUBCASE("unknown config keys are rejected") {
    save_json(a.str("cfg.json"), nlohmann::json{{"simulate", {{"dtt", 1e-3}}}});
    CHECK(run({"--config", a.str("cfg.json"), "--out", a.str(), "simulate", "--scenario",
               "snake"}) == 2);
  }
}

TEST_CASE("cli learn: model artifacts, round trip, and failure codes") {
  TempDir tmp;
  DemoSet demos = demo_l_shape();
  write_demo_csv(tmp.str("demo.csv"), tmp.str("demo.csv.json"), demos);

  CHECK(run({"--out", tmp.str(), "learn", "--demo", tmp.str("demo.csv")}) == 0);
  auto report = load_json(tmp.str("report.json"));
  CHECK(report["conservative"] == true);
  CHECK(report["max_abs_loop_work"].get<double>() <= 1e-6);
  CHECK(report["velocity_rmse"].get<double>() <=
        0.10 * report["mean_ref_speed"].get<double>());

  // model file round trip: same field to write-precision
  PotentialModel model = read_model(tmp.str("model.json"));
  std::mt19937_64 rng(3);
  Box bbox = demo_bounding_box(demos);
  TempDir tmp2;
  write_model(tmp2.str("model.json"), model);
  PotentialModel again = read_model(tmp2.str("model.json"));
  for (int k = 0; k < 50; ++k) {
    Vec xi = uniform_in_box(bbox, rng);
    CHECK((model.fp(xi) - again.fp(xi)).norm() < 1e-9);
  }

  // byte-identical reruns under the same seed
  TempDir tmp3;
  CHECK(run({"--out", tmp3.str(), "learn", "--demo", tmp.str("demo.csv")}) == 0);
  CHECK(slurp(tmp.str("model.json")) == slurp(tmp3.str("model.json")));
  CHECK(slurp(tmp.str("grid.csv")) == slurp(tmp3.str("grid.csv")));

  // solver failures map to exit 3: a horizon too short to reach the sink
  save_json(tmp.str("cfg.json"), nlohmann::json{{"learn", {{"horizon", 1e-4}}}});
  CHECK(run({"--config", tmp.str("cfg.json"), "--out", tmp.str(), "learn", "--demo",
             tmp.str("demo.csv")}) == 3);

  // missing demo file is a validation failure
  CHECK(run({"--out", tmp.str(), "learn", "--demo", tmp.str("nope.csv")}) == 2);
}
