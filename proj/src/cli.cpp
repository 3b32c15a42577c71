#include "conds/cli.hpp"

#include "conds/control.hpp"
#include "conds/decomp.hpp"
#include "conds/io.hpp"
#include "conds/lift.hpp"
#include "conds/rotation.hpp"
#include "conds/scenarios.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace conds {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::vector<std::string> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError("bad-config", where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ValidationError("bad-config", where + ": unknown key '" + it.key() + "'");
    }
  }
}

LearnConfig parse_learn_config(const json& root, std::uint64_t seed) {
  LearnConfig cfg;
  cfg.seed = seed;
  if (!root.contains("learn")) return cfg;
  const json& j = root["learn"];
  check_keys(j,
             {"n_control_points", "epsilon", "mu_frac", "normal_count", "r_excl_frac",
              "inflate", "n_constraint_samples", "delta_pos", "delta_grad",
              "delta_mono_frac", "r_stop_frac", "horizon", "rk4_dt_frac",
              "max_outer_iters", "tol_iter", "v1_search_sweeps", "nlml_sweeps",
              "max_demo_gp_points", "b_lower", "b_upper"},
             "learn");
  cfg.n_control_points = j.value("n_control_points", cfg.n_control_points);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.mu_frac = j.value("mu_frac", cfg.mu_frac);
  cfg.normal_count = j.value("normal_count", cfg.normal_count);
  cfg.r_excl_frac = j.value("r_excl_frac", cfg.r_excl_frac);
  cfg.inflate = j.value("inflate", cfg.inflate);
  cfg.n_constraint_samples = j.value("n_constraint_samples", cfg.n_constraint_samples);
  cfg.delta_pos = j.value("delta_pos", cfg.delta_pos);
  cfg.delta_grad = j.value("delta_grad", cfg.delta_grad);
  cfg.delta_mono_frac = j.value("delta_mono_frac", cfg.delta_mono_frac);
  cfg.r_stop_frac = j.value("r_stop_frac", cfg.r_stop_frac);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.rk4_dt_frac = j.value("rk4_dt_frac", cfg.rk4_dt_frac);
  cfg.max_outer_iters = j.value("max_outer_iters", cfg.max_outer_iters);
  cfg.tol_iter = j.value("tol_iter", cfg.tol_iter);
  cfg.v1_search_sweeps = j.value("v1_search_sweeps", cfg.v1_search_sweeps);
  cfg.nlml_sweeps = j.value("nlml_sweeps", cfg.nlml_sweeps);
  cfg.max_demo_gp_points = j.value("max_demo_gp_points", cfg.max_demo_gp_points);
  cfg.b_lower = j.value("b_lower", cfg.b_lower);
  cfg.b_upper = j.value("b_upper", cfg.b_upper);
  return cfg;
}

struct ScenarioField {
  Field field;
  Box region;
  Vec xi0;
  std::vector<Vec> starts;
};

ScenarioField get_scenario(const std::string& name) {
  ScenarioField s;
  if (name == "swirl") {
    s.field = swirl_field();
    Vec lo(2), hi(2);
    lo << -1.0, -1.0;
    hi << 1.0, 1.0;
    s.region = Box{lo, hi};
    s.xi0 = Vec::Zero(2);
    Vec st(2);
    st << 0.8, 0.0;
    s.starts.push_back(st);
    return s;
  }
  if (name == "snake") {
    SnakeScenario snake = snake_scenario();
    s.field = snake.field();
    s.region = snake.region;
    s.xi0 = snake.xi0;
    s.starts = snake.starts;
    return s;
  }
  for (int i = 0; i < 4; ++i) {
    if (name == "exemplar" + std::to_string(i + 1)) {
      StiffnessExemplar ex = stiffness_exemplars()[static_cast<size_t>(i)];
      s.field = ex.field();
      Vec lo(2), hi(2);
      lo << -1.0, -1.0;
      hi << 1.0, 1.0;
      s.region = Box{lo, hi};
      s.xi0 = ex.xi0;
      Vec st(2);
      st << 0.8, 0.4;
      s.starts.push_back(st);
      return s;
    }
  }
  throw ValidationError("bad-config",
                        "unknown scenario '" + name +
                            "' (expected swirl, snake, or exemplar1..4)");
}

json conservativeness_report(const Field& field, const Box& region, int n_probes,
                             int n_loops, std::uint64_t seed) {
  StiffnessOptions opts;
  opts.seed = seed;
  StiffnessReport rep = classify_stiffness(field, region, n_probes, opts);
  double worst_loop = max_loop_work(field, region, n_loops, 1024, seed + 1);
  json j = rep.to_json();
  j["max_abs_loop_work"] = worst_loop;
  j["n_loops"] = n_loops;
  return j;
}

std::string out_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir + "/" + name;
}

int cmd_learn(const std::string& demo_path, const std::string& sidecar_path,
              const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  check_keys(cfg, {"pipeline", "learn", "lift", "grid_resolution", "seed"}, "config");
  std::string pipeline = cfg.value("pipeline", std::string("learn"));
  int res = cfg.value("grid_resolution", 80);
  std::string side = sidecar_path.empty() ? demo_path + ".json" : sidecar_path;
  DemoSet demos = read_demo_csv(demo_path, side);
  LearnConfig lcfg = parse_learn_config(cfg, seed);

  if (pipeline == "learn") {
    LearnReport rep;
    PotentialModel model = optimize_iterative(demos, lcfg, &rep);
    write_model(out_path(out_dir, "model.json"), model);
    Box box = demo_bounding_box(demos);
    write_grid_csv(out_path(out_dir, "grid.csv"), model.field(), box, res);
    json report = conservativeness_report(model.field(), box, 50, 20, seed);
    report["velocity_rmse"] = rep.velocity_rmse;
    report["mean_ref_speed"] = rep.mean_ref_speed;
    report["kappa"] = rep.kappa;
    report["iterations"] = rep.iterations;
    save_json(out_path(out_dir, "report.json"), report);
    return 0;
  }
  if (pipeline == "lift") {
    json lj = cfg.value("lift", json::object());
    check_keys(lj, {"w0", "w1", "wrap"}, "lift");
    double w0 = lj.value("w0", 0.0), w1 = lj.value("w1", 1.0);
    bool wrap = lj.value("wrap", true);
    LearnReport rep;
    LiftedModel lm = learn_lifted(demos, lcfg, w0, w1, wrap, &rep);
    write_lifted_model(out_path(out_dir, "model.json"), lm);
    Box box = demo_bounding_box(demos);
    write_grid_csv(out_path(out_dir, "grid.csv"), slice_field(lm, 0.5 * (w0 + w1)), box,
                   res);
    LiftedDemo ld = lift_trajectory(demos, w0, w1);
    Box lbox = demo_bounding_box(ld.lifted);
    json report = conservativeness_report(lm.model.field(), lbox, 50, 20, seed);
    report["velocity_rmse"] = rep.velocity_rmse;
    report["mean_ref_speed"] = rep.mean_ref_speed;
    save_json(out_path(out_dir, "report.json"), report);
    return 0;
  }
  if (pipeline == "rotation") {
    LearnReport rep;
    SphereModel sm = learn_sphere_ds(demos, lcfg, &rep);
    json mj = sm.model.to_json();
    mj["type"] = "sphere";
    mj["pole_margin"] = sm.chart.pole_margin;
    save_json(out_path(out_dir, "model.json"), mj);
    DemoSet chart_demos = pull_back_demos(sm.chart, demos);
    Box cbox = demo_bounding_box(chart_demos);
    write_grid_csv(out_path(out_dir, "grid.csv"), sm.chart_field(), cbox, res);
    json report = conservativeness_report(sm.chart_field(), cbox, 50, 20, seed);
    report["velocity_rmse"] = rep.velocity_rmse;
    report["mean_ref_speed"] = rep.mean_ref_speed;
    save_json(out_path(out_dir, "report.json"), report);
    return 0;
  }
  throw ValidationError("bad-config", "unknown pipeline '" + pipeline + "'");
}

ControllerVariant parse_variant(const std::string& s) {
  if (s == "passive_ds") return ControllerVariant::PassiveDs;
  if (s == "tank") return ControllerVariant::Tank;
  if (s == "split_tank") return ControllerVariant::SplitTank;
  if (s == "projection") return ControllerVariant::Projection;
  throw ValidationError("bad-config", "unknown controller variant '" + s + "'");
}

int cmd_simulate(const std::string& model_path, const std::string& scenario,
                 const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  check_keys(cfg, {"simulate", "seed"}, "config");
  json sj = cfg.value("simulate", json::object());
  check_keys(sj,
             {"variant", "duration", "dt", "lambdas", "lambda_gain", "x_init", "v_init",
              "mass", "tank", "omega", "w_init", "audit_tol"},
             "simulate");
  ControllerSpec spec;
  spec.variant = parse_variant(sj.value("variant", std::string("passive_ds")));
  double duration = sj.value("duration", 10.0);
  double dt = sj.value("dt", 1e-3);
  double mass = sj.value("mass", 1.0);

  std::optional<PotentialModel> model;
  std::optional<LiftedModel> lifted;
  ScenarioField scen;
  int n = 0;
  if (!model_path.empty()) {
    json mj = load_json(model_path);
    std::string type = mj.value("type", std::string("potential"));
    if (type == "lifted") {
      lifted = lifted_from_json(mj);
      n = lifted->base_dim;
    } else if (type == "potential") {
      model = PotentialModel::from_json(mj);
      n = static_cast<int>(model->xi0.size());
    } else {
      throw ValidationError("bad-config", "cannot simulate model type '" + type + "'");
    }
  } else if (!scenario.empty()) {
    scen = get_scenario(scenario);
    n = scen.field.dim;
  } else {
    throw ValidationError("bad-config", "simulate needs --model or --scenario");
  }

  spec.lambdas = Vec::Constant(n, 2.0);
  if (sj.contains("lambdas")) {
    auto lv = sj["lambdas"].get<std::vector<double>>();
    if (static_cast<int>(lv.size()) != n) {
      throw ValidationError("bad-config", "lambdas dimension mismatch");
    }
    spec.lambdas = Eigen::Map<const Vec>(lv.data(), n);
  }
  spec.lambda_gain = sj.value("lambda_gain", 1.0);

  if (sj.contains("tank")) {
    const json& tj = sj["tank"];
    check_keys(tj, {"s_lower", "s_upper", "width_frac", "s0", "hard_beta"}, "tank");
    spec.tank.s_lower = tj.value("s_lower", spec.tank.s_lower);
    spec.tank.s_upper = tj.value("s_upper", spec.tank.s_upper);
    spec.tank.width_frac = tj.value("width_frac", spec.tank.width_frac);
    spec.tank.s0 = tj.value("s0", spec.tank.s0);
    spec.tank.hard_beta = tj.value("hard_beta", spec.tank.hard_beta);
  }

  Vec xi0;
  if (model) {
    spec.f = model->field();
    PotentialModel m = *model;
    spec.storage_potential = [m](const Vec& x) { return m.vp(x); };
    xi0 = model->xi0;
  } else if (lifted) {
    spec.lifted = &*lifted;
    spec.w_init = sj.value("w_init", lifted->w0);
    xi0 = lifted->model.xi0.head(n);
  } else {
    spec.f = scen.field;
    xi0 = scen.xi0;
    if (spec.variant == ControllerVariant::SplitTank) {
      Eigen::Vector2d omega(1.0, 1.0);
      if (sj.contains("omega")) {
        auto ov = sj["omega"].get<std::vector<double>>();
        if (ov.size() != 2) throw ValidationError("bad-config", "omega must have 2 entries");
        omega = Eigen::Vector2d(ov[0], ov[1]);
      }
      DecompResult dec =
          optimize_decomposition(scen.field, scen.region, 500, omega, seed, scen.xi0);
      SplitFields sf = split(scen.field, dec.nu, scen.xi0);
      spec.f_c = sf.f_c;
      spec.f_nc = sf.f_nc;
      ScalarField pot = sf.potential;
      spec.storage_potential = [pot](const Vec& x) { return pot.value(x); };
    }
  }

  if (sj.contains("x_init")) {
    auto xv = sj["x_init"].get<std::vector<double>>();
    if (static_cast<int>(xv.size()) != n) {
      throw ValidationError("bad-config", "x_init dimension mismatch");
    }
    spec.x_init = Eigen::Map<const Vec>(xv.data(), n);
  } else if (!scen.starts.empty()) {
    spec.x_init = scen.starts.front();
  } else {
    spec.x_init = xi0 + Vec::Constant(n, 0.2);
  }
  if (sj.contains("v_init")) {
    auto vv = sj["v_init"].get<std::vector<double>>();
    if (static_cast<int>(vv.size()) != n) {
      throw ValidationError("bad-config", "v_init dimension mismatch");
    }
    spec.v_init = Eigen::Map<const Vec>(vv.data(), n);
  } else {
    spec.v_init = Vec::Zero(n);
  }

  Plant plant = Plant::point_mass(n, mass);
  Trace trace = simulate(plant, spec, duration, dt, {}, {}, seed);
  trace.scenario = scenario.empty() ? model_path : scenario;
  write_trace_csv(out_path(out_dir, "trace.csv"), trace);

  json audit;
  if (trace.has_storage) {
    PassivityReport rep = passivity_audit(trace, sj.value("audit_tol", 1e-6));
    audit = rep.to_json();
    audit["audited"] = true;
  } else {
    audit["audited"] = false;
    audit["reason"] = "no storage function bound for this variant/scenario";
  }
  save_json(out_path(out_dir, "audit.json"), audit);
  return 0;
}

int cmd_decompose(const std::string& scenario, const json& cfg, const std::string& out_dir,
                  std::uint64_t seed) {
  check_keys(cfg, {"decompose", "seed"}, "config");
  json dj = cfg.value("decompose", json::object());
  check_keys(dj, {"omega", "n_samples", "grid_resolution"}, "decompose");
  ScenarioField scen = get_scenario(scenario);
  Eigen::Vector2d omega(1.0, 1.0);
  if (dj.contains("omega")) {
    auto ov = dj["omega"].get<std::vector<double>>();
    if (ov.size() != 2) throw ValidationError("bad-config", "omega must have 2 entries");
    omega = Eigen::Vector2d(ov[0], ov[1]);
  }
  int n_samples = dj.value("n_samples", 500);
  int res = dj.value("grid_resolution", 80);
  DecompResult dec =
      optimize_decomposition(scen.field, scen.region, n_samples, omega, seed, scen.xi0);
  save_json(out_path(out_dir, "decomp.json"), dec.to_json());
  SplitFields sf = split(scen.field, dec.nu, scen.xi0);
  write_grid_csv(out_path(out_dir, "fc_grid.csv"), sf.f_c, scen.region, res);
  write_grid_csv(out_path(out_dir, "fnc_grid.csv"), sf.f_nc, scen.region, res);
  return 0;
}

int cmd_check(const std::string& model_path, const std::string& scenario, const json& cfg,
              const std::string& out_dir, std::uint64_t seed) {
  check_keys(cfg, {"check", "seed"}, "config");
  json cj = cfg.value("check", json::object());
  check_keys(cj, {"n_probes", "n_loops"}, "check");
  int n_probes = cj.value("n_probes", 50);
  int n_loops = cj.value("n_loops", 20);

  Field field;
  Box region;
  if (!model_path.empty()) {
    PotentialModel model = read_model(model_path);
    field = model.field();
    Vec lo = model.path.control_points.rowwise().minCoeff();
    Vec hi = model.path.control_points.rowwise().maxCoeff();
    region = Box{lo, hi};
  } else if (!scenario.empty()) {
    ScenarioField scen = get_scenario(scenario);
    field = scen.field;
    region = scen.region;
  } else {
    throw ValidationError("bad-config", "check needs --model or --scenario");
  }
  json report = conservativeness_report(field, region, n_probes, n_loops, seed);
  save_json(out_path(out_dir, "report.json"), report);
  return 0;
}

int cmd_lift_example(const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  check_keys(cfg, {"learn", "lift", "grid_resolution", "seed"}, "config");
  DemoSet demos = demo_circle();
  write_demo_csv(out_path(out_dir, "circle_demo.csv"),
                 out_path(out_dir, "circle_demo.csv.json"), demos);
  LearnConfig lcfg = parse_learn_config(cfg, seed);
  LearnReport rep;
  LiftedModel lm = learn_lifted(demos, lcfg, 0.0, 1.0, true, &rep);
  write_lifted_model(out_path(out_dir, "model.json"), lm);
  Box box = demo_bounding_box(demos);
  write_grid_csv(out_path(out_dir, "grid.csv"), slice_field(lm, 0.5), box,
                 cfg.value("grid_resolution", 80));
  LiftedDemo ld = lift_trajectory(demos, 0.0, 1.0);
  json report = conservativeness_report(lm.model.field(), demo_bounding_box(ld.lifted), 50,
                                        20, seed);
  report["velocity_rmse"] = rep.velocity_rmse;
  report["mean_ref_speed"] = rep.mean_ref_speed;
  save_json(out_path(out_dir, "report.json"), report);
  return 0;
}

int cmd_rotate_example(const json& cfg, const std::string& out_dir, std::uint64_t seed) {
  check_keys(cfg, {"learn", "grid_resolution", "seed"}, "config");
  DemoSet demos = demo_sphere_arc();
  write_demo_csv(out_path(out_dir, "sphere_demo.csv"),
                 out_path(out_dir, "sphere_demo.csv.json"), demos);
  LearnConfig lcfg = parse_learn_config(cfg, seed);
  LearnReport rep;
  SphereModel sm = learn_sphere_ds(demos, lcfg, &rep);
  json mj = sm.model.to_json();
  mj["type"] = "sphere";
  mj["pole_margin"] = sm.chart.pole_margin;
  save_json(out_path(out_dir, "model.json"), mj);
  DemoSet chart_demos = pull_back_demos(sm.chart, demos);
  Box cbox = demo_bounding_box(chart_demos);
  write_grid_csv(out_path(out_dir, "grid.csv"), sm.chart_field(), cbox,
                 cfg.value("grid_resolution", 80));
  json report = conservativeness_report(sm.chart_field(), cbox, 50, 20, seed);
  report["velocity_rmse"] = rep.velocity_rmse;
  report["mean_ref_speed"] = rep.mean_ref_speed;
  save_json(out_path(out_dir, "report.json"), report);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"conds: conservative dynamical systems from demonstrations"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", demo_path, sidecar_path, model_path, scenario;
  std::int64_t seed_flag = -1;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_flag, "seed override");
  app.add_option("--out", out_dir, "output directory");

  CLI::App* learn = app.add_subcommand("learn", "learn a conservative DS from demos");
  learn->add_option("--demo", demo_path, "demo CSV")->required();
  learn->add_option("--sidecar", sidecar_path, "metadata JSON (default <demo>.json)");

  CLI::App* sim = app.add_subcommand("simulate", "closed-loop simulation");
  sim->add_option("--model", model_path, "model JSON");
  sim->add_option("--scenario", scenario, "analytic scenario id");

  CLI::App* dec = app.add_subcommand("decompose", "conservative/non-conservative split");
  dec->add_option("--scenario", scenario, "analytic scenario id")->required();

  CLI::App* chk = app.add_subcommand("check", "conservativeness report");
  chk->add_option("--model", model_path, "model JSON");
  chk->add_option("--scenario", scenario, "analytic scenario id");

  app.add_subcommand("lift", "end-to-end lifted-circle example");
  app.add_subcommand("rotate-demo", "end-to-end S2 arc example");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    json cfg = config_path.empty() ? json::object() : load_json(config_path);
    if (!cfg.is_object()) throw ValidationError("bad-config", "config must be an object");
    std::uint64_t seed = cfg.value("seed", std::uint64_t{0});
    if (seed_flag >= 0) seed = static_cast<std::uint64_t>(seed_flag);

    if (app.got_subcommand("learn")) {
      return cmd_learn(demo_path, sidecar_path, cfg, out_dir, seed);
    }
    if (app.got_subcommand("simulate")) {
      return cmd_simulate(model_path, scenario, cfg, out_dir, seed);
    }
    if (app.got_subcommand("decompose")) {
      return cmd_decompose(scenario, cfg, out_dir, seed);
    }
    if (app.got_subcommand("check")) {
      return cmd_check(model_path, scenario, cfg, out_dir, seed);
    }
    if (app.got_subcommand("lift")) return cmd_lift_example(cfg, out_dir, seed);
    if (app.got_subcommand("rotate-demo")) return cmd_rotate_example(cfg, out_dir, seed);
    throw ValidationError("bad-config", "no subcommand given");
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace conds
