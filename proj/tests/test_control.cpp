#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "conds/control.hpp"
#include "conds/decomp.hpp"
#include "conds/scenarios.hpp"

#include <cmath>
#include <random>

using namespace conds;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Field linear_sink(const Mat& K, const Vec& xi0) {
  Field f;
  f.dim = static_cast<int>(K.rows());
  f.eval = [K, xi0](const Vec& x) { return (K * (x - xi0)).eval(); };
  f.jac = [K](const Vec&) { return K; };
  return f;
}

bool traces_identical(const Trace& a, const Trace& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (size_t k = 0; k < a.steps.size(); ++k) {
    if (a.steps[k].x != b.steps[k].x) return false;
    if (a.steps[k].v != b.steps[k].v) return false;
    if (a.steps[k].tau_c != b.steps[k].tau_c) return false;
    if (a.steps[k].s != b.steps[k].s) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("damping matrix aligns its first eigenvector with the field") {
  Vec lam = vec2(2.0, 3.0);

  Mat D = damping_matrix(vec2(1.0, 0.0), lam);
  CHECK((D - (Mat(2, 2) << 2, 0, 0, 3).finished()).cwiseAbs().maxCoeff() < 1e-14);

  D = damping_matrix(vec2(0.0, 1.0), lam);
  CHECK((D - (Mat(2, 2) << 3, 0, 0, 2).finished()).cwiseAbs().maxCoeff() < 1e-14);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 25; ++k) {
    Vec f = vec2(u(rng), u(rng));
    if (f.norm() < 1e-3) continue;
    Mat Dk = damping_matrix(f, lam);
    CHECK((Dk - Dk.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Vec e1 = f.normalized();
    CHECK((Dk * e1 - lam[0] * e1).norm() < 1e-12);
    CHECK(Dk.trace() == doctest::Approx(lam.sum()).epsilon(1e-12));
  }

  // degenerate field direction falls back to isotropic lambda_1
  D = damping_matrix(vec2(0.0, 1e-12), lam);
  CHECK((D - 2.0 * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("two-link plant: skew symmetry and near-conservative free swing") {
  Plant plant = Plant::two_link(1.0, 1.0, 0.5, 0.5, 9.81);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);

  for (int k = 0; k < 20; ++k) {
    Vec q = vec2(u(rng), u(rng));
    Vec qd = vec2(u(rng), u(rng));
    Mat M = plant.M(q);
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(M.ldlt().info() == Eigen::Success);
    CHECK(M.determinant() > 0.0);

    double h = 1e-6;
    Mat Mdot = (plant.M(q + h * qd) - plant.M(q - h * qd)) / (2.0 * h);
    Mat S = Mdot - 2.0 * plant.C(q, qd);
    CHECK((S + S.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  }

  // gravity compensation only: kinetic energy drift bounded by the integrator
  ControllerSpec spec;
  spec.variant = ControllerVariant::PassiveDs;
  spec.lambdas = Vec::Constant(2, 1e-12);  // vanishing damping
  Field zero;
  zero.dim = 2;
  zero.eval = [](const Vec&) { return Vec::Zero(2).eval(); };
  spec.f = zero;
  spec.x_init = vec2(0.4, -0.2);
  spec.v_init = vec2(0.6, -0.3);
  Trace tr = simulate(plant, spec, 10.0, 1e-3);
  auto kin = [&](const StepRecord& r) { return 0.5 * r.v.dot(plant.M(r.x) * r.v); };
  double e0 = kin(tr.steps.front());
  double e1 = kin(tr.steps.back());
  CHECK(std::abs(e1 - e0) <= 0.005 * e0);
}

TEST_CASE("pure gravity compensation at the equilibrium") {
  Plant plant = Plant::two_link(1.2, 0.8, 0.5, 0.4, 9.81);
  Vec xi0 = vec2(0.3, 0.7);
  ControllerSpec spec;
  spec.variant = ControllerVariant::PassiveDs;
  spec.lambdas = vec2(2.0, 1.0);
  spec.f = linear_sink(-Mat::Identity(2, 2), xi0);
  spec.x_init = xi0;
  spec.v_init = Vec::Zero(2);
  Trace tr = simulate(plant, spec, 2e-3, 1e-3);
  CHECK((tr.steps.front().tau_c - plant.G(xi0)).norm() < 1e-12);
}

TEST_CASE("closed loop converges on a conservative field") {
  Plant plant = Plant::point_mass(2, 1.0);
  Vec xi0 = vec2(0.5, -0.5);
  ControllerSpec spec;
  spec.lambdas = vec2(2.0, 2.0);
  spec.f = linear_sink(-Mat::Identity(2, 2), xi0);
  spec.x_init = vec2(-1.0, 1.0);
  Trace tr = simulate(plant, spec, 15.0, 1e-3);
  CHECK((tr.steps.back().x - xi0).norm() < 1e-2);
}

TEST_CASE("simulation validation and divergence guard") {
  Plant plant = Plant::point_mass(2, 1.0);
  ControllerSpec spec;
  spec.lambdas = vec2(2.0, 2.0);
  spec.f = linear_sink(-Mat::Identity(2, 2), Vec::Zero(2));
  spec.x_init = vec2(1.0, 0.0);

  CHECK_THROWS_AS(simulate(plant, spec, 1.0, 5e-3), ValidationError);
  CHECK_THROWS_AS(simulate(plant, spec, -1.0, 1e-3), ValidationError);

  spec.flip_damping = true;  // energy pump: the state must blow past the guard
  CHECK_THROWS_AS(simulate(plant, spec, 20.0, 1e-3), SolverError);
}

TEST_CASE("tank behavior: charge-only, bounds, and drain on the swirl") {
  Plant plant = Plant::point_mass(2, 1.0);

  SUBCASE("conservative field through the plain tank only recharges") {
    ControllerSpec spec;
    spec.variant = ControllerVariant::SplitTank;
    spec.lambdas = vec2(2.0, 2.0);
    spec.f_c = linear_sink(-Mat::Identity(2, 2), Vec::Zero(2));
    Field zero;
    zero.dim = 2;
    zero.eval = [](const Vec&) { return Vec::Zero(2).eval(); };
    spec.f_nc = zero;
    spec.x_init = vec2(1.5, -1.0);
    spec.tank.s0 = 1.0;
    Trace tr = simulate(plant, spec, 10.0, 1e-3);
    for (size_t k = 1; k < tr.steps.size(); ++k) {
      CHECK(tr.steps[k].s >= tr.steps[k - 1].s - 1e-12);
      CHECK(tr.steps[k].s >= spec.tank.s_lower);
      CHECK(tr.steps[k].s <= spec.tank.s_upper);
    }
    CHECK(tr.steps.back().s > 1.0);  // damping recharges while it moves
  }

  SUBCASE("swirl drains the tank strictly while the beta gate is open") {
    ControllerSpec spec;
    spec.variant = ControllerVariant::Tank;
    spec.lambdas = vec2(2.0, 2.0);
    spec.f = swirl_field();
    spec.x_init = vec2(1.0, 0.0);
    spec.v_init = spec.f.eval(spec.x_init);  // tracking the reference velocity
    // start full: the charge gate alpha is shut, so v.f > 0 must drain
    Trace tr = simulate(plant, spec, 6.0, 1e-3);
    bool saw_drain = false;
    for (size_t k = 1; k < tr.steps.size(); ++k) {
      const auto& a = tr.steps[k - 1];
      const auto& b = tr.steps[k];
      CHECK(b.s >= spec.tank.s_lower);
      CHECK(b.s <= spec.tank.s_upper);
      if (a.beta == 1.0 && a.alpha == 0.0 && a.v.dot(spec.f.eval(a.x)) > 0.1) {
        CHECK(b.s < a.s);
        saw_drain = true;
      }
    }
    CHECK(saw_drain);
    // while tracking, recharge and drain balance: the tank settles strictly
    // inside the band instead of refilling to the top
    CHECK(tr.steps.back().s < spec.tank.s_upper - 1e-3);
  }
}

TEST_CASE("variant equivalences") {
  Plant plant = Plant::point_mass(2, 1.0);
  SnakeScenario sc = snake_scenario();
  Field snake = sc.field();
  Field zero;
  zero.dim = 2;
  zero.eval = [](const Vec&) { return Vec::Zero(2).eval(); };

  ControllerSpec base;
  base.lambdas = vec2(2.0, 2.0);
  base.x_init = sc.starts[0];
  base.tank.s0 = 1.0;

  SUBCASE("plain tank equals split tank with f_c = 0, bit for bit") {
    ControllerSpec plain = base;
    plain.variant = ControllerVariant::Tank;
    plain.f = snake;

    ControllerSpec split_spec = base;
    split_spec.variant = ControllerVariant::SplitTank;
    split_spec.f_c = zero;
    split_spec.f_nc = snake;

    Trace a = simulate(plant, plain, 5.0, 1e-3);
    Trace b = simulate(plant, split_spec, 5.0, 1e-3);
    CHECK(traces_identical(a, b));
  }

  SUBCASE("split tank with zero non-conservative part equals passive DS") {
    Field cons = linear_sink(-2.0 * Mat::Identity(2, 2), sc.xi0);
    ControllerSpec split_spec = base;
    split_spec.variant = ControllerVariant::SplitTank;
    split_spec.f_c = cons;
    split_spec.f_nc = zero;

    ControllerSpec passive = base;
    passive.variant = ControllerVariant::PassiveDs;
    passive.f = cons;

    Trace a = simulate(plant, split_spec, 5.0, 1e-3);
    Trace b = simulate(plant, passive, 5.0, 1e-3);
    REQUIRE(a.steps.size() == b.steps.size());
    for (size_t k = 0; k < a.steps.size(); ++k) {
      CHECK((a.steps[k].tau_c - b.steps[k].tau_c).norm() < 1e-12);
      CHECK((a.steps[k].x - b.steps[k].x).norm() < 1e-12);
    }
  }
}

TEST_CASE("passivity audit: conservative pass and anti-passive failure") {
  Plant plant = Plant::point_mass(2, 1.0);
  Vec xi0 = vec2(0.2, -0.4);
  Mat K = Mat::Zero(2, 2);
  K.diagonal() << -2.0, -1.0;

  ControllerSpec spec;
  spec.lambdas = vec2(2.0, 1.5);
  spec.f = linear_sink(K, xi0);
  spec.x_init = vec2(-1.0, 0.8);
  spec.storage_potential = [xi0, K](const Vec& x) {
    Vec d = x - xi0;
    return 0.5 * d.dot((-K) * d);
  };

  Trace tr = simulate(plant, spec, 10.0, 1e-3);
  PassivityReport rep = passivity_audit(tr, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_wdot <= 1e-6);  // no input: the storage never grows

  // negative control: flipped damping pumps energy until the guard trips,
  // which counts as the strongest possible audit failure
  ControllerSpec bad = spec;
  bad.flip_damping = true;
  bool failed = false;
  try {
    Trace tb = simulate(plant, bad, 10.0, 1e-3);
    failed = !passivity_audit(tb, 1e-6).pass;
  } catch (const SolverError&) {
    failed = true;
  }
  CHECK(failed);

  // storage/variant mismatch is rejected
  ControllerSpec nostore = spec;
  nostore.storage_potential = nullptr;
  Trace tn = simulate(plant, nostore, 0.1, 1e-3);
  CHECK_THROWS_AS(passivity_audit(tn, 1e-6), ValidationError);
}

TEST_CASE("hard-switch beta reproduces post-depletion chatter") {
  Plant plant = Plant::point_mass(2, 1.0);
  SnakeScenario sc = snake_scenario();
  ControllerSpec spec;
  spec.variant = ControllerVariant::Tank;
  spec.lambdas = vec2(sc.lambda, sc.lambda);
  spec.f = sc.field();
  spec.x_init = sc.starts[1];
  spec.tank.s0 = sc.s0;
  spec.tank.hard_beta = true;
  Trace tr = simulate(plant, spec, 15.0, 1e-3);

  double t_dep = -1.0;
  for (const auto& r : tr.steps) {
    if (r.s <= spec.tank.s_lower + 1e-9) {
      t_dep = r.t;
      break;
    }
  }
  REQUIRE(t_dep >= 0.0);

  int toggles = 0;
  double horizon = 0.0;
  for (size_t k = 1; k < tr.steps.size(); ++k) {
    if (tr.steps[k].t <= t_dep) continue;
    horizon = tr.steps[k].t - t_dep;
    if ((tr.steps[k].beta > 0.5) != (tr.steps[k - 1].beta > 0.5)) ++toggles;
  }
  REQUIRE(horizon > 1.0);
  CHECK(toggles / horizon > 10.0);  // fast charge/discharge switching
}

TEST_CASE("steady contact force grows strictly with the controller gain") {
  Plant plant = Plant::point_mass(2, 1.0);
  Contact contact;
  contact.kind = Contact::Kind::Plane;
  contact.point = vec2(0.0, 0.0);
  contact.normal = vec2(0.0, 1.0);

  Vec target = vec2(0.0, -0.3);  // attractor below the plane: sustained press
  Field f = linear_sink(-2.0 * Mat::Identity(2, 2), target);

  double prev = -1.0;
  for (double gain : {0.8, 1.0, 1.2, 1.5}) {
    ControllerSpec spec;
    spec.lambdas = vec2(2.0, 2.0);
    spec.lambda_gain = gain;
    spec.f = f;
    spec.x_init = vec2(0.0, 0.4);
    Trace tr = simulate(plant, spec, 8.0, 1e-3, {}, contact);
    double force = 0.0;
    int count = 0;
    for (const auto& r : tr.steps) {
      if (r.t < 6.0) continue;
      force += r.tau_e.norm();
      ++count;
    }
    force /= count;
    CHECK(force > prev * 1.01);
    prev = force;
  }
}

TEST_CASE("contact model pushes along the normal only when penetrating") {
  Contact c;
  c.kind = Contact::Kind::Plane;
  c.point = vec2(0.0, 0.0);
  c.normal = vec2(0.0, 1.0);

  CHECK(c.force(vec2(0.3, 0.5), vec2(1.0, -1.0)).norm() == 0.0);
  Vec f = c.force(vec2(0.3, -0.01), Vec::Zero(2));
  CHECK(f[0] == 0.0);
  CHECK(f[1] == doctest::Approx(0.01 * c.k_c).epsilon(1e-12));
}

TEST_CASE("surface fields: tangential projection, speed, and force scaling") {
  SurfaceScenarioConfig sc = surface_scenario_config();
  double lambda1 = 2.0;
  SurfaceFields sf = surface_scenario_fields(sc.p_c, sc.r, sc.p_o, sc.v_t, sc.v_w, sc.v_z,
                                             sc.v0, sc.F_d, lambda1);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  while (checked < 50) {
    Vec dir(3);
    dir << u(rng), u(rng), u(rng);
    if (dir.norm() < 1e-3 || dir[2] > -0.1) continue;  // lower hemisphere probes
    Vec x = sc.p_o + sc.shell_radius * dir.normalized();
    Vec n = (x - sc.p_o).normalized();
    Vec ft = sf.f_t.eval(x);
    CHECK(std::abs(n.dot(ft)) < 1e-10);
    CHECK(ft.norm() == doctest::Approx(sc.v0).epsilon(1e-10));
    CHECK(sf.f_n.eval(x).norm() * lambda1 == doctest::Approx(sc.F_d).epsilon(1e-10));
    CHECK((sf.f.eval(x) - ft - sf.f_n.eval(x)).norm() < 1e-12);
    ++checked;
  }
}
