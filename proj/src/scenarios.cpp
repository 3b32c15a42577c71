#include "conds/scenarios.hpp"

#include <cmath>
#include <numbers>

namespace conds {

namespace {

constexpr double kPi = std::numbers::pi;

// Build a trajectory from an analytic curve p(u), u in [0,1], with an
// exponential ease-out time profile so velocities taper toward the target.
Trajectory sample_curve(const std::function<Vec(double)>& p,
                        const std::function<Vec(double)>& dp, double duration,
                        int n_points, double ease = 3.0) {
  Trajectory tr;
  tr.times.resize(n_points);
  const int n = static_cast<int>(p(0.0).size());
  tr.points.resize(n, n_points);
  tr.velocities.resize(n, n_points);
  double denom = 1.0 - std::exp(-ease);
  for (int i = 0; i < n_points; ++i) {
    double tau = static_cast<double>(i) / (n_points - 1);
    double u = ease > 0.0 ? (1.0 - std::exp(-ease * tau)) / denom : tau;
    double du = ease > 0.0 ? ease * std::exp(-ease * tau) / denom : 1.0;
    tr.times[i] = duration * tau;
    tr.points.col(i) = p(u);
    tr.velocities.col(i) = dp(u) * du / duration;
  }
  return tr;
}

}  // namespace

DemoSet demo_l_shape(int n_points, int n_traj) {
  // Rounded L from (0, ~1) down to the corner and out to (~1, 0):
  // softplus arms x = g(u - 1/2), y = g(1/2 - u) with corner radius h.
  const double h = 0.08, scale = 2.0;
  auto g = [h](double v) { return h * std::log1p(std::exp(v / h)); };
  auto dg = [h](double v) { return 1.0 / (1.0 + std::exp(-v / h)); };
  auto base = [&](double u) -> Vec {
    Vec q(2);
    q << scale * g(u - 0.5), scale * g(0.5 - u);
    return q;
  };
  auto dbase = [&](double u) -> Vec {
    Vec q(2);
    q << scale * dg(u - 0.5), -scale * dg(0.5 - u);
    return q;
  };
  DemoSet demos;
  demos.equilibrium = base(1.0);
  for (int k = 0; k < n_traj; ++k) {
    double off = 0.04 * (k - 0.5 * (n_traj - 1));
    auto p = [&, off](double u) -> Vec {
      Vec q = base(u);
      q[0] += off * (1.0 - u);
      q[1] += off * (1.0 - u);
      return q;
    };
    auto dp = [&, off](double u) -> Vec {
      Vec q = dbase(u);
      q[0] -= off;
      q[1] -= off;
      return q;
    };
    demos.trajectories.push_back(sample_curve(p, dp, 4.0, n_points));
  }
  return demos;
}

DemoSet demo_sine(int n_points, int n_traj) {
  auto base = [](double u) -> Vec {
    Vec q(2);
    q << 1.0 - u, 0.2 * std::sin(2.0 * kPi * (1.0 - u));
    return q;
  };
  auto dbase = [](double u) -> Vec {
    Vec q(2);
    q << -1.0, -0.4 * kPi * std::cos(2.0 * kPi * (1.0 - u));
    return q;
  };
  DemoSet demos;
  demos.equilibrium = base(1.0);
  for (int k = 0; k < n_traj; ++k) {
    double off = 0.03 * (k - 0.5 * (n_traj - 1));
    auto p = [&, off](double u) -> Vec {
      Vec q = base(u);
      q[1] += off * (1.0 - u);
      return q;
    };
    auto dp = [&, off](double u) -> Vec {
      Vec q = dbase(u);
      q[1] -= off;
      return q;
    };
    demos.trajectories.push_back(sample_curve(p, dp, 4.0, n_points, 1.5));
  }
  return demos;
}

DemoSet demo_circle(int n_points, int n_traj) {
  const double R = 0.5;
  DemoSet demos;
  for (int k = 0; k < n_traj; ++k) {
    // Mid-path radial wobble that vanishes at the (shared) start/end point.
    double amp = 0.02 * k;
    auto p = [R, amp](double u) -> Vec {
      double r = R + amp * std::sin(kPi * u) * std::sin(kPi * u);
      double a = 2.0 * kPi * u;
      Vec q(2);
      q << r * std::cos(a), r * std::sin(a);
      return q;
    };
    auto dp = [R, amp](double u) -> Vec {
      double r = R + amp * std::sin(kPi * u) * std::sin(kPi * u);
      double dr = amp * kPi * std::sin(2.0 * kPi * u);
      double a = 2.0 * kPi * u;
      Vec q(2);
      q << dr * std::cos(a) - 2.0 * kPi * r * std::sin(a),
           dr * std::sin(a) + 2.0 * kPi * r * std::cos(a);
      return q;
    };
    // Constant speed: closed curves have no natural stopping point.
    demos.trajectories.push_back(sample_curve(p, dp, 5.0, n_points, 0.0));
  }
  Vec eq(2);
  eq << R, 0.0;
  demos.equilibrium = eq;
  return demos;
}

DemoSet demo_figure_eight(int n_points, int n_traj) {
  DemoSet demos;
  for (int k = 0; k < n_traj; ++k) {
    double s = 1.0 + 0.03 * k;
    auto p = [s](double u) -> Vec {
      double a = 2.0 * kPi * u;
      Vec q(2);
      q << s * std::sin(a), 0.5 * s * std::sin(2.0 * a);
      return q;
    };
    auto dp = [s](double u) -> Vec {
      double a = 2.0 * kPi * u;
      Vec q(2);
      q << 2.0 * kPi * s * std::cos(a), 2.0 * kPi * s * std::cos(2.0 * a);
      return q;
    };
    demos.trajectories.push_back(sample_curve(p, dp, 6.0, n_points, 0.0));
  }
  demos.equilibrium = Vec::Zero(2);
  return demos;
}

DemoSet demo_sphere_arc(int n_points, int n_traj) {
  // Gentle arc in the spherical chart, well clear of both poles.
  auto theta = [](double u) -> Vec {
    Vec t(2);
    t << 1.8 - 0.8 * u, 0.2 + 0.8 * u + 0.3 * std::sin(kPi * u);
    return t;
  };
  auto dtheta = [](double u) -> Vec {
    Vec t(2);
    t << -0.8, 0.8 + 0.3 * kPi * std::cos(kPi * u);
    return t;
  };
  auto embed = [](const Vec& t) -> Vec {
    Vec r(3);
    r << std::sin(t[0]) * std::cos(t[1]), std::sin(t[0]) * std::sin(t[1]), std::cos(t[0]);
    return r;
  };
  auto jac = [](const Vec& t) -> Mat {
    double s1 = std::sin(t[0]), c1 = std::cos(t[0]);
    double s2 = std::sin(t[1]), c2 = std::cos(t[1]);
    Mat J(3, 2);
    J << c1 * c2, -s1 * s2, c1 * s2, s1 * c2, -s1, 0.0;
    return J;
  };
  DemoSet demos;
  demos.equilibrium = embed(theta(1.0));
  for (int k = 0; k < n_traj; ++k) {
    double off = 0.05 * (k - 0.5 * (n_traj - 1));
    auto p = [&, off](double u) -> Vec {
      Vec t = theta(u);
      t[0] += off * (1.0 - u);
      return embed(t);
    };
    auto dp = [&, off](double u) -> Vec {
      Vec t = theta(u);
      t[0] += off * (1.0 - u);
      Vec td = dtheta(u);
      td[0] -= off;
      return jac(t) * td;
    };
    demos.trajectories.push_back(sample_curve(p, dp, 4.0, n_points));
  }
  return demos;
}

Field swirl_field() {
  Field f;
  f.dim = 2;
  f.eval = [](const Vec& x) -> Vec {
    Vec v(2);
    v << -x[1], x[0];
    return v;
  };
  f.jac = [](const Vec&) -> Mat {
    Mat J(2, 2);
    J << 0.0, -1.0, 1.0, 0.0;
    return J;
  };
  return f;
}

Field SnakeScenario::field() const {
  Vec x0 = xi0;
  double w = w0, kk = k;
  Field f;
  f.dim = 2;
  f.eval = [x0, w, kk](const Vec& x) -> Vec {
    Vec d = x - x0;
    double m = w * std::sin(kk * x[0]);
    Vec rot(2);
    rot << -d[1], d[0];
    return -d + m * rot;
  };
  f.jac = [x0, w, kk](const Vec& x) -> Mat {
    Vec d = x - x0;
    double m = w * std::sin(kk * x[0]);
    double dm = w * kk * std::cos(kk * x[0]);
    Mat J(2, 2);
    J << -1.0 - dm * d[1], -m, m + dm * d[0], -1.0;
    return J;
  };
  return f;
}

SnakeScenario snake_scenario() {
  SnakeScenario s;
  s.xi0 = Vec::Zero(2);
  Vec lo(2), hi(2);
  lo << -1.5, -1.5;
  hi << 1.5, 1.5;
  s.region = Box{lo, hi};
  for (double sx : {-1.2, 1.2}) {
    for (double sy : {-1.2, 1.2}) {
      Vec st(2);
      st << sx, sy;
      s.starts.push_back(st);
    }
  }
  return s;
}

Field StiffnessExemplar::field() const {
  Field f;
  f.dim = static_cast<int>(K.rows());
  Mat Kc = K;
  Vec x0 = xi0;
  f.eval = [Kc, x0](const Vec& x) -> Vec { return Kc * (x - x0); };
  f.jac = [Kc](const Vec&) -> Mat { return Kc; };
  return f;
}

std::array<StiffnessExemplar, 4> stiffness_exemplars() {
  std::array<StiffnessExemplar, 4> out;
  Vec zero = Vec::Zero(2);

  out[0].name = "exact only";
  out[0].K.resize(2, 2);
  out[0].K << -1.0, 2.0, 0.0, -1.0;  // sym part has a zero eigenvalue
  out[0].xi0 = zero;
  out[0].symmetric = false;
  out[0].negative_definite = false;

  out[1].name = "exact + symmetric";
  out[1].K.resize(2, 2);
  out[1].K << 1.0, 0.0, 0.0, -1.0;  // saddle
  out[1].xi0 = zero;
  out[1].symmetric = true;
  out[1].negative_definite = false;

  out[2].name = "exact + negative definite";
  out[2].K.resize(2, 2);
  out[2].K << -2.0, 1.0, -1.0, -2.0;  // skew part nonzero, sym part -2I
  out[2].xi0 = zero;
  out[2].symmetric = false;
  out[2].negative_definite = true;

  out[3].name = "exact + symmetric + negative definite";
  out[3].K.resize(2, 2);
  out[3].K << -2.0, 0.0, 0.0, -1.0;
  out[3].xi0 = zero;
  out[3].symmetric = true;
  out[3].negative_definite = true;

  return out;
}

DemoSet demo_surface_circle(int n_points, int n_traj) {
  SurfaceScenarioConfig sc = surface_scenario_config();
  DemoSet demos;
  for (int k = 0; k < n_traj; ++k) {
    double rr = sc.r * (1.0 + 0.05 * k);
    auto p = [&, rr](double u) -> Vec {
      double a = 2.0 * kPi * u;
      Vec q(3);
      q << sc.p_c[0] + rr * std::cos(a), sc.p_c[1] + rr * std::sin(a), sc.p_c[2];
      return q;
    };
    auto dp = [rr](double u) -> Vec {
      double a = 2.0 * kPi * u;
      Vec q(3);
      q << -2.0 * kPi * rr * std::sin(a), 2.0 * kPi * rr * std::cos(a), 0.0;
      return q;
    };
    // Closed wipe circle at the nominal tangential speed.
    demos.trajectories.push_back(
        sample_curve(p, dp, 2.0 * kPi * rr / sc.v0, n_points, 0.0));
  }
  Vec eq(3);
  eq << sc.p_c[0] + sc.r, sc.p_c[1], sc.p_c[2];
  demos.equilibrium = eq;
  return demos;
}

SurfaceScenarioConfig surface_scenario_config() {
  SurfaceScenarioConfig cfg;
  cfg.p_o = Vec::Zero(3);
  cfg.shell_radius = 0.5;
  // Wipe circle on the shell's upper cap: the circle plane sits at the
  // height where a radius-r circle lies on the shell.
  double h = std::sqrt(cfg.shell_radius * cfg.shell_radius - cfg.r * cfg.r);
  cfg.p_c = Vec::Zero(3);
  cfg.p_c[2] = h;
  cfg.depletion_start.resize(3);
  cfg.depletion_start << cfg.p_c[0] + 0.15, cfg.p_c[1] + 0.02, cfg.p_c[2] - 0.18;
  Vec lo(3), hi(3);
  lo << -0.3, -0.3, cfg.p_c[2] - 0.22;
  hi << 0.3, 0.3, cfg.p_c[2] + 0.15;
  cfg.decomp_region = Box{lo, hi};
  return cfg;
}

}  // namespace conds
