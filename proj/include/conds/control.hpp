#pragma once

#include "conds/fields.hpp"
#include "conds/lift.hpp"

#include <nlohmann/json.hpp>

#include <limits>
#include <string>
#include <vector>

namespace conds {

struct Plant {
  enum class Kind { PointMass, TwoLinkPlanar };
  Kind kind = Kind::PointMass;
  int n = 2;           // state dimension (2 for the two-link arm)
  double mass = 1.0;   // point mass
  // two-link parameters (point masses at the link ends)
  double m1 = 1.0, m2 = 1.0, l1 = 0.5, l2 = 0.5, gravity = 9.81;

  Mat M(const Vec& q) const;
  Mat C(const Vec& q, const Vec& qd) const;
  Vec G(const Vec& q) const;

  static Plant point_mass(int n, double mass);
  static Plant two_link(double m1, double m2, double l1, double l2, double gravity);
};

enum class ControllerVariant { PassiveDs, Tank, SplitTank, Projection };

std::string to_string(ControllerVariant v);

struct TankParams {
  double s_lower = 0.0;
  double s_upper = 5.0;
  double width_frac = 0.05;  // gate width as a fraction of (s_upper - s_lower)
  double s0 = -1.0;          // initial energy; < 0 means start full
  bool hard_beta = false;    // hard-switch test mode (oscillation reproduction)
};

struct ControllerSpec {
  ControllerVariant variant = ControllerVariant::PassiveDs;
  Vec lambdas;              // damping eigenvalues; lambdas[0] doubles as the field gain
  double lambda_gain = 1.0; // sweep multiplier on the nominal DS
  Field f;                  // nominal field (passive_ds / tank)
  Field f_c;                // split_tank conservative part (empty = zero)
  Field f_nc;               // split_tank non-conservative part
  const LiftedModel* lifted = nullptr;  // projection variant
  double w_init = 0.0;
  TankParams tank;
  double eps_vel = 1e-9;
  Vec x_init;
  Vec v_init;
  bool flip_damping = false;  // negative-test mode: anti-passive by construction
  // Potential used for storage logging: W = 0.5 v' M v + lambda_1 V(x).
  // For the projection variant the lifted potential is used automatically.
  std::function<double(const Vec&)> storage_potential;
};

struct StepRecord {
  double t = 0.0;
  Vec x, v, tau_c, tau_e;
  double s = 0.0;
  double alpha = 0.0, beta = 0.0;
  double W = std::numeric_limits<double>::quiet_NaN();
  double Wdot = 0.0;
  double w_virtual = 0.0;
  bool wrapped = false;
};

struct Trace {
  std::vector<StepRecord> steps;
  double dt = 1e-3;
  std::string scenario;
  std::uint64_t seed = 0;
  ControllerVariant variant = ControllerVariant::PassiveDs;
  bool has_storage = false;
};

struct Perturbation {
  double t0 = 0.0, t1 = 0.0;
  Vec force;
};

struct Contact {
  enum class Kind { None, Plane, SphereInside };
  Kind kind = Kind::None;
  Vec point;    // plane anchor or sphere center
  Vec normal;   // plane outward normal (penetration when (x - point) . normal < 0)
  double radius = 0.0;  // SphereInside: shell radius, robot inside pushing outward
  double k_c = 1e4;
  double d_c = 50.0;
  double tangential_damping = 0.0;

  Vec force(const Vec& x, const Vec& v) const;
};

Mat damping_matrix(const Vec& f_val, const Vec& lambdas, double eps_vel = 1e-9);

// Closed-loop semi-implicit Euler simulation at fixed dt.
Trace simulate(const Plant& plant, const ControllerSpec& spec, double duration, double dt,
               const std::vector<Perturbation>& perturbations = {},
               const Contact& contact = {}, std::uint64_t seed = 0);

struct PassivityReport {
  bool pass = false;
  double max_excess = 0.0;  // max over steps of Wdot - v' tau_e (tank: + s_dot)
  double max_wdot = 0.0;
  double tol = 0.0;
  bool tank_mode = false;
  int n_steps = 0;

  nlohmann::json to_json() const;
};

// Discrete passivity audit on a recorded trace. For tank variants the audited
// inequality is Wdot - v' tau_e <= -s_dot + tol (the tank absorbs the deficit).
PassivityReport passivity_audit(const Trace& trace, double tol);

struct SurfaceFields {
  Field f_cir;
  Field f_t;
  Field f_n;
  Field f;  // f_t + f_n
};

SurfaceFields surface_scenario_fields(const Vec& p_c, double r, const Vec& p_o, double v_t,
                                      double v_w, double v_z, double v0, double F_d,
                                      double lambda1, double eps_vel = 1e-9);

}  // namespace conds
