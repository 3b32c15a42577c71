#pragma once

#include "conds/fields.hpp"
#include "conds/gp.hpp"

#include <optional>
#include <vector>

namespace conds {

struct Trajectory {
  Vec times;        // strictly increasing
  Mat points;       // n x N
  Mat velocities;   // n x N; derived by central differences when absent
  bool velocities_derived = false;
};

struct DemoSet {
  std::vector<Trajectory> trajectories;
  Vec equilibrium;
  // Optional externally supplied control points replacing the V0-V1 path stage.
  std::optional<Mat> external_control_points;

  int dim() const { return static_cast<int>(equilibrium.size()); }
  void validate() const;
};

// Fill in missing velocities by central differences over the recorded times.
void derive_missing_velocities(DemoSet& demos);
Box demo_bounding_box(const DemoSet& demos);
Mat stack_points(const DemoSet& demos);
Mat stack_velocities(const DemoSet& demos);

struct LearnConfig {
  int n_control_points = 50;     // N_s
  double epsilon = 1e-3;         // ramp floor
  double mu_frac = 0.03;         // expansion offset, fraction of demo bbox diagonal
  int normal_count = 0;          // l; 0 = auto (2 for n=2, 2(n-1) otherwise)
  double r_excl_frac = 0.02;     // constraint-sample exclusion around xi0
  double inflate = 1.25;         // constraint-sample box inflation
  int n_constraint_samples = 128;
  double delta_pos = 1e-6;
  double delta_grad = 1e-6;
  double delta_mono_frac = 1e-4;  // of y_max (gauge y_max = 1)
  double r_stop_frac = 0.01;      // path termination, fraction of bbox diagonal
  double horizon = 0.0;           // integral-path horizon; 0 = 3x mean demo duration
  double rk4_dt_frac = 1e-3;      // RK4 step as a fraction of the horizon
  int max_outer_iters = 3;        // QCQP / NLML alternations
  double tol_iter = 1e-3;
  int v1_search_sweeps = 2;
  int nlml_sweeps = 2;
  int max_demo_gp_points = 120;   // notch-GP subsample cap
  double b_lower = 0.0;
  double b_upper = 1e3;
  std::uint64_t seed = 0;
};

// V0 + notch: the composite V1 whose integral path carries the demo geometry.
struct PathModel {
  Mat P_star;            // symmetric PD
  double a = 1.0;        // radial notch-closure rate
  double b = 1.0;        // notch weight
  double epsilon = 1e-3;
  Hyperparams theta1;
  GpModel notch_gp;      // theta1 over reference points, all-ones targets
  Mat control_points;    // n x N_s, ordered along the integral path
  Mat tangents;          // f1 = -grad V1 at the control points
  Vec equilibrium;

  double radial(const Vec& xi) const;       // r_a = exp(-a |xi-xi0|^2)
  double v_tank(const Vec& xi) const;
  Vec grad_v_tank(const Vec& xi) const;
  double v1(const Vec& xi) const;
  Vec grad_v1(const Vec& xi) const;
  Field f1_field() const;  // xi_dot = -grad V1
};

struct LinearCoeffs {
  Eigen::RowVectorXd a_row;  // V_p(xi; y) = a_row y + b_scalar
  double b_scalar = 0.0;
  Mat A_mat;                 // f_p(xi; y) = A_mat y + B_vec
  Vec B_vec;
};

struct Expansion {
  Mat x_sim_all;  // n x (l+1) N_s: [X_sim, X_sim + mu N_1, ...]
  int l = 0;
};

// The learned conservative potential V_p = Phi + V2 (through the generator
// transform that pins V_p(xi0) = 0 and f_p(xi0) = 0 exactly).
class PotentialModel {
 public:
  PathModel path;
  Mat expanded;          // X_SimAll
  double mu = 0.0;
  int l = 0;
  Hyperparams theta2;
  Vec y;                 // ramp targets at control points
  GpModel ramp_ones;     // V21: theta1 over expanded points, all-ones targets
  GpModel ramp_y;        // V22: theta2 over expanded points, stacked y targets
  std::vector<Mat> S;    // base-function anchors S_i
  Vec delta;             // blend widths delta_i
  double a_radial = 1.0;
  // Decay rate of the localized equilibrium correction that pins
  // V_p(xi0) = 0 and f_p(xi0) = 0 without a global constant-field bias.
  double a_corr = 0.0;
  double epsilon = 1e-3;
  Vec xi0;
  double kappa = 1.0;    // absorbed velocity scale (bookkeeping only)

  // Recompute caches after any change to y / theta2 / geometry.
  void refresh();

  double vp(const Vec& xi) const;
  Vec fp(const Vec& xi) const;
  // Evaluation with an alternative y through an explicit kernel solve
  // (independent route from coeffs(), used to certify affinity).
  double vp_with(const Vec& xi, const Vec& y_alt) const;
  Vec fp_with(const Vec& xi, const Vec& y_alt) const;

  LinearCoeffs coeffs(const Vec& xi) const;

  double phi(const Vec& xi) const;
  Vec grad_phi(const Vec& xi) const;

  Field field() const;
  int n_control_points() const { return static_cast<int>(y.size()); }

  nlohmann::json to_json() const;
  static PotentialModel from_json(const nlohmann::json& j);

 private:
  struct RawCoeffs {
    Eigen::RowVectorXd a;  // g(xi; y) = a y + b
    double b = 0.0;
    Mat A;                 // grad g(xi; y) = A y + B
    Vec B;
  };
  RawCoeffs raw(const Vec& xi) const;

  Vec alpha21_;            // (K1 + noise)^{-1} 1
  Mat M_;                  // (K2 + noise)^{-1} R, N_all x N_s
  Vec alpha22_;            // M_ y
  Eigen::RowVectorXd a0_;  // raw coefficients at xi0
  double b0_ = 0.0;
  Mat A0_;
  Vec B0_;
  double g0_val_ = 0.0;
  Vec g0_grad_;
};

Mat fit_v0(const DemoSet& demos);

// Geometric prior used to initialize the V1 optimization: notch open across
// the demo span, weight making the notch dominate V0 along the references.
// Exposed so the optimizer's improve-on-initial-guess contract is checkable.
struct V1Init {
  double a = 1.0;
  double b = 1.0;
  Hyperparams theta1;
};
V1Init v1_initial_guess(const DemoSet& demos, const LearnConfig& cfg);

PathModel build_v1(const DemoSet& demos, const LearnConfig& cfg);

struct IntegralPath {
  Mat raw_points;      // RK4 samples before resampling
  Mat control_points;  // n x N_s, equal arc-length spacing
  Mat tangents;        // field re-evaluated at the control points
  double path_length = 0.0;
};

IntegralPath integrate_path(const Field& f1, const Vec& start, const Vec& xi0,
                            double t_end, double dt, int n_s, double r_stop);

Expansion expand_control_points(const Mat& points, const Mat& tangents, double mu, int l);

// Stacks y (l+1) times to match the expanded point set.
Vec stack_targets(const Vec& y, int l);

Mat sample_constraint_points(const DemoSet& demos, double inflate, int n_a,
                             std::uint64_t seed, double r_excl);

struct QcqpProblem {
  std::vector<LinearCoeffs> refs;
  Mat ref_vels;  // n x N_ref
  std::vector<LinearCoeffs> samples;
  double delta_pos = 1e-6;
  double delta_grad = 1e-6;
  double delta_mono = 1e-4;
};

struct QcqpResult {
  Vec y;
  double objective = 0.0;
  bool ls_fast_path = false;
  double worst_violation = 0.0;
};

// Ramp fit under monotonicity / positivity / gradient-norm constraints.
// Gauge: y_{N_s} = y_{N_s-1} = 1 (eliminated); overall slope is absorbed
// into the model scale afterwards.
QcqpResult solve_qcqp(const QcqpProblem& prob, const Vec& y_init);

struct LearnReport {
  std::vector<double> qcqp_objectives;  // non-increasing across y-steps
  std::vector<double> nlml_log;
  double velocity_rmse = 0.0;           // against the reference set actually fit
  double mean_ref_speed = 0.0;
  double kappa = 1.0;
  int iterations = 0;
};

PotentialModel optimize_iterative(const DemoSet& demos, const LearnConfig& cfg,
                                  LearnReport* report = nullptr);

}  // namespace conds
