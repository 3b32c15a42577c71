#pragma once

#include "conds/common.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>

namespace conds {

// A first-order dynamical system xi_dot = f(xi). `jac` is optional; when
// present it must agree with finite differences.
struct Field {
  int dim = 0;
  std::function<Vec(const Vec&)> eval;
  std::function<Mat(const Vec&)> jac;  // may be empty

  bool has_jac() const { return static_cast<bool>(jac); }
};

// Scalar function with analytic gradient (potential / generator).
struct ScalarField {
  int dim = 0;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
};

struct StiffnessOptions {
  double fd_step = 1e-5;        // Jacobian finite differences
  double exact_step = 1e-3;     // third-derivative probes (amplify noise)
  double tol = 1e-6;            // symmetry / exactness tolerance
  double nd_floor = 1e-6;       // margin for calling the symmetric part negative definite
  std::uint64_t seed = 0;
};

struct StiffnessReport {
  bool symmetric = false;
  bool exact = false;
  bool negative_definite = false;
  bool conservative = false;
  double contraction_margin = 0.0;  // -(max eigenvalue of sym part observed)
  double sym_residual = 0.0;        // worst max-norm of K - K^T
  double exact_residual = 0.0;      // worst cross-derivative mismatch
  double max_sym_eig = 0.0;
  double tol = 0.0;
  int n_probes = 0;

  nlohmann::json to_json() const;
};

enum class EquilibriumPattern {
  ProperNode,
  ImproperNode,
  DegenerateNode,
  Focus,
  Saddle,
  Center,
};

std::string to_string(EquilibriumPattern p);

// Central-difference Jacobian, O(step^2).
Mat jacobian_fd(const Field& field, const Vec& at, double step = 1e-5);

// Analytic Jacobian when present, else finite differences.
Mat field_jacobian(const Field& field, const Vec& at, double step = 1e-5);

// 2D: scalar pseudo-vector (size 1); 3D: the standard 3-component curl.
Vec curl(const Field& field, const Vec& at, double step = 1e-5);

// 2D: half the scalar curl; 3D: half the curl projected on f/|f|.
double angular_velocity(const Field& field, const Vec& at, double eps_vel = 1e-9,
                        double step = 1e-5);

struct LoopWork {
  double value = 0.0;     // trapezoidal line integral at quad_points
  double estimate = 0.0;  // Richardson error estimate from a x2 refinement
};

// Line integral of f along a closed parametric loop on [0,1].
LoopWork loop_work(const Field& field, const std::function<Vec(double)>& loop,
                   int quad_points);

// Same for a closed polyline (columns are vertices; first == last within 1e-12).
LoopWork loop_work(const Field& field, const Mat& polyline, int quad_points);

// Max |loop work| over random ellipses inside the region (conservativeness sweep).
double max_loop_work(const Field& field, const Box& region, int n_loops, int quad_points,
                     std::uint64_t seed);

StiffnessReport classify_stiffness(const Field& field, const Box& region, int n_probes,
                                   const StiffnessOptions& opts = {});

EquilibriumPattern classify_equilibrium(const Mat& K, double tol = 1e-9);

// Kinematic RK4 rollout of xi_dot = f(xi); stops early when `stop` fires.
// Returns the visited states as columns (including the start).
Mat rollout_rk4(const Field& field, const Vec& start, double dt, int max_steps,
                const std::function<bool(const Vec&)>& stop = nullptr);

struct ConservativePair {
  Field field;           // f(xi) = grad g(xi0) - grad g(xi)
  ScalarField potential; // V(xi) = g(xi) - g(xi0) - grad g(xi0) . (xi - xi0)
};

// Conservative DS from a scalar generator g (Appendix-style construction):
// f(xi0) = 0, V(xi0) = 0, -grad V = f.
ConservativePair conservative_from_scalar(const ScalarField& g, const Vec& xi0);

}  // namespace conds
