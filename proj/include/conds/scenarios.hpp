#pragma once

#include "conds/learn.hpp"

#include <array>
#include <string>
#include <vector>

namespace conds {

// Shipped synthetic demonstrations. All are deterministic and analytic;
// velocities are provided in closed form.
DemoSet demo_l_shape(int n_points = 80, int n_traj = 3);
DemoSet demo_sine(int n_points = 80, int n_traj = 3);
// Closed circle (start == end), intended for the virtual-coordinate lift.
DemoSet demo_circle(int n_points = 100, int n_traj = 2);
// Self-intersecting figure-eight, also a lift target.
DemoSet demo_figure_eight(int n_points = 120, int n_traj = 1);
// Arc on S^2 (unit-vector columns), for the rotation pipeline.
DemoSet demo_sphere_arc(int n_points = 80, int n_traj = 2);
// Closed wipe circle of the surface scenario (3D, constant speed v0).
DemoSet demo_surface_circle(int n_points = 100, int n_traj = 2);

// Pure swirl f = (-x2, x1): exact (constant Jacobian) but antisymmetric.
Field swirl_field();

// Snake-like non-conservative field: contracting radial core plus a
// position-modulated rotation, f = -(x - x0) + w0 sin(k x1) R (x - x0).
// Globally convergent to x0 (the rotational term is orthogonal to x - x0).
struct SnakeScenario {
  Vec xi0;
  double w0 = 3.0;   // rotation amplitude
  double k = 3.0;    // spatial frequency of the modulation
  double s0 = 1.0;   // initial tank energy for the depletion study
  double lambda = 2.0;  // isotropic damping eigenvalue
  Box region;        // critical region for decomposition / sampling
  std::vector<Vec> starts;  // four canonical start points

  Field field() const;  // with analytic Jacobian
};

SnakeScenario snake_scenario();

// Constant-stiffness exemplars spanning the conservativeness matrix:
// every constant Jacobian is exact; symmetry / negative definiteness vary.
struct StiffnessExemplar {
  std::string name;
  Mat K;
  Vec xi0;
  bool symmetric = false;
  bool negative_definite = false;

  Field field() const;  // f = K (x - xi0)
  bool conservative() const { return symmetric; }
};

std::array<StiffnessExemplar, 4> stiffness_exemplars();

// Canonical surface-polish task configuration (circular wipe on a sphere).
struct SurfaceScenarioConfig {
  Vec p_c;           // circle center on the shell
  double r = 0.1;    // circle radius
  Vec p_o;           // sphere (shell) center
  double v_t = 5.0, v_w = 1.0, v_z = 20.0;
  double v0 = 0.1;   // tangential speed (m/s)
  double F_d = 5.0;  // desired normal force (N)
  double shell_radius = 0.5;
  // Energy-depletion study: approach from rest below the wipe circle.
  Vec depletion_start;
  double s0 = 0.5;          // initial tank energy for the comparison
  Box decomp_region;        // critical region for the f_cir decomposition
};

SurfaceScenarioConfig surface_scenario_config();

}  // namespace conds
