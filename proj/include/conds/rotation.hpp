#pragma once

#include "conds/learn.hpp"

namespace conds {

// Spherical chart for unit-quaternion-like orientation targets restricted to
// S^2: fk(theta) = (sin t1 cos t2, sin t1 sin t2, cos t1).
struct SphereChart {
  double pole_margin = 0.05;  // minimum |t1 - {0, pi}| before the chart degenerates

  Vec embed(const Vec& theta) const;       // R^2 -> S^2
  Vec invert(const Vec& x) const;          // S^2 -> R^2, throws chart-singularity near poles
  Mat jacobian(const Vec& theta) const;    // 3 x 2 d fk / d theta
};

// Map a chart-space (joint-space) field onto the sphere:
// x_dot = J_fk(fk_inv(x)) f_theta(fk_inv(x)). The result is tangent to S^2.
Field map_to_sphere(const SphereChart& chart, const Field& f_theta);

// Covector (force) counterpart: w(x) = J (J^T J)^{-1} f_theta(fk_inv(x)),
// so that w . dx = f_theta . dtheta along corresponding paths. Loop work of
// this field on the sphere equals the chart loop work exactly.
Field covector_to_sphere(const SphereChart& chart, const Field& f_theta);

// Demos recorded on S^2 (columns unit vectors) pulled back into the chart.
DemoSet pull_back_demos(const SphereChart& chart, const DemoSet& sphere_demos);

struct SphereModel {
  SphereChart chart;
  PotentialModel model;  // learned in chart coordinates

  Field chart_field() const { return model.field(); }
  Field sphere_field() const;
  // Potential on the sphere: V(x) = V_p(fk_inv(x)).
  double potential(const Vec& x) const;
};

// Learn a conservative DS for sphere-valued demos through the chart.
SphereModel learn_sphere_ds(const DemoSet& sphere_demos, const LearnConfig& cfg,
                            LearnReport* report = nullptr);

// RK4 rollout constrained to S^2 (renormalized after every step).
Mat rollout_sphere(const Field& sphere_field, const Vec& start, double dt, int max_steps,
                   const std::function<bool(const Vec&)>& stop = nullptr);

struct LoopWorkPair {
  LoopWork chart;   // line integral of f_theta along the chart loop
  LoopWork sphere;  // line integral of the mapped field along fk(loop)
};

// Work around corresponding closed loops in the chart and on the sphere.
// For a conservative chart field both vanish (the chart map is a smooth
// change of variables away from the poles).
LoopWorkPair sphere_loop_work(const SphereChart& chart, const Field& f_theta,
                              const std::function<Vec(double)>& theta_loop,
                              int quad_points);

}  // namespace conds
