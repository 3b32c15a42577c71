#pragma once

#include "conds/learn.hpp"

namespace conds {

struct LiftedDemo {
  DemoSet lifted;  // trajectories in R^{n+1}; last coordinate is w
};

// Adds the virtual coordinate by normalized arc length mapped onto [w0, w1];
// lifted velocities get w_dot = (w1 - w0) * speed / total_length.
LiftedDemo lift_trajectory(const DemoSet& demos, double w0 = 0.0, double w1 = 1.0);

struct LiftedModel {
  PotentialModel model;  // over R^{n+1}
  int base_dim = 0;
  double w0 = 0.0;
  double w1 = 1.0;
  bool wrap = false;          // re-enter at w0 after the span (closed demos)
  double wrap_margin = 0.05;  // seam offset before w1 where wrapping re-enters
  double crossfade = 0.05;    // blend window after re-entry, in w units
};

// First n components.
Vec project(const Vec& v, int n);

// Evaluates the (n+1)-dim conservative field at (xi, w); returns the spatial
// part and the intrinsic virtual velocity w_dot = -dV/dw.  In wrap mode w is
// folded into the span with a crossfade across the seam.
std::pair<Vec, double> projected_field(const LiftedModel& lm, const Vec& xi, double w);

// Lifted potential V(xi, w) (storage-function ingredient, Eq.-StorageFun shape).
double lifted_potential(const LiftedModel& lm, const Vec& xi, double w);

// Frozen-w slice as a base-dimensional field.
Field slice_field(const LiftedModel& lm, double w);

LiftedModel learn_lifted(const DemoSet& demos, const LearnConfig& cfg, double w0 = 0.0,
                         double w1 = 1.0, bool wrap = false, LearnReport* report = nullptr);

}  // namespace conds
