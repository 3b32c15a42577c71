#include "conds/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace conds {

Vec SphereChart::embed(const Vec& theta) const {
  if (theta.size() != 2) throw ValidationError("bad-dimension", "chart takes theta in R^2");
  Vec r(3);
  double s1 = std::sin(theta[0]);
  r[0] = s1 * std::cos(theta[1]);
  r[1] = s1 * std::sin(theta[1]);
  r[2] = std::cos(theta[0]);
  return r;
}

Vec SphereChart::invert(const Vec& x) const {
  if (x.size() != 3) throw ValidationError("bad-dimension", "chart inverse takes x in R^3");
  Vec r = x / x.norm();
  double t1 = std::acos(std::clamp(r[2], -1.0, 1.0));
  if (t1 < pole_margin || t1 > std::numbers::pi - pole_margin) {
    std::ostringstream os;
    os << "point within " << pole_margin << " rad of a chart pole (theta1 = " << t1 << ")";
    throw ValidationError("chart-singularity", os.str());
  }
  Vec theta(2);
  theta[0] = t1;
  theta[1] = std::atan2(r[1], r[0]);
  return theta;
}

Mat SphereChart::jacobian(const Vec& theta) const {
  if (theta.size() != 2) throw ValidationError("bad-dimension", "chart takes theta in R^2");
  double s1 = std::sin(theta[0]), c1 = std::cos(theta[0]);
  double s2 = std::sin(theta[1]), c2 = std::cos(theta[1]);
  Mat J(3, 2);
  J << c1 * c2, -s1 * s2,
       c1 * s2,  s1 * c2,
      -s1,       0.0;
  return J;
}

Field map_to_sphere(const SphereChart& chart, const Field& f_theta) {
  Field f;
  f.dim = 3;
  f.eval = [chart, f_theta](const Vec& x) -> Vec {
    Vec theta = chart.invert(x);
    return chart.jacobian(theta) * f_theta.eval(theta);
  };
  return f;
}

Field covector_to_sphere(const SphereChart& chart, const Field& f_theta) {
  Field f;
  f.dim = 3;
  f.eval = [chart, f_theta](const Vec& x) -> Vec {
    Vec theta = chart.invert(x);
    Mat J = chart.jacobian(theta);
    Mat G = J.transpose() * J;  // chart metric, diag(1, sin^2 t1)
    return J * G.ldlt().solve(f_theta.eval(theta));
  };
  return f;
}

DemoSet pull_back_demos(const SphereChart& chart, const DemoSet& sphere_demos) {
  if (sphere_demos.dim() != 3) {
    throw ValidationError("bad-dimension", "sphere demos must be 3-dimensional");
  }
  DemoSet out;
  for (const auto& tr : sphere_demos.trajectories) {
    Trajectory ct;
    ct.times = tr.times;
    const int N = static_cast<int>(tr.points.cols());
    ct.points.resize(2, N);
    for (int i = 0; i < N; ++i) ct.points.col(i) = chart.invert(tr.points.col(i));
    // Unwrap theta2 across the +-pi seam so the chart trajectory is continuous.
    for (int i = 1; i < N; ++i) {
      double d = ct.points(1, i) - ct.points(1, i - 1);
      if (d > std::numbers::pi) ct.points(1, i) -= 2.0 * std::numbers::pi;
      else if (d < -std::numbers::pi) ct.points(1, i) += 2.0 * std::numbers::pi;
    }
    out.trajectories.push_back(std::move(ct));
  }
  out.equilibrium = chart.invert(sphere_demos.equilibrium);
  return out;
}

Field SphereModel::sphere_field() const { return map_to_sphere(chart, model.field()); }

double SphereModel::potential(const Vec& x) const { return model.vp(chart.invert(x)); }

SphereModel learn_sphere_ds(const DemoSet& sphere_demos, const LearnConfig& cfg,
                            LearnReport* report) {
  SphereModel sm;
  DemoSet chart_demos = pull_back_demos(sm.chart, sphere_demos);
  sm.model = optimize_iterative(chart_demos, cfg, report);
  return sm;
}

Mat rollout_sphere(const Field& sphere_field, const Vec& start, double dt, int max_steps,
                   const std::function<bool(const Vec&)>& stop) {
  if (start.size() != 3) throw ValidationError("bad-dimension", "sphere rollout needs R^3");
  std::vector<Vec> pts;
  Vec x = start / start.norm();
  pts.push_back(x);
  for (int k = 0; k < max_steps; ++k) {
    if (stop && stop(x)) break;
    Vec k1 = sphere_field.eval(x);
    Vec k2 = sphere_field.eval((x + 0.5 * dt * k1).normalized());
    Vec k3 = sphere_field.eval((x + 0.5 * dt * k2).normalized());
    Vec k4 = sphere_field.eval((x + dt * k3).normalized());
    x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    double drift = std::abs(x.norm() - 1.0);
    if (drift > 1e-6) {
      throw SolverError("divergence", "sphere rollout left the manifold (step too large)");
    }
    x.normalize();
    pts.push_back(x);
  }
  Mat out(3, static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = pts[i];
  return out;
}

LoopWorkPair sphere_loop_work(const SphereChart& chart, const Field& f_theta,
                              const std::function<Vec(double)>& theta_loop,
                              int quad_points) {
  LoopWorkPair pair;
  pair.chart = loop_work(f_theta, theta_loop, quad_points);
  Field cov = covector_to_sphere(chart, f_theta);
  auto sphere_loop = [&chart, &theta_loop](double t) -> Vec {
    return chart.embed(theta_loop(t));
  };
  pair.sphere = loop_work(cov, sphere_loop, quad_points);
  return pair;
}

}  // namespace conds
