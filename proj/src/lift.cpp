#include "conds/lift.hpp"

#include <cmath>

namespace conds {

LiftedDemo lift_trajectory(const DemoSet& demos_in, double w0, double w1) {
  DemoSet demos = demos_in;
  demos.validate();
  derive_missing_velocities(demos);
  if (!(w1 > w0)) throw ValidationError("bad-config", "w span must be increasing");

  LiftedDemo out;
  const int n = demos.dim();
  Vec end_mean = Vec::Zero(n);
  for (const auto& tr : demos.trajectories) {
    const int N = static_cast<int>(tr.points.cols());
    Vec cum(N);
    cum[0] = 0.0;
    for (int i = 1; i < N; ++i) {
      cum[i] = cum[i - 1] + (tr.points.col(i) - tr.points.col(i - 1)).norm();
    }
    double total = cum[N - 1];
    if (total <= 0.0) throw ValidationError("degenerate-demo", "zero-length trajectory");

    Trajectory lt;
    lt.times = tr.times;
    lt.points.resize(n + 1, N);
    lt.points.topRows(n) = tr.points;
    for (int i = 0; i < N; ++i) lt.points(n, i) = w0 + (w1 - w0) * cum[i] / total;
    lt.velocities.resize(n + 1, N);
    lt.velocities.topRows(n) = tr.velocities;
    for (int i = 0; i < N; ++i) {
      lt.velocities(n, i) = (w1 - w0) * tr.velocities.col(i).norm() / total;
    }
    lt.velocities_derived = tr.velocities_derived;
    out.lifted.trajectories.push_back(std::move(lt));
    end_mean += tr.points.col(N - 1);
  }
  end_mean /= static_cast<double>(demos.trajectories.size());
  out.lifted.equilibrium.resize(n + 1);
  out.lifted.equilibrium.head(n) = end_mean;
  out.lifted.equilibrium[n] = w1;
  return out;
}

Vec project(const Vec& v, int n) {
  if (n > v.size()) throw ValidationError("bad-projection", "projection exceeds dimension");
  return v.head(n);
}

namespace {

// Fold w into the wrapped span; returns (w_eval, crossfade weight, w_partner).
struct WrapInfo {
  double w = 0.0;
  double blend = 0.0;    // weight on the pre-seam partner
  double partner = 0.0;  // w_eval + usable span
};

WrapInfo fold_w(const LiftedModel& lm, double w) {
  WrapInfo info;
  if (!lm.wrap) {
    info.w = w;
    return info;
  }
  double usable = (lm.w1 - lm.wrap_margin) - lm.w0;
  double rel = std::fmod(w - lm.w0, usable);
  if (rel < 0.0) rel += usable;
  info.w = lm.w0 + rel;
  if (rel < lm.crossfade) {
    info.blend = 1.0 - rel / lm.crossfade;
    info.partner = info.w + usable;
  }
  return info;
}

std::pair<Vec, double> eval_at(const LiftedModel& lm, const Vec& xi, double w) {
  Vec z(lm.base_dim + 1);
  z.head(lm.base_dim) = xi;
  z[lm.base_dim] = w;
  Vec f = lm.model.fp(z);
  return {f.head(lm.base_dim), f[lm.base_dim]};
}

}  // namespace

std::pair<Vec, double> projected_field(const LiftedModel& lm, const Vec& xi, double w) {
  WrapInfo info = fold_w(lm, w);
  auto [f, wd] = eval_at(lm, xi, info.w);
  if (info.blend > 0.0) {
    auto [f2, wd2] = eval_at(lm, xi, info.partner);
    double c = smoothstep01(info.blend);
    f = (1.0 - c) * f + c * f2;
    wd = (1.0 - c) * wd + c * wd2;
  }
  return {f, wd};
}

double lifted_potential(const LiftedModel& lm, const Vec& xi, double w) {
  WrapInfo info = fold_w(lm, w);
  Vec z(lm.base_dim + 1);
  z.head(lm.base_dim) = xi;
  z[lm.base_dim] = info.w;
  return lm.model.vp(z);
}

Field slice_field(const LiftedModel& lm, double w) {
  Field f;
  f.dim = lm.base_dim;
  LiftedModel self = lm;
  f.eval = [self, w](const Vec& xi) -> Vec { return projected_field(self, xi, w).first; };
  return f;
}

LiftedModel learn_lifted(const DemoSet& demos, const LearnConfig& cfg, double w0, double w1,
                         bool wrap, LearnReport* report) {
  LiftedDemo ld = lift_trajectory(demos, w0, w1);
  LiftedModel lm;
  lm.model = optimize_iterative(ld.lifted, cfg, report);
  lm.base_dim = demos.dim();
  lm.w0 = w0;
  lm.w1 = w1;
  lm.wrap = wrap;
  return lm;
}

}  // namespace conds
