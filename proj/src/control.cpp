#include "conds/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace conds {

Plant Plant::point_mass(int n, double mass) {
  Plant p;
  p.kind = Kind::PointMass;
  p.n = n;
  p.mass = mass;
  return p;
}

Plant Plant::two_link(double m1, double m2, double l1, double l2, double gravity) {
  Plant p;
  p.kind = Kind::TwoLinkPlanar;
  p.n = 2;
  p.m1 = m1;
  p.m2 = m2;
  p.l1 = l1;
  p.l2 = l2;
  p.gravity = gravity;
  return p;
}

Mat Plant::M(const Vec& q) const {
  if (kind == Kind::PointMass) return mass * Mat::Identity(n, n);
  double c2 = std::cos(q[1]);
  Mat M(2, 2);
  M(0, 0) = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
  M(0, 1) = m2 * l2 * l2 + m2 * l1 * l2 * c2;
  M(1, 0) = M(0, 1);
  M(1, 1) = m2 * l2 * l2;
  return M;
}

Mat Plant::C(const Vec& q, const Vec& qd) const {
  if (kind == Kind::PointMass) return Mat::Zero(n, n);
  double h = -m2 * l1 * l2 * std::sin(q[1]);
  Mat C(2, 2);
  C(0, 0) = h * qd[1];
  C(0, 1) = h * (qd[0] + qd[1]);
  C(1, 0) = -h * qd[0];
  C(1, 1) = 0.0;
  return C;
}

Vec Plant::G(const Vec& q) const {
  if (kind == Kind::PointMass) return Vec::Zero(n);
  double c1 = std::cos(q[0]);
  double c12 = std::cos(q[0] + q[1]);
  Vec g(2);
  g[0] = (m1 + m2) * gravity * l1 * c1 + m2 * gravity * l2 * c12;
  g[1] = m2 * gravity * l2 * c12;
  return g;
}

std::string to_string(ControllerVariant v) {
  switch (v) {
    case ControllerVariant::PassiveDs: return "passive_ds";
    case ControllerVariant::Tank: return "tank";
    case ControllerVariant::SplitTank: return "split_tank";
    case ControllerVariant::Projection: return "projection";
  }
  return "unknown";
}

Mat damping_matrix(const Vec& f_val, const Vec& lambdas, double eps_vel) {
  const int n = static_cast<int>(f_val.size());
  if (lambdas.size() != n) throw ValidationError("shape-mismatch", "lambda count != dim");
  if (f_val.norm() < eps_vel) return lambdas[0] * Mat::Identity(n, n);
  Mat Q(n, n);
  Q.col(0) = f_val / f_val.norm();
  int filled = 1;
  for (int d = 0; d < n && filled < n; ++d) {
    Vec e = Vec::Zero(n);
    e[d] = 1.0;
    for (int c = 0; c < filled; ++c) e -= Q.col(c) * Q.col(c).dot(e);
    double en = e.norm();
    if (en > 1e-10) {
      Q.col(filled) = e / en;
      ++filled;
    }
  }
  return Q * lambdas.asDiagonal() * Q.transpose();
}

Vec Contact::force(const Vec& x, const Vec& v) const {
  if (kind == Kind::None) return Vec::Zero(x.size());
  if (kind == Kind::Plane) {
    double pen = -(x - point).dot(normal);
    if (pen <= 0.0) return Vec::Zero(x.size());
    double vn = v.dot(normal);
    double fn = std::max(0.0, k_c * pen - d_c * vn);
    Vec vt = v - vn * normal;
    return fn * normal - tangential_damping * vt;
  }
  // SphereInside: robot inside a shell of the given radius, pressing outward.
  Vec d = x - point;
  double r = d.norm();
  double pen = r - radius;
  if (pen <= 0.0 || r < 1e-12) return Vec::Zero(x.size());
  Vec u = d / r;
  double vr = v.dot(u);
  double fn = std::max(0.0, k_c * pen + d_c * vr);
  Vec vt = v - vr * u;
  return -fn * u - tangential_damping * vt;
}

namespace {

struct Gates {
  double alpha = 0.0;
  double beta = 1.0;
};

Gates tank_gates(const TankParams& tp, double s, double drain_rate) {
  const double ws = tp.width_frac * (tp.s_upper - tp.s_lower);
  Gates g;
  g.alpha = smoothstep01((tp.s_upper - s) / ws);
  if (drain_rate <= 0.0) {
    g.beta = 1.0;  // the term charges the tank; no gating needed
  } else if (tp.hard_beta) {
    g.beta = s > tp.s_lower ? 1.0 : 0.0;
  } else {
    g.beta = smoothstep01((s - tp.s_lower) / ws);
  }
  return g;
}

}  // namespace

Trace simulate(const Plant& plant, const ControllerSpec& spec, double duration, double dt,
               const std::vector<Perturbation>& perturbations, const Contact& contact,
               std::uint64_t seed) {
  if (dt <= 0.0 || dt > 2e-3) {
    throw ValidationError("bad-config", "simulation requires 0 < dt <= 2e-3 s");
  }
  if (duration <= 0.0) throw ValidationError("bad-config", "duration must be > 0");
  if (spec.variant == ControllerVariant::Projection && spec.lifted == nullptr) {
    throw ValidationError("bad-config", "projection variant needs a lifted model");
  }
  const int n = plant.n;
  const double v_blowup = 100.0;
  Vec x = spec.x_init;
  Vec v = spec.v_init.size() == n ? spec.v_init : Vec::Zero(n);
  double s = spec.tank.s0 >= 0.0 ? spec.tank.s0 : spec.tank.s_upper;
  double w = spec.w_init;
  const double lambda1 = spec.lambdas[0];

  Trace trace;
  trace.dt = dt;
  trace.seed = seed;
  trace.variant = spec.variant;

  const int steps = static_cast<int>(std::llround(duration / dt));
  trace.steps.reserve(steps + 1);

  auto storage_at = [&](const Vec& xx, const Vec& vv, double ww) -> double {
    double kin = 0.5 * vv.dot(plant.M(xx) * vv);
    if (spec.variant == ControllerVariant::Projection) {
      return kin + lambda1 * lifted_potential(*spec.lifted, xx, ww);
    }
    if (spec.storage_potential) return kin + lambda1 * spec.storage_potential(xx);
    return std::numeric_limits<double>::quiet_NaN();
  };
  trace.has_storage =
      spec.variant == ControllerVariant::Projection || bool(spec.storage_potential);

  double prev_w_folded = w;
  for (int k = 0; k <= steps; ++k) {
    double t = k * dt;
    Vec tau_e = Vec::Zero(n);
    for (const auto& p : perturbations) {
      if (t >= p.t0 && t < p.t1) tau_e += p.force;
    }
    tau_e += contact.force(x, v);

    Vec fval(n), fcv = Vec::Zero(n), fncv = Vec::Zero(n);
    double wdot = 0.0;
    switch (spec.variant) {
      case ControllerVariant::PassiveDs:
      case ControllerVariant::Tank:
        fval = spec.lambda_gain * spec.f.eval(x);
        break;
      case ControllerVariant::SplitTank:
        if (spec.f_c.eval) fcv = spec.lambda_gain * spec.f_c.eval(x);
        fncv = spec.lambda_gain * spec.f_nc.eval(x);
        fval = fcv + fncv;
        break;
      case ControllerVariant::Projection: {
        auto [fp, wd] = projected_field(*spec.lifted, x, w);
        fval = fp;
        wdot = wd;
        break;
      }
    }

    Mat D = damping_matrix(fval, spec.lambdas, spec.eps_vel);
    if (spec.flip_damping) D = -D;

    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.v = v;
    rec.tau_e = tau_e;
    rec.w_virtual = w;
    rec.s = s;
    rec.W = storage_at(x, v, w);

    Vec tau_c = plant.G(x) - D * v;
    double alpha = 0.0, beta = 1.0, sdot = 0.0;
    switch (spec.variant) {
      case ControllerVariant::PassiveDs:
      case ControllerVariant::Projection:
        tau_c += lambda1 * fval;
        break;
      case ControllerVariant::Tank: {
        double drain = lambda1 * v.dot(fval);
        Gates g = tank_gates(spec.tank, s, drain);
        alpha = g.alpha;
        beta = g.beta;
        tau_c += beta * lambda1 * fval;
        sdot = alpha * v.dot(D * v) - beta * drain;
        break;
      }
      case ControllerVariant::SplitTank: {
        double drain = lambda1 * v.dot(fncv);
        Gates g = tank_gates(spec.tank, s, drain);
        alpha = g.alpha;
        beta = g.beta;
        tau_c += lambda1 * fcv + beta * lambda1 * fncv;
        sdot = alpha * v.dot(D * v) - beta * drain;
        break;
      }
    }
    rec.alpha = alpha;
    rec.beta = beta;
    rec.tau_c = tau_c;
    if (spec.variant == ControllerVariant::Projection) {
      // Analytic storage rate (Prop. 2 algebra): the kinetic rate uses the
      // skew-symmetry of Mdot - 2C, the potential rate the lifted gradient
      // (-f_p, -wdot) that the projection controller acts on.
      double dVdt = -(fval.dot(v) + wdot * wdot);
      rec.Wdot = v.dot(tau_c + tau_e - plant.G(x)) + lambda1 * dVdt;
    }
    trace.steps.push_back(rec);
    if (k == steps) break;

    if (spec.variant == ControllerVariant::Tank || spec.variant == ControllerVariant::SplitTank) {
      s = std::clamp(s + dt * sdot, spec.tank.s_lower, spec.tank.s_upper);
    }
    Vec accel = plant.M(x).ldlt().solve(tau_c + tau_e - plant.C(x, v) * v - plant.G(x));
    v += dt * accel;
    x += dt * v;
    if (spec.variant == ControllerVariant::Projection) {
      w += dt * wdot;
      if (spec.lifted->wrap) {
        double usable = (spec.lifted->w1 - spec.lifted->wrap_margin) - spec.lifted->w0;
        double folded = std::fmod(w - spec.lifted->w0, usable);
        if (folded < 0.0) folded += usable;
        folded += spec.lifted->w0;
        if (folded < prev_w_folded - 0.5 * usable) trace.steps.back().wrapped = true;
        prev_w_folded = folded;
      }
    }
    if (!x.allFinite() || !v.allFinite() || v.norm() > v_blowup) {
      std::ostringstream os;
      os << "state diverged at t = " << t + dt;
      throw SolverError("divergence", os.str());
    }
  }

  // Discrete storage rate, midpoint-velocity pairing for the audit. The
  // projection variant already carries the analytic rate (the finite
  // difference of the wrapped potential carries O(dt ||Hess V|| |v|^2)
  // truncation error, far above the audit tolerance).
  if (spec.variant != ControllerVariant::Projection) {
    for (size_t k = 0; k + 1 < trace.steps.size(); ++k) {
      trace.steps[k].Wdot = (trace.steps[k + 1].W - trace.steps[k].W) / dt;
    }
  }
  return trace;
}

PassivityReport passivity_audit(const Trace& trace, double tol) {
  if (!trace.has_storage) {
    throw ValidationError("audit-configuration",
                          "trace has no storage log (controller/storage mismatch)");
  }
  PassivityReport rep;
  rep.tol = tol;
  rep.tank_mode = trace.variant == ControllerVariant::Tank ||
                  trace.variant == ControllerVariant::SplitTank;
  double max_excess = -std::numeric_limits<double>::infinity();
  double max_wdot = -std::numeric_limits<double>::infinity();
  const double dt = trace.dt;
  const bool analytic = trace.variant == ControllerVariant::Projection;
  for (size_t k = 0; k + 1 < trace.steps.size(); ++k) {
    const auto& a = trace.steps[k];
    const auto& b = trace.steps[k + 1];
    // Skip seam steps in wrap mode: the storage is defined per lap.
    if (a.wrapped) continue;
    double excess, wdot;
    if (analytic) {
      wdot = a.Wdot;
      excess = wdot - a.v.dot(a.tau_e);
    } else {
      Vec vbar = 0.5 * (a.v + b.v);
      wdot = (b.W - a.W) / dt;
      excess = wdot - vbar.dot(a.tau_e);
      if (rep.tank_mode) excess += (b.s - a.s) / dt;
    }
    max_excess = std::max(max_excess, excess);
    max_wdot = std::max(max_wdot, wdot);
  }
  rep.max_excess = max_excess;
  rep.max_wdot = max_wdot;
  rep.n_steps = static_cast<int>(trace.steps.size());
  rep.pass = max_excess <= tol;
  return rep;
}

nlohmann::json PassivityReport::to_json() const {
  return nlohmann::json{
      {"pass", pass},       {"max_excess", max_excess}, {"max_wdot", max_wdot},
      {"tol", tol},         {"tank_mode", tank_mode},   {"n_steps", n_steps},
  };
}

SurfaceFields surface_scenario_fields(const Vec& p_c, double r, const Vec& p_o, double v_t,
                                      double v_w, double v_z, double v0, double F_d,
                                      double lambda1, double eps_vel) {
  if (r <= 0.0 || v0 <= 0.0) throw ValidationError("bad-config", "need r > 0, v0 > 0");
  SurfaceFields sf;
  sf.f_cir.dim = 3;
  sf.f_cir.eval = [p_c, r, v_t, v_w, v_z](const Vec& xi) -> Vec {
    double x = xi[0] - p_c[0], y = xi[1] - p_c[1];
    double R = std::sqrt(x * x + y * y);
    Vec f(3);
    f[0] = v_t * (r - R) * x - v_w * y;
    f[1] = v_t * (r - R) * y + v_w * x;
    f[2] = v_z * (p_c[2] - xi[2]);
    return f;
  };
  Field f_cir = sf.f_cir;
  sf.f_t.dim = 3;
  sf.f_t.eval = [f_cir, p_o, v0, eps_vel](const Vec& xi) -> Vec {
    Vec nrm = (xi - p_o).normalized();
    Vec fc = f_cir.eval(xi);
    Vec fhat = fc - nrm.dot(fc) * nrm;
    double m = fhat.norm();
    if (m < eps_vel) {
      throw SolverError("tangent-degeneracy", "circulation field is normal to the sphere");
    }
    return v0 * fhat / m;
  };
  sf.f_n.dim = 3;
  sf.f_n.eval = [p_o, F_d, lambda1](const Vec& xi) -> Vec {
    return (F_d / lambda1) * (xi - p_o).normalized();
  };
  Field ft = sf.f_t, fn = sf.f_n;
  sf.f.dim = 3;
  sf.f.eval = [ft, fn](const Vec& xi) -> Vec { return ft.eval(xi) + fn.eval(xi); };
  return sf;
}

}  // namespace conds
