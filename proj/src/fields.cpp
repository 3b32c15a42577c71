#include "conds/fields.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace conds {

Mat latin_hypercube(const Box& box, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw ValidationError("bad-sample-count", "need at least one sample");
  const int n = box.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat out(n, n_samples);
  std::vector<int> perm(n_samples);
  for (int d = 0; d < n; ++d) {
    for (int i = 0; i < n_samples; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n_samples; ++i) {
      double cell = (perm[i] + u(rng)) / n_samples;
      out(d, i) = box.lo[d] + cell * (box.hi[d] - box.lo[d]);
    }
  }
  return out;
}

namespace {

Vec eval_checked(const Field& field, const Vec& at) {
  Vec v = field.eval(at);
  if (!v.allFinite()) {
    std::ostringstream os;
    os << "non-finite field value at probe [" << at.transpose() << "]";
    throw SolverError("evaluation-failure", os.str());
  }
  return v;
}

}  // namespace

Mat jacobian_fd(const Field& field, const Vec& at, double step) {
  if (step <= 0.0) throw ValidationError("bad-step", "finite-difference step must be > 0");
  const int n = field.dim;
  Mat J(n, n);
  Vec probe = at;
  for (int k = 0; k < n; ++k) {
    probe[k] = at[k] + step;
    Vec fp = eval_checked(field, probe);
    probe[k] = at[k] - step;
    Vec fm = eval_checked(field, probe);
    probe[k] = at[k];
    J.col(k) = (fp - fm) / (2.0 * step);
  }
  return J;
}

Mat field_jacobian(const Field& field, const Vec& at, double step) {
  if (field.has_jac()) return field.jac(at);
  return jacobian_fd(field, at, step);
}

Vec curl(const Field& field, const Vec& at, double step) {
  Mat J = field_jacobian(field, at, step);
  if (field.dim == 2) {
    Vec c(1);
    c[0] = J(1, 0) - J(0, 1);
    return c;
  }
  if (field.dim == 3) {
    Vec c(3);
    c[0] = J(2, 1) - J(1, 2);
    c[1] = J(0, 2) - J(2, 0);
    c[2] = J(1, 0) - J(0, 1);
    return c;
  }
  throw ValidationError("unsupported-dimension", "curl requires dim 2 or 3");
}

double angular_velocity(const Field& field, const Vec& at, double eps_vel, double step) {
  Vec c = curl(field, at, step);
  if (field.dim == 2) return 0.5 * c[0];
  Vec f = field.eval(at);
  double nf = f.norm();
  if (nf <= eps_vel) {
    throw SolverError("degenerate-direction",
                      "3D angular velocity undefined where the field vanishes");
  }
  return 0.5 * c.dot(f) / nf;
}

namespace {

LoopWork loop_work_param(const Field& field, const std::function<Vec(double)>& loop,
                         int quad_points) {
  if (quad_points < 16) throw ValidationError("bad-quad-points", "quad_points must be >= 16");
  Vec p0 = loop(0.0);
  Vec p1 = loop(1.0);
  if ((p0 - p1).norm() > 1e-12) {
    throw ValidationError("path-not-closed", "parametric loop endpoints differ");
  }
  auto integrate = [&](int m) {
    // Trapezoid on the chord decomposition: sum of 0.5 (f(a)+f(b)) . (b-a).
    double w = 0.0;
    Vec prev = loop(0.0);
    Vec fprev = field.eval(prev);
    for (int i = 1; i <= m; ++i) {
      Vec cur = loop(static_cast<double>(i) / m);
      Vec fcur = field.eval(cur);
      w += 0.5 * (fprev + fcur).dot(cur - prev);
      prev = cur;
      fprev = fcur;
    }
    return w;
  };
  double coarse = integrate(quad_points);
  double fine = integrate(2 * quad_points);
  LoopWork lw;
  lw.value = coarse;
  lw.estimate = (fine - coarse) / 3.0;  // Richardson for an O(h^2) rule
  return lw;
}

}  // namespace

LoopWork loop_work(const Field& field, const std::function<Vec(double)>& loop,
                   int quad_points) {
  return loop_work_param(field, loop, quad_points);
}

LoopWork loop_work(const Field& field, const Mat& polyline, int quad_points) {
  const int m = static_cast<int>(polyline.cols());
  if (m < 2) throw ValidationError("bad-path", "polyline needs at least two vertices");
  if ((polyline.col(0) - polyline.col(m - 1)).norm() > 1e-12) {
    throw ValidationError("path-not-closed", "polyline is not closed");
  }
  // Piecewise-linear parameterization by vertex index, uniform in [0,1].
  auto loop = [&](double t) -> Vec {
    double s = t * (m - 1);
    int i = std::min(static_cast<int>(std::floor(s)), m - 2);
    double a = s - i;
    return (1.0 - a) * polyline.col(i) + a * polyline.col(i + 1);
  };
  return loop_work_param(field, loop, quad_points);
}

double max_loop_work(const Field& field, const Box& region, int n_loops, int quad_points,
                     std::uint64_t seed) {
  const int n = field.dim;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int q = 0; q < n_loops; ++q) {
    // Random ellipse: center away from the walls, two orthonormal axes.
    Vec c(n), half = 0.5 * (region.hi - region.lo);
    for (int d = 0; d < n; ++d) {
      c[d] = region.lo[d] + half[d] * (0.5 + u(rng));  // middle half of the box
    }
    Vec a1(n), a2(n);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int d = 0; d < n; ++d) a1[d] = g(rng);
    a1.normalize();
    do {
      for (int d = 0; d < n; ++d) a2[d] = g(rng);
      a2 -= a1.dot(a2) * a1;
    } while (a2.norm() < 1e-6);
    a2.normalize();
    double rad = (0.1 + 0.3 * u(rng)) * half.minCoeff();
    double rb = rad * (0.3 + 0.7 * u(rng));
    auto loop = [&](double t) -> Vec {
      double a = 2.0 * 3.14159265358979323846 * t;
      return c + rad * std::cos(a) * a1 + rb * std::sin(a) * a2;
    };
    LoopWork lw = loop_work(field, loop, quad_points);
    worst = std::max(worst, std::abs(lw.value));
  }
  return worst;
}

StiffnessReport classify_stiffness(const Field& field, const Box& region, int n_probes,
                                   const StiffnessOptions& opts) {
  if (n_probes < 10) throw ValidationError("bad-probe-count", "need at least 10 probes");
  const int n = field.dim;
  std::mt19937_64 rng(opts.seed);
  StiffnessReport rep;
  rep.tol = opts.tol;
  rep.n_probes = n_probes;
  double worst_sym = 0.0;
  double worst_exact = 0.0;
  double max_eig = -std::numeric_limits<double>::infinity();

  auto jac_at = [&](const Vec& x) { return field_jacobian(field, x, opts.fd_step); };

  for (int p = 0; p < n_probes; ++p) {
    Vec x = uniform_in_box(region, rng);
    Mat K = jac_at(x);
    worst_sym = std::max(worst_sym, (K - K.transpose()).cwiseAbs().maxCoeff());

    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (K + K.transpose()));
    max_eig = std::max(max_eig, es.eigenvalues().maxCoeff());

    // Exactness: d k_ij / d xi_k must equal d k_ik / d xi_j. Third derivatives
    // of the potential, probed with a wider step.
    std::vector<Mat> dJ(n);
    Vec probe = x;
    for (int k = 0; k < n; ++k) {
      probe[k] = x[k] + opts.exact_step;
      Mat Jp = jac_at(probe);
      probe[k] = x[k] - opts.exact_step;
      Mat Jm = jac_at(probe);
      probe[k] = x[k];
      dJ[k] = (Jp - Jm) / (2.0 * opts.exact_step);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
          worst_exact = std::max(worst_exact, std::abs(dJ[k](i, j) - dJ[j](i, k)));
        }
      }
    }
  }

  rep.sym_residual = worst_sym;
  rep.exact_residual = worst_exact;
  rep.max_sym_eig = max_eig;
  rep.symmetric = worst_sym <= opts.tol;
  rep.exact = worst_exact <= opts.tol;
  rep.negative_definite = max_eig <= -opts.nd_floor;
  rep.conservative = rep.symmetric && rep.exact;
  rep.contraction_margin = -max_eig;
  return rep;
}

nlohmann::json StiffnessReport::to_json() const {
  return nlohmann::json{
      {"symmetric", symmetric},
      {"exact", exact},
      {"negative_definite", negative_definite},
      {"conservative", conservative},
      {"contraction_margin", contraction_margin},
      {"tolerances",
       {{"tol", tol}, {"sym_residual", sym_residual}, {"exact_residual", exact_residual}}},
      {"max_sym_eig", max_sym_eig},
      {"n_probes", n_probes},
  };
}

std::string to_string(EquilibriumPattern p) {
  switch (p) {
    case EquilibriumPattern::ProperNode: return "proper node";
    case EquilibriumPattern::ImproperNode: return "improper node";
    case EquilibriumPattern::DegenerateNode: return "degenerate node";
    case EquilibriumPattern::Focus: return "focus";
    case EquilibriumPattern::Saddle: return "saddle";
    case EquilibriumPattern::Center: return "center";
  }
  return "unknown";
}

EquilibriumPattern classify_equilibrium(const Mat& K, double tol) {
  if (K.rows() != 2 || K.cols() != 2) {
    throw ValidationError("unsupported-dimension", "equilibrium classification is 2D only");
  }
  double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  double tr = K.trace();
  double det = K.determinant();
  double disc = tr * tr - 4.0 * det;
  double eps = tol * scale * scale;

  if (std::abs(disc) <= eps) {
    // Repeated eigenvalue: proper node iff the eigenspace is full (K = lambda I).
    double lambda = 0.5 * tr;
    Mat R = K - lambda * Mat::Identity(2, 2);
    if (R.cwiseAbs().maxCoeff() <= tol * scale) return EquilibriumPattern::ProperNode;
    return EquilibriumPattern::DegenerateNode;
  }
  if (disc < 0.0) {
    if (std::abs(tr) <= tol * scale) return EquilibriumPattern::Center;
    return EquilibriumPattern::Focus;
  }
  if (det < -eps) return EquilibriumPattern::Saddle;
  return EquilibriumPattern::ImproperNode;
}

Mat rollout_rk4(const Field& field, const Vec& start, double dt, int max_steps,
                const std::function<bool(const Vec&)>& stop) {
  std::vector<Vec> pts;
  Vec x = start;
  pts.push_back(x);
  for (int k = 0; k < max_steps; ++k) {
    if (stop && stop(x)) break;
    Vec k1 = field.eval(x);
    Vec k2 = field.eval(x + 0.5 * dt * k1);
    Vec k3 = field.eval(x + 0.5 * dt * k2);
    Vec k4 = field.eval(x + dt * k3);
    x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw SolverError("divergence", "rollout produced non-finite state");
    pts.push_back(x);
  }
  Mat out(start.size(), static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = pts[i];
  return out;
}

ConservativePair conservative_from_scalar(const ScalarField& g, const Vec& xi0) {
  Vec g0 = g.grad(xi0);
  double v0 = g.value(xi0);
  ConservativePair out;
  out.field.dim = g.dim;
  out.field.eval = [g, g0](const Vec& xi) -> Vec { return g0 - g.grad(xi); };
  out.potential.dim = g.dim;
  out.potential.value = [g, g0, v0, xi0](const Vec& xi) -> double {
    return g.value(xi) - v0 - g0.dot(xi - xi0);
  };
  out.potential.grad = [g, g0](const Vec& xi) -> Vec { return g.grad(xi) - g0; };
  return out;
}

}  // namespace conds
