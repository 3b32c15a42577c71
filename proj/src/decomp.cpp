#include "conds/decomp.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace conds {

namespace {

// Quartic basis (cubic stiffness) and its antiderivative, per scalar coordinate.
Eigen::Vector4d basis(double t) {
  return Eigen::Vector4d(t * t * t * t / 4.0, t * t * t / 3.0, t * t / 2.0, t);
}

Eigen::Vector4d basis_derivative(double t) {
  return Eigen::Vector4d(t * t * t, t * t, t, 1.0);
}

Eigen::Vector4d basis_antiderivative(double t) {
  return Eigen::Vector4d(t * t * t * t * t / 20.0, t * t * t * t / 12.0, t * t * t / 6.0,
                         t * t / 2.0);
}

}  // namespace

Vec PolyConservative::field_at(const Vec& xi) const {
  const int n = dim();
  Vec f(n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d c = nu.segment<4>(4 * i);
    f[i] = c.dot(basis(xi[i]) - basis(xi0[i]));
  }
  return f;
}

Mat PolyConservative::jacobian_at(const Vec& xi) const {
  const int n = dim();
  Mat J = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d c = nu.segment<4>(4 * i);
    J(i, i) = c.dot(basis_derivative(xi[i]));
  }
  return J;
}

double PolyConservative::potential_at(const Vec& xi) const {
  const int n = dim();
  double v = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::Vector4d c = nu.segment<4>(4 * i);
    double anti = c.dot(basis_antiderivative(xi[i]) - basis_antiderivative(xi0[i]));
    double linear = c.dot(basis(xi0[i])) * (xi[i] - xi0[i]);
    v -= anti - linear;
  }
  return v;
}

Field PolyConservative::as_field() const {
  PolyConservative self = *this;
  Field f;
  f.dim = dim();
  f.eval = [self](const Vec& xi) -> Vec { return self.field_at(xi); };
  f.jac = [self](const Vec& xi) -> Mat { return self.jacobian_at(xi); };
  return f;
}

ScalarField PolyConservative::as_potential() const {
  PolyConservative self = *this;
  ScalarField s;
  s.dim = dim();
  s.value = [self](const Vec& xi) -> double { return self.potential_at(xi); };
  s.grad = [self](const Vec& xi) -> Vec { return -self.field_at(xi); };
  return s;
}

double j1_index(const Vec& nu, const Field& f, const Mat& samples, const Vec& xi0) {
  PolyConservative pc{nu, xi0};
  double acc = 0.0;
  for (int s = 0; s < samples.cols(); ++s) {
    acc += (pc.field_at(samples.col(s)) - f.eval(samples.col(s))).squaredNorm();
  }
  return acc / samples.cols();
}

double j2_index(const Vec& nu, const Field& f, const Mat& samples, const Vec& xi0,
                const Eigen::Vector2d& omega) {
  PolyConservative pc{nu, xi0};
  double acc1 = 0.0, acc2 = 0.0;
  for (int s = 0; s < samples.cols(); ++s) {
    Vec fv = f.eval(samples.col(s));
    Vec fc = pc.field_at(samples.col(s));
    acc1 += (fc - fv).squaredNorm();
    acc2 += fv.dot(fv - fc);
  }
  return omega[0] * acc1 / samples.cols() + omega[1] * acc2 / samples.cols();
}

DecompResult optimize_decomposition(const Field& f, const Box& region, int n_d,
                                    const Eigen::Vector2d& omega, std::uint64_t seed,
                                    const Vec& xi0) {
  const int n = f.dim;
  if (n_d < 4 * n) throw ValidationError("bad-config", "need N_d >= 4n for identifiability");
  if (!(omega[0] > 0.0)) {
    throw ValidationError("ill-posed-decomposition",
                          "omega_1 must be positive (the quadratic term anchors the fit)");
  }
  Mat samples = latin_hypercube(region, n_d, seed);

  // Quadratic in nu, decoupled per dimension:
  //   (2 w1 X'X + ridge) nu_i = (2 w1 + w2) X'F_i.
  Vec nu(4 * n);
  for (int i = 0; i < n; ++i) {
    Mat X(n_d, 4);
    Vec F(n_d);
    for (int s = 0; s < n_d; ++s) {
      X.row(s) = (basis(samples(i, s)) - basis(xi0[i])).transpose();
      F[s] = f.eval(samples.col(s))[i];
    }
    Mat A = 2.0 * omega[0] * (X.transpose() * X) / n_d;
    A.diagonal().array() += 1e-10;
    Vec b = (2.0 * omega[0] + omega[1]) * (X.transpose() * F) / n_d;
    Eigen::LDLT<Mat> ldlt(A);
    if (ldlt.info() != Eigen::Success) {
      throw SolverError("ill-posed-decomposition", "normal matrix not factorizable");
    }
    nu.segment<4>(4 * i) = ldlt.solve(b);
  }

  DecompResult res;
  res.nu = nu;
  res.j1 = j1_index(nu, f, samples, xi0);
  res.j2 = j2_index(nu, f, samples, xi0, omega);
  res.omega = omega;
  res.region = region;
  res.n_samples = n_d;
  res.seed = seed;
  res.xi0 = xi0;
  return res;
}

SplitFields split(const Field& f, const Vec& nu, const Vec& xi0) {
  PolyConservative pc{nu, xi0};
  SplitFields out;
  out.f_c = pc.as_field();
  out.potential = pc.as_potential();
  out.f_nc.dim = f.dim;
  Field base = f;
  out.f_nc.eval = [base, pc](const Vec& xi) -> Vec {
    return base.eval(xi) - pc.field_at(xi);
  };
  if (base.has_jac()) {
    out.f_nc.jac = [base, pc](const Vec& xi) -> Mat {
      return base.jac(xi) - pc.jacobian_at(xi);
    };
  }
  return out;
}

nlohmann::json DecompResult::to_json() const {
  return nlohmann::json{
      {"nu", std::vector<double>(nu.data(), nu.data() + nu.size())},
      {"j1", j1},
      {"j2", j2},
      {"omega", {omega[0], omega[1]}},
      {"region",
       {{"lo", std::vector<double>(region.lo.data(), region.lo.data() + region.lo.size())},
        {"hi", std::vector<double>(region.hi.data(), region.hi.data() + region.hi.size())}}},
      {"n_samples", n_samples},
      {"seed", seed},
      {"xi0", std::vector<double>(xi0.data(), xi0.data() + xi0.size())},
  };
}

}  // namespace conds
