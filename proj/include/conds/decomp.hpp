#pragma once

#include "conds/fields.hpp"

#include <nlohmann/json.hpp>

namespace conds {

// Separable conservative family: component i is a quartic polynomial of xi_i
// only (cubic stiffness), anchored so the field vanishes at xi0.
// f_hat_i(xi) = p_i(xi_i) - p_i(xi0_i),
// p_i(t) = nu_{4i+0} t^4/4 + nu_{4i+1} t^3/3 + nu_{4i+2} t^2/2 + nu_{4i+3} t.
struct PolyConservative {
  Vec nu;   // 4n coefficients
  Vec xi0;

  int dim() const { return static_cast<int>(xi0.size()); }
  Vec field_at(const Vec& xi) const;
  Mat jacobian_at(const Vec& xi) const;  // diagonal
  double potential_at(const Vec& xi) const;  // V(xi0) = 0, -grad V = field
  Field as_field() const;
  ScalarField as_potential() const;
};

struct DecompResult {
  Vec nu;
  double j1 = 0.0;
  double j2 = 0.0;
  Eigen::Vector2d omega{1.0, 1.0};
  Box region;
  int n_samples = 0;
  std::uint64_t seed = 0;
  Vec xi0;

  nlohmann::json to_json() const;
};

double j1_index(const Vec& nu, const Field& f, const Mat& samples, const Vec& xi0);
double j2_index(const Vec& nu, const Field& f, const Mat& samples, const Vec& xi0,
                const Eigen::Vector2d& omega);

// Both indices are quadratic in nu; the minimizer is one ridge-regularized
// normal-equations solve (ridge 1e-10).
DecompResult optimize_decomposition(const Field& f, const Box& region, int n_d,
                                    const Eigen::Vector2d& omega, std::uint64_t seed,
                                    const Vec& xi0);

struct SplitFields {
  Field f_c;               // the conservative part (analytic jacobian)
  Field f_nc;              // f - f_c
  ScalarField potential;   // potential of f_c
};

SplitFields split(const Field& f, const Vec& nu, const Vec& xi0);

}  // namespace conds
