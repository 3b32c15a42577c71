#pragma once

#include "conds/common.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace conds {

// Anisotropic squared-exponential kernel hyperparameters.
struct Hyperparams {
  Vec length_scales;       // one per input dimension, > 0
  double signal_variance = 1.0;
  double noise_variance = 1e-8;  // >= jitter floor

  nlohmann::json to_json() const;
  static Hyperparams from_json(const nlohmann::json& j);
};

struct HyperBounds {
  Hyperparams lower;
  Hyperparams upper;
};

class GpModel {
 public:
  // Fits K(X,X) + sigma_n^2 I once (Cholesky); jitter escalates 1e-12 -> 1e-6
  // multiplicatively if the factorization fails.
  static GpModel fit(const Mat& X, const Vec& y, const Hyperparams& hyper);

  double mean(const Vec& xi) const;
  Vec mean_gradient(const Vec& xi) const;
  double variance(const Vec& xi) const;  // scalar posterior variance (tests only)
  double nlml() const;

  // k(xi, X) as a column vector over training points.
  Vec kvec(const Vec& xi) const;
  // d k(xi, X) / d xi: n x N matrix of kernel gradients.
  Mat kvec_gradient(const Vec& xi) const;
  // Solve (K + sigma_n^2 I) z = b through the stored factor.
  Vec solve(const Vec& b) const;
  Mat solve(const Mat& B) const;

  const Mat& inputs() const { return X_; }
  const Vec& targets() const { return y_; }
  const Hyperparams& hyper() const { return hyper_; }
  const Vec& alpha() const { return alpha_; }
  const Mat& factor() const { return L_; }
  double jitter_used() const { return jitter_; }
  int input_dim() const { return static_cast<int>(X_.rows()); }
  int n_train() const { return static_cast<int>(X_.cols()); }

  double kernel(const Vec& a, const Vec& b) const;

  nlohmann::json to_json() const;
  static GpModel from_json(const nlohmann::json& j);  // refits the factor

 private:
  Mat X_;
  Vec y_;
  Hyperparams hyper_;
  Mat L_;       // lower Cholesky factor of K + (sigma_n^2 + jitter) I
  Vec alpha_;   // (K + sigma_n^2 I)^{-1} y
  double jitter_ = 0.0;
};

struct HyperOptResult {
  Hyperparams hyper;
  std::vector<double> nlml_log;  // monotone non-increasing accepted values
  bool warning = false;          // all candidate fits failed; init returned
};

// Coordinate-wise golden-section search in log-parameter space.
HyperOptResult optimize_hyperparams(const Mat& X, const Vec& y, const Hyperparams& init,
                                    const HyperBounds& bounds, int max_iters = 3);

}  // namespace conds
