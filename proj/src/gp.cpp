#include "conds/gp.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace conds {

nlohmann::json Hyperparams::to_json() const {
  return nlohmann::json{
      {"length_scales", std::vector<double>(length_scales.data(),
                                            length_scales.data() + length_scales.size())},
      {"signal_variance", signal_variance},
      {"noise_variance", noise_variance},
  };
}

Hyperparams Hyperparams::from_json(const nlohmann::json& j) {
  Hyperparams h;
  auto ls = j.at("length_scales").get<std::vector<double>>();
  h.length_scales = Eigen::Map<const Vec>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  h.signal_variance = j.at("signal_variance").get<double>();
  h.noise_variance = j.at("noise_variance").get<double>();
  return h;
}

double GpModel::kernel(const Vec& a, const Vec& b) const {
  double q = 0.0;
  for (int d = 0; d < a.size(); ++d) {
    double r = (a[d] - b[d]) / hyper_.length_scales[d];
    q += r * r;
  }
  return hyper_.signal_variance * std::exp(-0.5 * q);
}

GpModel GpModel::fit(const Mat& X, const Vec& y, const Hyperparams& hyper) {
  if (X.cols() < 1) throw ValidationError("empty-training-set", "GP fit needs N >= 1");
  if (X.cols() != y.size()) {
    throw ValidationError("shape-mismatch", "inputs and targets disagree in N");
  }
  if (hyper.length_scales.size() != X.rows()) {
    throw ValidationError("shape-mismatch", "length scales must match input dimension");
  }
  if (hyper.length_scales.minCoeff() <= 0.0 || hyper.signal_variance <= 0.0 ||
      hyper.noise_variance < 0.0) {
    throw ValidationError("bad-hyperparams", "length scales / variances out of range");
  }

  GpModel m;
  m.X_ = X;
  m.y_ = y;
  m.hyper_ = hyper;
  const int N = static_cast<int>(X.cols());

  Mat K(N, N);
  for (int i = 0; i < N; ++i) {
    K(i, i) = hyper.signal_variance;
    for (int j = i + 1; j < N; ++j) {
      double k = m.kernel(X.col(i), X.col(j));
      K(i, j) = k;
      K(j, i) = k;
    }
  }
  K.diagonal().array() += hyper.noise_variance;

  double jitter = 0.0;
  for (double try_jitter : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
    Mat Kj = K;
    Kj.diagonal().array() += try_jitter;
    Eigen::LLT<Mat> llt(Kj);
    if (llt.info() == Eigen::Success) {
      m.L_ = llt.matrixL();
      jitter = try_jitter;
      m.jitter_ = jitter;
      m.alpha_ = llt.solve(y);
      return m;
    }
  }
  throw SolverError("ill-conditioned-kernel",
                    "kernel matrix not positive definite after jitter escalation to 1e-6");
}

Vec GpModel::kvec(const Vec& xi) const {
  Vec k(n_train());
  for (int j = 0; j < n_train(); ++j) k[j] = kernel(xi, X_.col(j));
  return k;
}

Mat GpModel::kvec_gradient(const Vec& xi) const {
  const int n = input_dim();
  Mat G(n, n_train());
  for (int j = 0; j < n_train(); ++j) {
    double k = kernel(xi, X_.col(j));
    for (int d = 0; d < n; ++d) {
      double l2 = hyper_.length_scales[d] * hyper_.length_scales[d];
      G(d, j) = -k * (xi[d] - X_(d, j)) / l2;
    }
  }
  return G;
}

double GpModel::mean(const Vec& xi) const { return kvec(xi).dot(alpha_); }

Vec GpModel::mean_gradient(const Vec& xi) const { return kvec_gradient(xi) * alpha_; }

double GpModel::variance(const Vec& xi) const {
  Vec k = kvec(xi);
  Vec v = L_.triangularView<Eigen::Lower>().solve(k);
  return std::max(0.0, hyper_.signal_variance - v.squaredNorm());
}

Vec GpModel::solve(const Vec& b) const {
  Vec z = L_.triangularView<Eigen::Lower>().solve(b);
  return L_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Mat GpModel::solve(const Mat& B) const {
  Mat Z = L_.triangularView<Eigen::Lower>().solve(B);
  return L_.transpose().triangularView<Eigen::Upper>().solve(Z);
}

double GpModel::nlml() const {
  double logdet_half = L_.diagonal().array().log().sum();
  return 0.5 * y_.dot(alpha_) + logdet_half +
         0.5 * n_train() * std::log(2.0 * std::numbers::pi);
}

nlohmann::json GpModel::to_json() const {
  nlohmann::json j;
  j["hyper"] = hyper_.to_json();
  std::vector<std::vector<double>> cols;
  for (int c = 0; c < X_.cols(); ++c) {
    cols.emplace_back(X_.col(c).data(), X_.col(c).data() + X_.rows());
  }
  j["inputs"] = cols;
  j["targets"] = std::vector<double>(y_.data(), y_.data() + y_.size());
  return j;
}

GpModel GpModel::from_json(const nlohmann::json& j) {
  auto cols = j.at("inputs").get<std::vector<std::vector<double>>>();
  if (cols.empty()) throw ValidationError("empty-training-set", "GP JSON has no inputs");
  Mat X(static_cast<Eigen::Index>(cols[0].size()), static_cast<Eigen::Index>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) {
    X.col(static_cast<Eigen::Index>(c)) =
        Eigen::Map<const Vec>(cols[c].data(), static_cast<Eigen::Index>(cols[c].size()));
  }
  auto t = j.at("targets").get<std::vector<double>>();
  Vec y = Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size()));
  return fit(X, y, Hyperparams::from_json(j.at("hyper")));
}

namespace {

constexpr double kGolden = 0.6180339887498949;

// Golden-section minimization of a 1D function on [lo, hi]; `f` may return
// +inf for failed evaluations.
double golden_min(const std::function<double(double)>& f, double lo, double hi, int evals) {
  double a = lo, b = hi;
  double x1 = b - kGolden * (b - a);
  double x2 = a + kGolden * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < evals; ++i) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

}  // namespace

HyperOptResult optimize_hyperparams(const Mat& X, const Vec& y, const Hyperparams& init,
                                    const HyperBounds& bounds, int max_iters) {
  const int n = static_cast<int>(X.rows());
  // Parameter vector in log space: [log l_1 .. log l_n, log sigma_f^2, log sigma_n^2].
  const int P = n + 2;
  auto pack = [&](const Hyperparams& h) {
    Vec p(P);
    for (int d = 0; d < n; ++d) p[d] = std::log(h.length_scales[d]);
    p[n] = std::log(h.signal_variance);
    p[n + 1] = std::log(std::max(h.noise_variance, 1e-12));
    return p;
  };
  auto unpack = [&](const Vec& p) {
    Hyperparams h;
    h.length_scales = p.head(n).array().exp();
    h.signal_variance = std::exp(p[n]);
    h.noise_variance = std::exp(p[n + 1]);
    return h;
  };
  Vec lo = pack(bounds.lower), hi = pack(bounds.upper);
  for (int k = 0; k < P; ++k) {
    if (lo[k] > hi[k]) throw ValidationError("bad-bounds", "hyperparameter bounds inverted");
  }

  auto objective = [&](const Vec& p) -> double {
    try {
      return GpModel::fit(X, y, unpack(p)).nlml();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  HyperOptResult res;
  Vec cur = pack(init);
  for (int k = 0; k < P; ++k) cur[k] = std::clamp(cur[k], lo[k], hi[k]);
  double best = objective(cur);
  if (!std::isfinite(best)) {
    res.hyper = init;
    res.warning = true;
    return res;
  }
  res.nlml_log.push_back(best);

  for (int it = 0; it < max_iters; ++it) {
    for (int k = 0; k < P; ++k) {
      if (hi[k] - lo[k] < 1e-12) continue;
      Vec trial = cur;
      double xk = golden_min(
          [&](double v) {
            trial[k] = v;
            return objective(trial);
          },
          lo[k], hi[k], 24);
      trial[k] = xk;
      double f = objective(trial);
      if (f < best) {
        best = f;
        cur = trial;
      }
      res.nlml_log.push_back(best);
    }
  }
  res.hyper = unpack(cur);
  return res;
}

}  // namespace conds
