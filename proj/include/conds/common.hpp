#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace conds {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Base error for the toolkit; `kind` is a short machine-readable tag used by
// the CLI to map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Input/validation problems (CLI exit code 2).
class ValidationError : public Error {
 public:
  ValidationError(const std::string& kind, const std::string& msg) : Error(kind, msg) {}
};

// Numerical/solver failures (CLI exit code 3).
class SolverError : public Error {
 public:
  SolverError(const std::string& kind, const std::string& msg) : Error(kind, msg) {}
};

// Axis-aligned box region.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double diagonal() const { return (hi - lo).norm(); }
  bool contains(const Vec& x, double slack = 0.0) const {
    for (int i = 0; i < dim(); ++i) {
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    }
    return true;
  }
  Box inflated(double factor) const {
    Vec c = 0.5 * (lo + hi);
    Vec h = 0.5 * factor * (hi - lo);
    return Box{c - h, c + h};
  }
};

inline double smoothstep01(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * (3.0 - 2.0 * x);
}

// Deterministic uniform sample in a box.
inline Vec uniform_in_box(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec x(box.dim());
  for (int i = 0; i < box.dim(); ++i) x[i] = box.lo[i] + u(rng) * (box.hi[i] - box.lo[i]);
  return x;
}

// Latin hypercube sample set (columns are points), deterministic under seed.
Mat latin_hypercube(const Box& box, int n_samples, std::uint64_t seed);

}  // namespace conds
