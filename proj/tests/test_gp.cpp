#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "conds/gp.hpp"

#include <cmath>
#include <random>

using namespace conds;

namespace {

Hyperparams iso_hyper(int dim, double ls, double sf = 1.0, double sn = 1e-8) {
  Hyperparams h;
  h.length_scales = Vec::Constant(dim, ls);
  h.signal_variance = sf;
  h.noise_variance = sn;
  return h;
}

}  // namespace

TEST_CASE("single-point posterior interpolates and decays like the kernel") {
  Mat X(1, 1);
  X << 0.0;
  Vec y(1);
  y << 1.0;
  double ls = 0.7;
  GpModel gp = GpModel::fit(X, y, iso_hyper(1, ls, 1.0, 0.0));

  Vec q(1);
  q << 0.0;
  CHECK(gp.mean(q) == doctest::Approx(1.0).epsilon(1e-12));

  q << 0.9;
  CHECK(gp.mean(q) == doctest::Approx(std::exp(-0.81 / (2.0 * ls * ls))).epsilon(1e-10));

  q << 20.0 * ls;
  CHECK(std::abs(gp.mean(q)) < 1e-8);
}

TEST_CASE("alpha matches a dense solve on random 2D data") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int N = 10;
  Mat X(2, N);
  Vec y(N);
  for (int i = 0; i < N; ++i) {
    X.col(i) << u(rng), u(rng);
    y[i] = u(rng);
  }
  Hyperparams h = iso_hyper(2, 0.5, 1.3, 1e-4);
  GpModel gp = GpModel::fit(X, y, h);

  // independent dense route
  Mat K(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) K(i, j) = gp.kernel(X.col(i), X.col(j));
  K.diagonal().array() += h.noise_variance + gp.jitter_used();
  Vec alpha_dense = K.ldlt().solve(y);
  CHECK((gp.alpha() - alpha_dense).norm() < 1e-10);

  // posterior mean against the closed form at random queries
  for (int k = 0; k < 20; ++k) {
    Vec q(2);
    q << u(rng), u(rng);
    Vec kv(N);
    for (int i = 0; i < N; ++i) kv[i] = gp.kernel(q, X.col(i));
    CHECK(gp.mean(q) == doctest::Approx(kv.dot(alpha_dense)).epsilon(1e-12));
  }
}

TEST_CASE("nlml of a scalar Gaussian and a dense log-determinant oracle") {
  Mat X(1, 1);
  X << 0.3;
  Vec y(1);
  y << 0.0;
  GpModel gp = GpModel::fit(X, y, iso_hyper(1, 1.0, 1.0, 0.5));
  CHECK(gp.nlml() == doctest::Approx(0.5 * std::log(2.0 * M_PI * 1.5)).epsilon(1e-12));

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int N = 12;
  Mat X2(2, N);
  Vec y2(N);
  for (int i = 0; i < N; ++i) {
    X2.col(i) << u(rng), u(rng);
    y2[i] = std::sin(X2(0, i)) + 0.1 * u(rng);
  }
  Hyperparams h = iso_hyper(2, 0.6, 0.8, 1e-3);
  GpModel gp2 = GpModel::fit(X2, y2, h);
  Mat K(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) K(i, j) = gp2.kernel(X2.col(i), X2.col(j));
  K.diagonal().array() += h.noise_variance + gp2.jitter_used();
  double logdet = std::log(K.determinant());
  double direct = 0.5 * y2.dot(K.ldlt().solve(y2)) + 0.5 * logdet +
                  0.5 * N * std::log(2.0 * M_PI);
  CHECK(gp2.nlml() == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("posterior mean is linear in the targets") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int N = 15;
  Mat X(2, N);
  Vec y1(N), y2(N);
  for (int i = 0; i < N; ++i) {
    X.col(i) << u(rng), u(rng);
    y1[i] = u(rng);
    y2[i] = u(rng);
  }
  Hyperparams h = iso_hyper(2, 0.4, 1.0, 1e-6);
  GpModel a = GpModel::fit(X, y1, h);
  GpModel b = GpModel::fit(X, y2, h);
  GpModel c = GpModel::fit(X, y1 + y2, h);
  for (int k = 0; k < 30; ++k) {
    Vec q(2);
    q << u(rng), u(rng);
    CHECK(std::abs(c.mean(q) - a.mean(q) - b.mean(q)) < 1e-10);
  }
}

TEST_CASE("analytic mean gradient: hand-differentiated kernel and FD oracle") {
  SUBCASE("single training point at the origin") {
    Mat X(2, 1);
    X << 0.0, 0.0;
    Vec y(1);
    y << 1.0;
    double ls = 0.8, sf = 1.7;
    GpModel gp = GpModel::fit(X, y, iso_hyper(2, ls, sf, 0.0));
    Vec q(2);
    q << ls, 0.0;
    // d/dx [sf exp(-x^2/(2 ls^2))] alpha at x = ls
    double expect = -sf * std::exp(-0.5) / ls * gp.alpha()[0];
    Vec g = gp.mean_gradient(q);
    CHECK(g[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(g[1]) < 1e-14);
  }

  SUBCASE("finite differences at 100 random probes") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int N = 25;
    Mat X(2, N);
    Vec y(N);
    for (int i = 0; i < N; ++i) {
      X.col(i) << u(rng), u(rng);
      y[i] = std::cos(2.0 * X(0, i)) * X(1, i);
    }
    GpModel gp = GpModel::fit(X, y, iso_hyper(2, 0.5, 1.0, 1e-6));
    double h = 1e-5;
    for (int k = 0; k < 100; ++k) {
      Vec q(2);
      q << u(rng), u(rng);
      Vec g = gp.mean_gradient(q);
      Vec fd(2);
      for (int d = 0; d < 2; ++d) {
        Vec qp = q, qm = q;
        qp[d] += h;
        qm[d] -= h;
        fd[d] = (gp.mean(qp) - gp.mean(qm)) / (2.0 * h);
      }
      CHECK((g - fd).norm() <= 1e-5 * (1.0 + g.norm()));
    }
  }
}

TEST_CASE("hyperparameter search recovers a known length scale within factor 2") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double ls_true = 0.5;
  int N = 40;
  Mat X(1, N);
  for (int i = 0; i < N; ++i) X(0, i) = u(rng);
  // draw y from the prior at the true length scale
  Mat K(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      K(i, j) = std::exp(-0.5 * std::pow((X(0, i) - X(0, j)) / ls_true, 2));
  K.diagonal().array() += 1e-10;
  Eigen::LLT<Mat> llt(K);
  REQUIRE(llt.info() == Eigen::Success);
  std::normal_distribution<double> nrm(0.0, 1.0);
  Vec z(N);
  for (int i = 0; i < N; ++i) z[i] = nrm(rng);
  Vec y = llt.matrixL() * z;

  HyperBounds bounds{iso_hyper(1, 0.05, 0.1, 1e-8), iso_hyper(1, 5.0, 10.0, 1e-2)};
  HyperOptResult res = optimize_hyperparams(X, y, iso_hyper(1, 2.0, 1.0, 1e-4), bounds, 5);
  CHECK_FALSE(res.warning);
  double ls_hat = res.hyper.length_scales[0];
  CHECK(ls_hat >= ls_true / 2.0);
  CHECK(ls_hat <= ls_true * 2.0);

  // the accepted-iterate log is monotone non-increasing
  for (size_t i = 1; i < res.nlml_log.size(); ++i) {
    CHECK(res.nlml_log[i] <= res.nlml_log[i - 1] + 1e-12);
  }
  CHECK(res.nlml_log.back() <=
        GpModel::fit(X, y, iso_hyper(1, 2.0, 1.0, 1e-4)).nlml() + 1e-12);
}

TEST_CASE("constant-zero targets drive the noise to its lower bound") {
  Mat X(1, 8);
  for (int i = 0; i < 8; ++i) X(0, i) = 0.3 * i;
  Vec y = Vec::Zero(8);
  Hyperparams init = iso_hyper(1, 1.0, 1.0, 1e-2);
  HyperBounds bounds{iso_hyper(1, 0.1, 0.01, 1e-8), iso_hyper(1, 5.0, 10.0, 1.0)};
  HyperOptResult res = optimize_hyperparams(X, y, init, bounds, 5);
  CHECK(res.hyper.noise_variance == doctest::Approx(1e-8).epsilon(0.5));
  CHECK(res.nlml_log.back() <= GpModel::fit(X, y, init).nlml() + 1e-12);
}

TEST_CASE("fit validation and serialization round trip") {
  Mat X(2, 3);
  X << 0, 1, 2, 0, -1, 1;
  Vec y(3);
  y << 1.0, -0.5, 0.25;
  Hyperparams h = iso_hyper(2, 0.9, 1.2, 1e-5);
  GpModel gp = GpModel::fit(X, y, h);

  GpModel back = GpModel::from_json(gp.to_json());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    Vec q(2);
    q << u(rng), u(rng);
    CHECK(back.mean(q) == doctest::Approx(gp.mean(q)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(GpModel::fit(Mat(2, 0), Vec(0), h), ValidationError);
  CHECK_THROWS_AS(GpModel::fit(X, Vec::Zero(2), h), ValidationError);
  Hyperparams bad = h;
  bad.length_scales = Vec::Constant(2, -1.0);
  CHECK_THROWS_AS(GpModel::fit(X, y, bad), ValidationError);
}
