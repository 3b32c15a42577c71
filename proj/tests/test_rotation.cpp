#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "conds/rotation.hpp"
#include "conds/scenarios.hpp"

#include <cmath>
#include <random>

using namespace conds;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec random_theta(std::mt19937_64& rng, double margin = 0.1) {
  std::uniform_real_distribution<double> u1(margin, M_PI - margin);
  std::uniform_real_distribution<double> u2(-M_PI, M_PI);
  return vec2(u1(rng), u2(rng));
}

// Generic smooth chart-space field (not conservative).
Field chart_test_field() {
  Field f;
  f.dim = 2;
  f.eval = [](const Vec& t) {
    return vec2(std::sin(t[1]) - 0.3 * (t[0] - 1.2), std::cos(t[0]) * t[1] - 0.1);
  };
  return f;
}

const SphereModel& arc_model() {
  static const SphereModel model = [] {
    LearnConfig cfg;
    return learn_sphere_ds(demo_sphere_arc(), cfg);
  }();
  return model;
}

}  // namespace

TEST_CASE("spherical chart: embedding, inverse, and Jacobian") {
  SphereChart chart;

  CHECK((chart.embed(vec2(M_PI / 2.0, 0.0)) - (Vec(3) << 1, 0, 0).finished()).norm() <
        1e-14);
  CHECK((chart.embed(vec2(M_PI / 2.0, M_PI / 2.0)) - (Vec(3) << 0, 1, 0).finished())
            .norm() < 1e-14);

  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    Vec theta = random_theta(rng);
    Vec x = chart.embed(theta);
    CHECK(std::abs(x.norm() - 1.0) < 1e-12);
    Vec back = chart.invert(x);
    CHECK(std::abs(back[0] - theta[0]) < 1e-10);
    CHECK(std::abs(std::remainder(back[1] - theta[1], 2.0 * M_PI)) < 1e-10);

    Mat J = chart.jacobian(theta);
    double h = 1e-6;
    for (int d = 0; d < 2; ++d) {
      Vec tp = theta, tm = theta;
      tp[d] += h;
      tm[d] -= h;
      Vec col_fd = (chart.embed(tp) - chart.embed(tm)) / (2.0 * h);
      CHECK((J.col(d) - col_fd).norm() < 1e-6);
    }
  }

  CHECK_THROWS_AS(chart.invert((Vec(3) << 0, 0, 1).finished()), ValidationError);
  CHECK_THROWS_AS(chart.invert((Vec(3) << 1e-3, 0, -1).finished().normalized()),
                  ValidationError);
}

TEST_CASE("mapped fields are tangent to the sphere everywhere") {
  SphereChart chart;
  Field f_theta = chart_test_field();
  Field on_sphere = map_to_sphere(chart, f_theta);

  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    Vec x = chart.embed(random_theta(rng));
    Vec xdot = on_sphere.eval(x);
    CHECK(std::abs(x.dot(xdot)) < 1e-10);
  }
}

TEST_CASE("loop work is invariant under the chart map for the covector field") {
  SphereChart chart;

  auto theta_loop = [](double t) {
    double a = 2.0 * M_PI * t;
    return vec2(1.3 + 0.4 * std::cos(a), 0.2 + 0.7 * std::sin(a));
  };

  SUBCASE("generic field: both integrals agree (change of variables)") {
    LoopWorkPair pair = sphere_loop_work(chart, chart_test_field(), theta_loop, 4096);
    CHECK(std::abs(pair.chart.value) > 1e-3);  // genuinely non-conservative
    CHECK(pair.sphere.value == doctest::Approx(pair.chart.value).epsilon(1e-6));
  }

  SUBCASE("gradient field: both integrals vanish") {
    // f = -grad(0.5 |theta - c|^2)
    Vec c = vec2(1.4, -0.3);
    Field grad;
    grad.dim = 2;
    grad.eval = [c](const Vec& t) { return (-(t - c)).eval(); };
    LoopWorkPair pair = sphere_loop_work(chart, grad, theta_loop, 4096);
    CHECK(std::abs(pair.chart.value) < 1e-6);
    CHECK(std::abs(pair.sphere.value) < 1e-6);
  }
}

TEST_CASE("sphere demos pull back into the chart and round-trip") {
  SphereChart chart;
  DemoSet sphere_demos = demo_sphere_arc();
  DemoSet chart_demos = pull_back_demos(chart, sphere_demos);
  REQUIRE(chart_demos.dim() == 2);
  for (size_t t = 0; t < sphere_demos.trajectories.size(); ++t) {
    const Mat& orig = sphere_demos.trajectories[t].points;
    const Mat& back = chart_demos.trajectories[t].points;
    for (int i = 0; i < orig.cols(); ++i) {
      CHECK((chart.embed(back.col(i)) - orig.col(i)).norm() < 1e-10);
    }
  }
  CHECK((chart.embed(chart_demos.equilibrium) - sphere_demos.equilibrium).norm() < 1e-10);
}

TEST_CASE("learned sphere DS: conservative in the chart, convergent on the sphere") {
  const SphereModel& model = arc_model();
  DemoSet demos = demo_sphere_arc();
  SphereChart chart = model.chart;

  SUBCASE("chart-space conservativeness and pinned equilibrium") {
    DemoSet chart_demos = pull_back_demos(chart, demos);
    Box bbox = demo_bounding_box(chart_demos);
    CHECK(max_loop_work(model.chart_field(), bbox, 20, 2048, 9) <= 1e-6);
    CHECK(model.chart_field().eval(chart_demos.equilibrium).norm() <= 1e-8);
    CHECK((chart.embed(chart_demos.equilibrium) - demos.equilibrium).norm() < 1e-3);
  }

  SUBCASE("loop work on the sphere vanishes through the covector map") {
    DemoSet chart_demos = pull_back_demos(chart, demos);
    Box bbox = demo_bounding_box(chart_demos);
    Vec c = 0.5 * (bbox.lo + bbox.hi);
    Vec h = 0.35 * (bbox.hi - bbox.lo);
    auto loop = [c, h](double t) {
      double a = 2.0 * M_PI * t;
      return (c + (Vec(2) << h[0] * std::cos(a), h[1] * std::sin(a)).finished()).eval();
    };
    LoopWorkPair pair = sphere_loop_work(chart, model.chart_field(), loop, 4096);
    CHECK(std::abs(pair.chart.value) <= 1e-6);
    CHECK(std::abs(pair.sphere.value) <= 1e-6);
  }

  SUBCASE("rollouts stay on the sphere and reach the attractor") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nrm(0.0, 0.05);
    Field f = model.sphere_field();
    for (int k = 0; k < 5; ++k) {
      Vec start = demos.trajectories[k % demos.trajectories.size()].points.col(0);
      Vec noise(3);
      noise << nrm(rng), nrm(rng), nrm(rng);
      start = (start + noise).normalized();
      Mat path = rollout_sphere(f, start, 1e-3, 400000, [&](const Vec& x) {
        return std::acos(std::clamp(x.dot(demos.equilibrium), -1.0, 1.0)) < 1e-2;
      });
      for (int i = 0; i < path.cols(); i += 50) {
        CHECK(std::abs(path.col(i).norm() - 1.0) < 1e-9);
      }
      Vec end = path.col(path.cols() - 1);
      CHECK(std::acos(std::clamp(end.dot(demos.equilibrium), -1.0, 1.0)) < 1e-2);
    }
  }

  SUBCASE("potential on the sphere matches the chart potential") {
    std::mt19937_64 rng(13);
    DemoSet chart_demos = pull_back_demos(chart, demos);
    Box bbox = demo_bounding_box(chart_demos);
    for (int k = 0; k < 20; ++k) {
      Vec theta = uniform_in_box(bbox, rng);
      CHECK(model.potential(chart.embed(theta)) ==
            doctest::Approx(model.model.vp(theta)).epsilon(1e-8));
    }
  }
}
