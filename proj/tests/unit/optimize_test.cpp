#include <doctest.h>

#include <cmath>
#include <random>

#include "symkan/errors.hpp"
#include "symkan/optimize.hpp"

using namespace symkan;

namespace {

double rosenbrock(std::span<const double> x, std::span<double> g) {
  const double a = 1.0 - x[0];
  const double b = x[1] - x[0] * x[0];
  g[0] = -2.0 * a - 400.0 * x[0] * b;
  g[1] = 200.0 * b;
  return a * a + 100.0 * b * b;
}

}  // namespace

TEST_SUITE("optimize") {
  TEST_CASE("adam: zero gradient leaves parameters and decays moments") {
    std::vector<double> x{1.0, -2.0};
    AdamState st;
    adam_step(x, std::vector<double>{0.5, -0.5}, st, 0.1);
    const auto m = st.m;
    const auto after = x;
    adam_step(x, std::vector<double>{0.0, 0.0}, st, 0.1);
    // Bias-corrected m is still nonzero, so parameters keep moving; the raw
    // moments must shrink by beta1 and beta2.
    CHECK(st.m[0] == doctest::Approx(0.9 * m[0]));
    CHECK(st.step == 2);
    std::vector<double> y{1.0, -2.0};
    AdamState fresh;
    adam_step(y, std::vector<double>{0.0, 0.0}, fresh, 0.1);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == -2.0);
    CHECK(after != x);
  }

  TEST_CASE("adam converges on a 1D quadratic") {
    std::vector<double> x{0.0};
    AdamState st;
    for (int i = 0; i < 200; ++i) {
      const std::vector<double> g{2.0 * (x[0] - 3.0)};
      adam_step(x, g, st, 0.1);
    }
    CHECK(std::abs(x[0] - 3.0) <= 1e-2);
  }

  TEST_CASE("adam groups use their own learning rates") {
    std::vector<double> x{0.0, 0.0, 0.0};
    const std::vector<std::size_t> a{0}, b{1};
    const AdamGroup groups[] = {{a, 1e-3}, {b, 1e-4}};
    AdamState st;
    adam_step(x, std::vector<double>{1.0, 1.0, 1.0}, st, groups);
    // First bias-corrected step has magnitude lr.
    CHECK(x[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(x[1] == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK(x[2] == 0.0);
  }

  TEST_CASE("adam rejects non-finite gradients without side effects") {
    std::vector<double> x{1.0, 2.0};
    AdamState st;
    st.reset(2);
    CHECK_THROWS_AS(adam_step(x, std::vector<double>{1.0, NAN}, st, 0.1), NumericalError);
    CHECK(x[0] == 1.0);
    CHECK(st.step == 0);
    CHECK(st.m[0] == 0.0);
  }

  TEST_CASE("adam is deterministic") {
    std::vector<double> x1{0.3, -0.7}, x2 = x1;
    AdamState s1, s2;
    for (int i = 0; i < 50; ++i) {
      const std::vector<double> g1{std::sin(x1[0]), x1[1] * x1[1]};
      const std::vector<double> g2{std::sin(x2[0]), x2[1] * x2[1]};
      adam_step(x1, g1, s1, 0.05);
      adam_step(x2, g2, s2, 0.05);
    }
    CHECK(x1 == x2);
  }

  TEST_CASE("lbfgs on a quadratic converges in at most dim + 2 iterations") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (int dim : {1, 3, 8}) {
      std::vector<double> a(static_cast<std::size_t>(dim)), x0(a.size());
      for (auto& v : a) v = n01(rng);
      for (auto& v : x0) v = 5.0 * n01(rng);
      const SmoothObjective f = [&](std::span<const double> x, std::span<double> g) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          g[i] = x[i] - a[i];
          s += 0.5 * g[i] * g[i];
        }
        return s;
      };
      const auto r = lbfgs_minimize(f, x0);
      CHECK(r.iterations <= dim + 2);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(r.x[i] - a[i]) <= 1e-10);
    }
  }

  TEST_CASE("lbfgs on an ill-conditioned quadratic") {
    const std::vector<double> d{1.0, 10.0, 100.0, 1000.0};
    const SmoothObjective f = [&](std::span<const double> x, std::span<double> g) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] = d[i] * (x[i] - 1.0);
        s += 0.5 * d[i] * (x[i] - 1.0) * (x[i] - 1.0);
      }
      return s;
    };
    const auto r = lbfgs_minimize(f, std::vector<double>{0, 0, 0, 0});
    CHECK(r.reason == LbfgsTermination::GradientTolerance);
    for (double v : r.x) CHECK(std::abs(v - 1.0) <= 1e-10);
  }

  TEST_CASE("lbfgs on Rosenbrock") {
    const auto r = lbfgs_minimize(rosenbrock, std::vector<double>{-1.2, 1.0});
    CHECK(r.value <= 1e-8);
    CHECK(r.iterations <= 200);
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1]);
  }

  TEST_CASE("lbfgs at the optimum returns x0") {
    const std::vector<double> x0{1.0, 1.0};
    const auto r = lbfgs_minimize(rosenbrock, x0);
    CHECK(r.x == x0);
    CHECK(r.reason == LbfgsTermination::GradientTolerance);
    CHECK(std::string(termination_name(r.reason)) == "gradient_tolerance");
    CHECK(r.iterations == 0);
  }

  TEST_CASE("lbfgs honors max_iter and never worsens the start") {
    LbfgsOptions o;
    o.max_iter = 3;
    const std::vector<double> x0{-1.2, 1.0};
    std::vector<double> g(2);
    const double f0 = rosenbrock(x0, g);
    const auto r = lbfgs_minimize(rosenbrock, x0, o);
    CHECK(r.iterations == 3);
    CHECK(r.reason == LbfgsTermination::MaxIterations);
    CHECK(r.value <= f0);
  }

  TEST_CASE("lbfgs backs off from non-finite regions") {
    // log barrier: infinite for x <= 0, minimum at x = 1.
    const SmoothObjective f = [](std::span<const double> x, std::span<double> g) {
      if (x[0] <= 0.0) return std::numeric_limits<double>::infinity();
      g[0] = 1.0 - 1.0 / x[0];
      return x[0] - std::log(x[0]);
    };
    const auto r = lbfgs_minimize(f, std::vector<double>{8.0});
    CHECK(std::abs(r.x[0] - 1.0) <= 1e-8);
  }

  TEST_CASE("lbfgs reports line search failure on a non-smooth objective") {
    // The gradient lies about the slope, so no step decreases f along -g.
    const SmoothObjective f = [](std::span<const double> x, std::span<double> g) {
      g[0] = -1.0;
      return x[0] * x[0];
    };
    const std::vector<double> x0{0.0};
    const auto r = lbfgs_minimize(f, x0);
    CHECK(r.reason == LbfgsTermination::LineSearchFailed);
    CHECK(r.value <= 0.0);
    CHECK(r.x == x0);
  }

  TEST_CASE("lbfgs options validate") {
    LbfgsOptions o;
    o.c2 = 1e-5;
    CHECK_THROWS_AS(o.validate(), ConfigError);
  }
}
