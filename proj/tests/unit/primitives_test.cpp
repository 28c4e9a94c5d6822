#include <doctest.h>

#include <cmath>
#include <random>

#include "symkan/primitives.hpp"

using namespace symkan;

TEST_SUITE("primitives") {
  TEST_CASE("default library") {
    const auto lib = default_library();
    CHECK(lib.size() == 13);
    const std::vector<std::string> expect{"0",   "1",   "x",        "x^2",     "x^3",  "sin", "cos",
                                          "tanh", "exp", "log1pabs", "lorentz", "sinh", "cosh"};
    CHECK(lib.names() == expect);
  }

  TEST_CASE("eval examples") {
    const auto lib = default_library();
    auto get = [&](const char* n) { return lib[static_cast<std::size_t>(lib.index_of(n))]; };
    const auto l = get("lorentz").eval(0.0);
    CHECK(l[0] == 1.0);
    CHECK(l[1] == 0.0);
    CHECK(l[2] == doctest::Approx(-2.0));
    const auto s = get("x^2").eval(3.0);
    CHECK(s[0] == 9.0);
    CHECK(s[1] == 6.0);
    CHECK(s[2] == 2.0);
    CHECK(s[3] == 0.0);
    const auto e = get("exp").eval(100.0, 0);
    CHECK(e.size() == 1);
    CHECK(e[0] == doctest::Approx(std::exp(30.0)));
    CHECK(e[0] == doctest::Approx(1.0686e13).epsilon(1e-4));
    const auto g = get("log1pabs").eval(0.0, 1);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    const auto t = get("tanh").eval(0.0, 3);
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 1.0);
    CHECK(t[2] == 0.0);
    CHECK(t[3] == doctest::Approx(-2.0));
    CHECK_THROWS_AS((void)get("sin").eval(0.0, 4), DomainError);
  }

  TEST_CASE("library_subset") {
    const std::vector<std::string> vdp{"sin", "cos", "exp", "x", "x^2"};
    const auto a = library_subset(vdp);
    CHECK(a.size() == 5);
    CHECK(a.names() == vdp);
    const std::vector<std::string> lap{"1", "x", "x^2", "sin", "cos", "sinh", "cosh", "exp"};
    CHECK(library_subset(lap).size() == 8);
    CHECK_THROWS_AS(library_subset(std::vector<std::string>{}), ConfigError);
    try {
      library_subset(std::vector<std::string>{"sin", "bogus"});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("bogus") != std::string::npos);
      CHECK(msg.find("lorentz") != std::string::npos);
    }
    CHECK_THROWS_AS(library_subset(std::vector<std::string>{"sin", "sin"}), ConfigError);
    CHECK(library_subset(std::vector<std::string>{"square", "identity"}).names() ==
          std::vector<std::string>{"x^2", "x"});
  }

  TEST_CASE("derivatives match central differences") {
    const auto lib = default_library();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const double h = 1e-5;
    for (const auto& p : lib.primitives()) {
      for (int i = 0; i < 100; ++i) {
        const double x = u(rng);
        if (p.id == PrimitiveId::Log1pAbs && std::abs(x) < 1e-3) continue;
        const auto d = p.eval(x);
        const double f1 = (p.eval(x + h)[0] - p.eval(x - h)[0]) / (2 * h);
        const double f2 = (p.eval(x + h)[1] - p.eval(x - h)[1]) / (2 * h);
        const double f3 = (p.eval(x + h)[2] - p.eval(x - h)[2]) / (2 * h);
        CHECK(std::abs(d[1] - f1) <= 1e-6 * std::max(1.0, std::abs(f1)));
        CHECK(std::abs(d[2] - f2) <= 1e-4 * std::max(1.0, std::abs(f2)));
        CHECK(std::abs(d[3] - f3) <= 1e-4 * std::max(1.0, std::abs(f3)));
        // Fourth derivative feeds exact parameter gradients of third-order jet terms.
        double d4[5] = {}, dp[5] = {}, dm[5] = {};
        primitive_derivatives(p.id, x, 4, d4);
        primitive_derivatives(p.id, x + h, 3, dp);
        primitive_derivatives(p.id, x - h, 3, dm);
        const double f4 = (dp[3] - dm[3]) / (2 * h);
        CHECK(std::abs(d4[4] - f4) <= 1e-4 * std::max(1.0, std::abs(f4)));
      }
    }
  }

  TEST_CASE("constant primitives have zero derivatives") {
    const auto lib = default_library();
    for (const char* n : {"0", "1"}) {
      const auto d = lib[static_cast<std::size_t>(lib.index_of(n))].eval(1.234);
      CHECK(d[1] == 0.0);
      CHECK(d[2] == 0.0);
      CHECK(d[3] == 0.0);
    }
  }

  TEST_CASE("values stay finite under the safety policy") {
    const auto lib = default_library();
    for (const auto& p : lib.primitives()) {
      for (double x : {-1e6, -40.0, -30.0, 0.0, 30.0, 40.0, 1e6}) {
        if (p.id == PrimitiveId::Cube && std::abs(x) > 1e5) continue;
        for (double v : p.eval(x)) CHECK(std::isfinite(v));
      }
    }
  }

  TEST_CASE("aliases resolve to canonical names") {
    CHECK(canonical_primitive_name("identity") == "x");
    CHECK(canonical_primitive_name("log") == "log1pabs");
    CHECK(canonical_primitive_name("one") == "1");
    CHECK_THROWS_AS(canonical_primitive_name("sqrt"), ConfigError);
  }

  TEST_CASE("render uses infix notation") {
    const auto lib = default_library();
    auto r = [&](const char* n) { return lib[static_cast<std::size_t>(lib.index_of(n))].render("x0"); };
    CHECK(r("sin") == "sin(x0)");
    CHECK(r("x^2") == "x0^2");
    CHECK(r("lorentz") == "1/(1+x0^2)");
    CHECK(r("log1pabs") == "log(1+abs(x0))");
    CHECK(r("x") == "x0");
  }
}
