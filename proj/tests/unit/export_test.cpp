#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "symkan/export.hpp"

using namespace symkan;

namespace {

void commit(Network& net, int l, int k, int edge, const std::string& prim) {
  const int p = net.library().index_of(prim);
  REQUIRE(p >= 0);
  net.hardening(l, k) = {true, false, edge, p};
}

// Random expression over one variable with bounded coefficients.
// Without `growth`, exp/sinh/cosh are left out so no argument reaches the clamp.
SymExpr random_tree(std::mt19937_64& rng, int depth, bool growth = true) {
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  const int pick = depth <= 0 ? static_cast<int>(rng() % 2) : static_cast<int>(rng() % 6);
  static const char* prims[] = {"x", "x^2", "x^3", "sin", "cos", "tanh", "exp", "log1pabs",
                                "lorentz", "sinh", "cosh", "0", "1"};
  switch (pick) {
    case 0: return SymExpr::constant(u(-2, 2));
    case 1: return SymExpr::var(0);
    case 2: return SymExpr::affine_in(u(-1, 1), u(-1, 1), random_tree(rng, depth - 1, growth));
    case 3: return SymExpr::affine_out(u(-1, 1), u(-1, 1), random_tree(rng, depth - 1, growth));
    case 4: {
      std::string name = prims[rng() % 13];
      if (!growth && (name == "exp" || name == "sinh" || name == "cosh")) name = "tanh";
      return SymExpr::apply(name, random_tree(rng, depth - 1, growth));
    }
    default: {
      const auto n = 1 + rng() % 3;
      std::vector<double> c;
      std::vector<SymExpr> kids;
      for (std::size_t i = 0; i < n; ++i) {
        c.push_back(rng() % 5 == 0 ? 1e-12 : u(-1, 1));
        kids.push_back(random_tree(rng, depth - 1, growth));
      }
      return SymExpr::sum(std::move(c), std::move(kids));
    }
  }
}

// The x^2 architecture: layer 0 [x alive, sin killed], layer 1 [x^2 killed, x^2 alive].
Network square_net(std::uint64_t seed) {
  NetworkConfig c;
  c.n_inputs = 1;
  c.units = {2, 2};
  c.edges = 3;
  c.library = {"x", "sin", "x^2"};
  c.unit_gates = true;
  Network net = test::random_net(c, seed);
  commit(net, 0, 0, 1, "x");
  commit(net, 0, 1, 0, "sin");
  net.hardening(0, 1).pruned = true;
  commit(net, 1, 0, 2, "x^2");
  net.hardening(1, 0).pruned = true;
  commit(net, 1, 1, 0, "x^2");
  return net;
}

}  // namespace

TEST_SUITE("export") {
  TEST_CASE("identity net simplifies to the variable") {
    NetworkConfig c;
    c.units = {1};
    c.edges = 1;
    c.library = {"x"};
    Network net = init_network(c);
    EdgeView ed = net.edge(0, 0, 0);
    ed.w[0] = 1.0;
    ed.b = 0.0;
    ed.gamma[0] = 1.0;
    ed.beta[0] = 0.0;
    ed.A[0] = 1.0;
    ed.B[0] = 0.0;
    commit(net, 0, 0, 0, "x");
    const auto ex = extract(net);
    REQUIRE(ex.size() == 1);
    CHECK(simplify(ex[0]) == SymExpr::var(0));
  }

  TEST_CASE("x^2 architecture has the nested affine-square shape") {
    const Network net = square_net(4);
    const auto ex = extract(net);
    REQUIRE(ex.size() == 1);
    CHECK(count_primitive(ex[0], "x^2") == 1);
    CHECK(count_primitive(ex[0], "sin") == 0);
    CHECK(count_primitive(ex[0], "x") == 1);
    // sum[(1, A2 * (gamma2 * (w2 * unit0 + b2) + beta2)^2 + B2)]
    const SymExpr& top = ex[0];
    REQUIRE(top.kind == SymExpr::Kind::WeightedSum);
    REQUIRE(top.children.size() == 1);
    const SymExpr& out = top.children[0];
    CHECK(out.kind == SymExpr::Kind::AffineOut);
    CHECK(out.child().prim == "x^2");
    const SymExpr& proj = out.child().child().child();
    CHECK(proj.kind == SymExpr::Kind::WeightedSum);
    CHECK(proj.children.size() == 2);  // the killed unit is omitted
    CHECK(proj.children[0].child().prim == "x");

    const SymExpr s = simplify(ex[0]);
    CHECK(count_primitive(s, "x^2") == 1);
    CHECK(count_primitive(s, "x") == 0);
    // Simplifies to A*(g*x0 + h)^2 + B.
    REQUIRE(s.is_affine());
    CHECK(s.child().prim == "x^2");
    CHECK(is_affine_form(s.child().child()));
    const std::string text = render_text(s);
    CHECK(text.find("x0") != std::string::npos);
    CHECK(text.find(")^2") != std::string::npos);
  }

  TEST_CASE("extracted expression equals the hard forward pass") {
    NetworkConfig c = test::small_config(2, 2, {"sin", "x^2", "tanh", "exp", "lorentz", "log1pabs"}, true);
    c.units = {3, 4};
    c.input_affine = {unit_box_affine(0.0, 5.0), unit_box_affine(-1.0, 1.0)};
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
      Network net = test::random_net(c, 100 + static_cast<std::uint64_t>(trial));
      harden(net, 0.5, 0.3);
      net.hardening(0, static_cast<int>(rng() % 3)).pruned = true;
      const auto ex = extract(net);
      for (int i = 0; i < 100; ++i) {
        const std::vector<double> x{5.0 * uniform01(rng), 2.0 * uniform01(rng) - 1.0};
        const auto ref = forward(net, x, 1.0, {}, Mode::Hard);
        for (std::size_t j = 0; j < 2; ++j) {
          CHECK(std::abs(eval_expr(ex[j], x) - ref[j]) <= 1e-12 * (1.0 + std::abs(ref[j])));
          const double simp = eval_expr(simplify(ex[j], 0.0), x);
          CHECK(std::abs(simp - ref[j]) <= 1e-10 * (1.0 + std::abs(ref[j])));
        }
      }
    }
  }

  TEST_CASE("pruned units never appear") {
    Network net = square_net(9);
    net.hardening(0, 0).pruned = true;
    const auto ex = extract(net);
    CHECK(count_primitive(ex[0], "x") == 0);
    CHECK(count_primitive(ex[0], "sin") == 0);
    for (int k = 0; k < 2; ++k) net.hardening(1, k).pruned = true;
    CHECK(extract(net)[0] == SymExpr::constant(0.0));
  }

  TEST_CASE("extract and report reject unhardened networks") {
    const Network net = init_network(test::small_config(1, 1, {"sin"}, false));
    CHECK_THROWS_AS(extract(net), StateError);
    CHECK_THROWS_AS(report_selected_primitives(net), StateError);
  }

  TEST_CASE("simplify examples") {
    const SymExpr nested =
        SymExpr::affine_in(2.0, 0.0, SymExpr::affine_in(3.0, 1.0, SymExpr::var(0)));
    CHECK(simplify(nested) == SymExpr::affine_in(6.0, 2.0, SymExpr::var(0)));
    const SymExpr tiny = SymExpr::sum({1e-12, 1.0}, {SymExpr::apply("sin", SymExpr::var(0)), SymExpr::var(0)});
    CHECK(simplify(tiny, 1e-8) == SymExpr::var(0));
    CHECK(simplify(SymExpr::apply("identity", SymExpr::var(1))) == SymExpr::var(1));
    CHECK(simplify(SymExpr::apply("0", SymExpr::var(1))) == SymExpr::constant(0.0));
    CHECK(simplify(SymExpr::apply("1", SymExpr::var(1))) == SymExpr::constant(1.0));
    CHECK(simplify(SymExpr::apply("x^2", SymExpr::constant(3.0))) == SymExpr::constant(9.0));
    CHECK(simplify(SymExpr::sum({}, {})) == SymExpr::constant(0.0));
    CHECK_THROWS_AS(simplify(nested, -1.0), ConfigError);
  }

  TEST_CASE("simplify is idempotent and value-preserving on random trees") {
    std::mt19937_64 rng(17);
    const double eps = 1e-8;
    for (int t = 0; t < 200; ++t) {
      const SymExpr e = random_tree(rng, 4);
      const SymExpr s = simplify(e, eps);
      CHECK(simplify(s, eps) == s);
      for (int i = 0; i < 20; ++i) {
        const std::vector<double> x{2.0 * uniform01(rng) - 1.0};
        CHECK(std::abs(eval_expr(e, x) - eval_expr(s, x)) <= eps * 10);
      }
    }
  }

  TEST_CASE("render examples") {
    CHECK(render_text(SymExpr::constant(0.5)) == "0.5");
    CHECK(render_text(SymExpr::affine_out(2.0, 0.0, SymExpr::apply("sin", SymExpr::var(0)))) == "2*sin(x0)");
    CHECK(render_text(SymExpr::affine_in(1.0, -0.25, SymExpr::var(0))) == "x0-0.25");
    CHECK(render_text(SymExpr::apply("x^2", SymExpr::affine_in(2.0, 1.0, SymExpr::var(0)))) ==
          "(2*x0+1)^2");
    CHECK(render_text(SymExpr::affine_in(-3.0, 0.0, SymExpr::var(0))) == "-3*x0");
    CHECK(render_text(SymExpr::constant(1.0 / 3.0), 6) == "0.333333");
    CHECK(render_text(SymExpr::sum({1.0, -2.0}, {SymExpr::var(0), SymExpr::var(1)})) == "x0-2*x1");
  }

  TEST_CASE("structured form round-trips") {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 50; ++t) {
      const SymExpr e = random_tree(rng, 5);
      const auto doc = render_structured(e);
      CHECK(parse_structured(nlohmann::json::parse(doc.dump())) == e);
    }
    CHECK_THROWS_AS(parse_structured(nlohmann::json{{"type", "bogus"}}), LoadError);
    CHECK_THROWS_AS(parse_structured(nlohmann::json{{"type", "const"}}), LoadError);
  }

  TEST_CASE("full-precision text parses back to the same function") {
    std::mt19937_64 rng(29);
    for (int t = 0; t < 100; ++t) {
      const SymExpr e = random_tree(rng, 4, false);
      const InfixExpression parsed(render_text(e, 17));
      for (int i = 0; i < 10; ++i) {
        const std::vector<double> x{2.0 * uniform01(rng) - 1.0};
        const double a = eval_expr(e, x);
        CHECK(std::abs(parsed(x) - a) <= 1e-12 * (1.0 + std::abs(a)));
      }
    }
    CHECK_THROWS_AS(InfixExpression("sqrt(x0)"), ConfigError);
    CHECK_THROWS_AS(InfixExpression("(x0"), ConfigError);
    CHECK(InfixExpression("-x0^2")(std::vector<double>{3.0}) == -9.0);
    CHECK(InfixExpression("2*x0-1e-05")(std::vector<double>{1.0}) == doctest::Approx(2.0 - 1e-5));
  }

  TEST_CASE("primitive report") {
    const Network net = square_net(2);
    const auto r = report_selected_primitives(net);
    REQUIRE(r.layers.size() == 2);
    CHECK(r.layers[0][0].name == "x");
    CHECK(r.layers[0][0].alive);
    CHECK(r.layers[0][1].name == "sin");
    CHECK(!r.layers[0][1].alive);
    CHECK(r.layers[1][0].name == "x^2");
    CHECK(!r.layers[1][0].alive);
    CHECK(r.layers[1][1].alive);
    const std::string md = render_report_markdown(r);
    CHECK(md.find("| 0 | x (alive), sin (killed) |") != std::string::npos);
    CHECK(md.find("| 1 | x^2 (killed), x^2 (alive) |") != std::string::npos);

    Network pruned = square_net(2);
    for (int k = 0; k < 2; ++k) pruned.hardening(1, k).pruned = true;
    for (const auto& e : report_selected_primitives(pruned).layers[1]) CHECK(!e.alive);
  }
}
