#include <doctest.h>

#include "support.hpp"
#include "symkan/kernel.hpp"
#include "symkan/losses.hpp"

using namespace symkan;

namespace {

void require_same_objective(const Objective& a, const Objective& b, double tol) {
  CHECK(test::rel_diff(a.report.total, b.report.total) < tol);
  CHECK(test::rel_diff(a.report.data, b.report.data) < tol);
  CHECK(test::rel_diff(a.report.pde, b.report.pde) < tol);
  CHECK(test::rel_diff(a.report.bc, b.report.bc) < tol);
  CHECK(test::rel_diff(a.report.ic, b.report.ic) < tol);
  REQUIRE(a.grad_theta.size() == b.grad_theta.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.grad_theta.size(); ++i) {
    worst = std::max(worst, test::rel_diff(a.grad_theta[i], b.grad_theta[i], 1e-9));
  }
  CHECK(worst < tol);
  REQUIRE(a.grad_learnables.size() == b.grad_learnables.size());
  for (std::size_t k = 0; k < a.grad_learnables.size(); ++k) {
    CHECK(test::rel_diff(a.grad_learnables[k], b.grad_learnables[k], 1e-9) < tol);
  }
}

std::vector<double> noise_for(const Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_gumbel(rng, static_cast<std::size_t>(net.config().total_edges()) *
                                static_cast<std::size_t>(net.layout().library_size()));
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("first-order residual: kernel matches tape route in soft mode with noise and gates") {
    const Problem p = test::toy_first_order_problem();
    const Network net = test::random_net(test::small_config(1, 2, {"sin", "x^2", "tanh"}, true), 11);
    const auto noise = noise_for(net, 3);
    ObjectiveSettings s;
    s.tau = 0.8;
    s.lambda_sel = 0.7;
    s.noise = noise;
    LossWeights w;
    w.lambda_bias = 0.3;
    w.lambda_unit = 0.2;
    const auto lv = p.learnable_values();
    require_same_objective(evaluate_objective(net, p, lv, w, s),
                           evaluate_objective_tape(net, p, lv, w, s), 1e-10);
  }

  TEST_CASE("second-order residual in two directions: kernel matches tape route") {
    const Problem p = test::toy_second_order_problem();
    const Network net =
        test::random_net(test::small_config(2, 1, {"cos", "x^3", "exp", "lorentz"}, false), 5);
    ObjectiveSettings s;
    s.tau = 1.3;
    s.lambda_sel = 0.2;
    LossWeights w;
    w.lambda_r = 0.6;
    w.lambda_b = 2.0;
    w.lambda_0 = 0.5;
    const auto lv = p.learnable_values();
    require_same_objective(evaluate_objective(net, p, lv, w, s),
                           evaluate_objective_tape(net, p, lv, w, s), 1e-10);
  }

  TEST_CASE("single-direction second order (reaction-diffusion) matches tape route") {
    RdOptions o;
    o.n_colloc = 6;
    o.n_data = 4;
    o.seed = 9;
    const Problem p = make_rd_problem(o);
    NetworkConfig c = test::small_config(1, 1, {"sin", "tanh", "x"}, true);
    c.input_affine = {unit_box_affine(-2.0, 2.0)};
    const Network net = test::random_net(c, 21);
    const auto noise = noise_for(net, 4);
    ObjectiveSettings s;
    s.tau = 0.5;
    s.lambda_sel = 1.0;
    s.noise = noise;
    LossWeights w;
    w.lambda_r = 0.1;
    const auto lv = p.learnable_values();
    require_same_objective(evaluate_objective(net, p, lv, w, s),
                           evaluate_objective_tape(net, p, lv, w, s), 1e-10);
  }

  TEST_CASE("hard mode with a pruned unit matches tape route") {
    const Problem p = test::toy_second_order_problem();
    Network net = test::random_net(test::small_config(2, 1, {"sin", "x^2", "cosh"}, true), 8);
    harden(net, 0.5, 0.5);
    net.hardening(0, 1).pruned = true;
    ObjectiveSettings s;
    s.mode = Mode::Hard;
    s.symbolic_terms = false;
    LossWeights w;
    const auto lv = p.learnable_values();
    require_same_objective(evaluate_objective(net, p, lv, w, s),
                           evaluate_objective_tape(net, p, lv, w, s), 1e-10);
  }

  TEST_CASE("residual subset restricts the mean to the chosen points") {
    const Problem p = test::toy_first_order_problem();
    const Network net = test::random_net(test::small_config(1, 2, {"sin", "x"}, false), 2);
    const std::vector<std::size_t> subset{1, 3};
    ObjectiveSettings s;
    s.residual_subset = subset;
    const auto lv = p.learnable_values();
    require_same_objective(evaluate_objective(net, p, lv, LossWeights{}, s),
                           evaluate_objective_tape(net, p, lv, LossWeights{}, s), 1e-10);
  }

  TEST_CASE("kernel forward equals forward_jet coefficients") {
    NetworkConfig c = test::small_config(2, 1, {"sin", "x^2", "tanh", "log1pabs"}, true);
    c.input_affine = {{0.5, 0.1}, {2.0, -1.0}};
    const Network net = test::random_net(c, 31);
    const auto gates_d = compute_gates<double>(net, net.params(), 0.7);
    const KernelGates kg = kernel_gates(gates_d);
    NetworkKernel<2, 2> kern(net, kg, {0, 1}, false);
    const std::vector<double> x{0.3, -0.6};
    const auto out = kern.forward(x);
    for (int d = 0; d < 2; ++d) {
      const auto jet = forward_jet(net, x, d, 0.7, Mode::Soft);
      CHECK(out[0] == doctest::Approx(jet[0][0]).epsilon(1e-13));
      CHECK(out[static_cast<std::size_t>(1 + d)] == doctest::Approx(jet[0][1]).epsilon(1e-12));
      CHECK(out[static_cast<std::size_t>(3 + d)] == doctest::Approx(jet[0][2]).epsilon(1e-12));
    }
  }

  TEST_CASE("kernel_gates_hard rejects unhardened networks") {
    const Network net = test::random_net(test::small_config(1, 1, {"sin"}, false), 1);
    CHECK_THROWS_AS(kernel_gates_hard(net), StateError);
  }
}
