#pragma once

// Small fixtures shared by the unit tests.

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "symkan/network.hpp"
#include "symkan/problems.hpp"

namespace symkan::test {

// Network with every parameter drawn away from its neutral init so that no
// derivative path is accidentally zero.
inline Network random_net(NetworkConfig cfg, std::uint64_t seed, double spread = 0.6) {
  Network net = init_network(cfg);
  std::mt19937_64 rng(seed);
  for (double& v : net.params()) v = spread * (2.0 * uniform01(rng) - 1.0);
  return net;
}

inline NetworkConfig small_config(int n_inputs, int n_outputs, std::vector<std::string> lib,
                                  bool gates) {
  NetworkConfig c;
  c.n_inputs = n_inputs;
  c.n_outputs = n_outputs;
  c.units = {2, 2};
  c.edges = 2;
  c.library = std::move(lib);
  c.unit_gates = gates;
  c.seed = 7;
  return c;
}

inline double rel_diff(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Synthetic ODE-style problem: two outputs, first-order residual with one
// learnable, plus a data set.
inline Problem toy_first_order_problem() {
  Problem p;
  p.name = "toy1";
  p.kind = ProblemKind::OdeInverse;
  p.n_inputs = 1;
  p.n_outputs = 2;
  p.lo = {0.0};
  p.hi = {1.0};
  p.learnables = {{"k", 0.3, true, 0.3, 1.0}};
  p.residual_order = 1;
  p.derivative_coords = {0};
  p.residual_size = 2;
  p.residual = [](const FieldDerivs<ad::Var>& u, std::span<const ad::Var> lv,
                  std::span<const double>, std::span<ad::Var> out) {
    out[0] = u.first(0, 0) - lv[0] * u.value(1);
    out[1] = u.first(1, 0) + lv[0] * rpow(u.value(0), 2.15) * u.value(1) + u.value(0);
  };
  p.data.dim = 1;
  p.data.n_targets = 2;
  p.data.x = {0.1, 0.5, 0.9};
  p.data.y = {0.2, -0.1, 0.4, 0.3, -0.2, 0.5};
  p.colloc.interior.dim = 1;
  p.colloc.interior.x = {0.05, 0.3, 0.62, 0.77};
  return p;
}

// Synthetic PDE-style problem on the unit square: second-order residual in
// both coordinates with a nonlinear reaction term, boundary and initial sets.
inline Problem toy_second_order_problem() {
  Problem p;
  p.name = "toy2";
  p.kind = ProblemKind::PdeInverse;
  p.n_inputs = 2;
  p.n_outputs = 1;
  p.lo = {0.0, 0.0};
  p.hi = {1.0, 1.0};
  p.learnables = {{"kappa", 0.4, true, 0.4, 0.7}, {"D", 0.2, false, 0.2, 0.2}};
  p.residual_order = 2;
  p.derivative_coords = {0, 1};
  p.residual_size = 1;
  p.residual = [](const FieldDerivs<ad::Var>& u, std::span<const ad::Var> lv,
                  std::span<const double> x, std::span<ad::Var> out) {
    out[0] = lv[1] * (u.second(0, 0) + u.second(0, 1)) + lv[0] * ad::tanh(u.value(0)) +
             u.first(0, 0) * u.first(0, 1) - x[0];
  };
  p.colloc.interior.dim = 2;
  p.colloc.interior.x = {0.2, 0.3, 0.7, 0.1, 0.45, 0.85};
  p.colloc.boundary.dim = 2;
  p.colloc.boundary.n_targets = 1;
  p.colloc.boundary.x = {0.0, 0.4, 1.0, 0.6};
  p.colloc.boundary.y = {0.1, -0.3};
  p.colloc.initial.dim = 2;
  p.colloc.initial.n_targets = 1;
  p.colloc.initial.x = {0.5, 0.0};
  p.colloc.initial.y = {0.25};
  return p;
}


// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("symkan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// The known-correct structure for y = x^2 on a (2,2,E) network: layer 0 keeps
// an identity unit, layer 1 keeps a square unit, the other two units are
// pruned. Continuous parameters of the kept edges start neutral (w = 1, b = 0,
// gamma = 1, beta = 0, A = 1, B = 0); gate logits are left at their init.
inline void harden_square_structure(Network& net) {
  const int ix = net.library().index_of("x");
  const int isq = net.library().index_of("x^2");
  auto keep = [&](int l, int k, int p) {
    EdgeView ed = net.edge(l, k, 0);
    for (double& w : ed.w) w = 0.0;
    ed.w[0] = 1.0;
    ed.b = 0.0;
    const auto q = static_cast<std::size_t>(p);
    ed.gamma[q] = 1.0;
    ed.beta[q] = 0.0;
    ed.A[q] = 1.0;
    ed.B[q] = 0.0;
    net.hardening(l, k) = {true, false, 0, p};
  };
  keep(0, 0, ix);
  keep(1, 1, isq);
  net.hardening(0, 1) = {true, true, 0, ix};
  net.hardening(1, 0) = {true, true, 0, isq};
}

}  // namespace symkan::test
