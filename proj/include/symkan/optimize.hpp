#pragma once

// Adam with per-group learning rates (Stage I) and L-BFGS with a strong-Wolfe
// line search (Stage II).

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace symkan {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  void reset(std::size_t n);
};

// A set of parameter indices sharing one learning rate.
struct AdamGroup {
  std::span<const std::size_t> indices;
  double lr = 0.0;
};

// One bias-corrected Adam update over every group. The step counter advances
// once per call. Throws NumericalError (leaving params and state untouched)
// when a gradient entry is not finite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::span<const AdamGroup> groups);

// Single-group convenience overload covering every parameter.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr);

// Objective callback: returns f(x) and writes the gradient into g. May return a
// non-finite value for points outside the objective's domain.
using SmoothObjective = std::function<double(std::span<const double> x, std::span<double> g)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iter = 500;
  double c1 = 1e-4;
  double c2 = 0.9;
  double grad_tol = 1e-9;
  double step_tol = 1e-12;
  int max_linesearch = 40;

  void validate() const;
};

enum class LbfgsTermination { GradientTolerance, StepTolerance, MaxIterations, LineSearchFailed };

const char* termination_name(LbfgsTermination t);

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsTermination reason = LbfgsTermination::MaxIterations;
  std::vector<double> history;  // objective after each accepted iteration, history[0] at x0
};

// Two-loop recursion L-BFGS. Never returns a point with a larger objective than x0.
LbfgsResult lbfgs_minimize(const SmoothObjective& f, std::span<const double> x0,
                           const LbfgsOptions& opt = {},
                           const std::function<void(int, double)>& on_iteration = {});

}  // namespace symkan
