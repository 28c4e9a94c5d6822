#pragma once

// Problem definitions: toy regressions, Van der Pol parameter identification,
// reaction-diffusion inverse and Laplace forward problems, together with
// collocation sampling, the adaptive Runge-Kutta integrator used for ground
// truth and the relative-error metric.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "symkan/autodiff.hpp"

namespace symkan {

// ---- ODE integration -------------------------------------------------------

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;

struct Trajectory {
  int dim = 0;
  std::vector<double> times;
  std::vector<double> states;  // [i * dim + j]

  std::size_t size() const { return times.size(); }
  std::span<const double> state(std::size_t i) const {
    return std::span<const double>(states).subspan(i * static_cast<std::size_t>(dim),
                                                   static_cast<std::size_t>(dim));
  }
};

struct Rk45Options {
  double rtol = 1e-10;
  double atol = 1e-10;
  double dt_out = 0.01;
  double pi_beta = 0.04;
  std::size_t max_steps = 10'000'000;
};

// Dormand-Prince 5(4) with PI step control; the output grid t0, t0 + dt_out,
// ... t1 is filled by the method's dense output. Throws NumericalError when
// the step size underflows.
Trajectory rk45_integrate(const OdeRhs& rhs, std::span<const double> y0, double t0, double t1,
                          const Rk45Options& opt = {});

// Classical fixed-step RK4, the test oracle for rk45_integrate.
Trajectory rk4_integrate(const OdeRhs& rhs, std::span<const double> y0, double t0, double t1,
                         double h, double dt_out);

// ---- Van der Pol -----------------------------------------------------------

enum class PowerVariant { Abs, Signed };

struct VdpParams {
  double a = 1.0;
  double mu = 0.01;
  double c = 1.0;
  double power = 2.15;
  PowerVariant variant = PowerVariant::Abs;
};

// |x|^p (Abs) or sign(x)|x|^p (Signed).
double rpow(double x, double p, PowerVariant v = PowerVariant::Abs);
ad::Var rpow(const ad::Var& x, double p, PowerVariant v = PowerVariant::Abs);

std::array<double, 2> vdp_rhs(double x, double y, const VdpParams& prm);

// ---- Point sets --------------------------------------------------------------

struct PointSet {
  int dim = 0;
  int n_targets = 0;
  std::vector<double> x;  // [i * dim + c]
  std::vector<double> y;  // [i * n_targets + j]

  std::size_t size() const { return dim == 0 ? 0 : x.size() / static_cast<std::size_t>(dim); }
  bool empty() const { return size() == 0; }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(x).subspan(i * static_cast<std::size_t>(dim),
                                              static_cast<std::size_t>(dim));
  }
  std::span<const double> target(std::size_t i) const {
    return std::span<const double>(y).subspan(i * static_cast<std::size_t>(n_targets),
                                              static_cast<std::size_t>(n_targets));
  }
};

enum class SamplingStrategy { Random, Grid };

SamplingStrategy parse_sampling(const std::string& name);

// n points in the box [lo, hi]. Random draws are uniform from a seeded
// mt19937_64; grid uses an evenly spaced tensor grid and requires n to be a
// perfect power of the dimension.
PointSet sample_box(std::span<const double> lo, std::span<const double> hi, std::size_t n,
                    SamplingStrategy strategy, std::uint64_t seed);

struct CollocationSets {
  PointSet interior;
  PointSet boundary;
  PointSet initial;
};

// ---- Residuals -------------------------------------------------------------

// Network output derivatives at one point. Directions follow the problem's
// derivative_coords.
template <class T>
struct FieldDerivs {
  int n_out = 0;
  int n_dir = 0;
  std::vector<T> u;    // [j]
  std::vector<T> du;   // [j * n_dir + d]
  std::vector<T> d2u;  // [j * n_dir + d]

  void resize(int outputs, int dirs) {
    n_out = outputs;
    n_dir = dirs;
    u.assign(static_cast<std::size_t>(outputs), T(0.0));
    du.assign(static_cast<std::size_t>(outputs * dirs), T(0.0));
    d2u.assign(static_cast<std::size_t>(outputs * dirs), T(0.0));
  }
  const T& value(int j) const { return u[static_cast<std::size_t>(j)]; }
  const T& first(int j, int d) const { return du[static_cast<std::size_t>(j * n_dir + d)]; }
  const T& second(int j, int d) const { return d2u[static_cast<std::size_t>(j * n_dir + d)]; }
};

using ResidualFn = std::function<void(const FieldDerivs<ad::Var>& u,
                                      std::span<const ad::Var> learnables,
                                      std::span<const double> x, std::span<ad::Var> out)>;

// ---- Problems ----------------------------------------------------------------

enum class ProblemKind { Regression, OdeInverse, PdeForward, PdeInverse };

const char* problem_kind_name(ProblemKind k);

struct LearnableScalar {
  std::string name;
  double value = 0.0;
  bool trainable = true;
  double init = 0.0;
  double truth = std::numeric_limits<double>::quiet_NaN();
};

struct Problem {
  std::string name;
  ProblemKind kind = ProblemKind::Regression;
  int n_inputs = 1;
  int n_outputs = 1;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::vector<LearnableScalar> learnables;

  PointSet data;
  CollocationSets colloc;

  // Highest input-derivative order in the residual (0 means no residual).
  int residual_order = 0;
  std::vector<int> derivative_coords;
  int residual_size = 0;
  ResidualFn residual;

  // Exact solution and its derivatives along derivative_coords; either may be
  // empty when unknown.
  std::function<void(std::span<const double> x, std::span<double> u)> exact;
  std::function<void(std::span<const double> x, FieldDerivs<double>& out)> exact_derivs;

  // Dense grid with exact targets for the validation metric.
  PointSet validation;
  // Average per-output relative errors rather than taking one joint norm.
  bool per_output_error = false;

  std::vector<double> learnable_values() const;
};

// Residual of the exact solution (bypassing the network) at x with the given
// learnable values. Requires exact_derivs.
std::vector<double> exact_residual(const Problem& p, std::span<const double> x,
                                   std::span<const double> learnables);

struct VdpOptions {
  double horizon = 20.0;
  std::size_t n_data = 100;
  std::size_t n_colloc = 10'000;
  std::uint64_t seed = 0;
  VdpParams truth;
  std::array<double, 2> x0{-2.0, 0.0};
  std::array<double, 3> init{0.5, 0.1, 0.5};
  SamplingStrategy sampling = SamplingStrategy::Random;
  Rk45Options rk45;
};
Problem make_vdp_problem(const VdpOptions& opt);

// Ground truth trajectory for the options above.
Trajectory vdp_trajectory(const VdpOptions& opt);

struct RdOptions {
  double half_width = 2.0;
  std::size_t n_data = 100;
  std::size_t n_colloc = 5000;
  std::uint64_t seed = 0;
  double diffusion = 0.01;
  double kappa = 0.7;
  double kappa_init = 0.3;
  std::size_t n_validation = 1001;
  SamplingStrategy sampling = SamplingStrategy::Random;
};
Problem make_rd_problem(const RdOptions& opt);

// (u, u_xx) of sin^3(6x).
std::array<double, 2> rd_exact(double x);

struct LaplaceOptions {
  std::size_t n_colloc = 10'000;
  std::size_t n_boundary = 400;
  std::uint64_t seed = 0;
  std::size_t validation_side = 101;
  SamplingStrategy sampling = SamplingStrategy::Random;
};
Problem make_laplace_problem(const LaplaceOptions& opt);

double laplace_exact(double x, double y);

struct RegressionOptions {
  std::string target = "square";
  double lo = 0.0;
  double hi = 5.0;
  std::size_t n_data = 250;
  std::uint64_t seed = 0;
  std::size_t n_validation = 500;
};
Problem make_regression_problem(const RegressionOptions& opt);

// Named regression targets: "square" and "trig_rational".
double regression_target(const std::string& name, double x);

// ---- Metric ------------------------------------------------------------------

// ||pred - truth|| / ||truth||; throws DomainError for a zero-norm truth.
double relative_error(std::span<const double> pred, std::span<const double> truth);

// Per-column relative errors of row-major [n * cols] arrays, averaged.
double mean_column_relative_error(std::span<const double> pred, std::span<const double> truth,
                                  int cols);

}  // namespace symkan
