#include "symkan/problems.hpp"

#include <algorithm>
#include <memory>
#include <numbers>
#include <random>

#include "symkan/network.hpp"

namespace symkan {

double rpow(double x, double p, PowerVariant v) {
  const double m = std::pow(std::abs(x), p);
  if (v == PowerVariant::Signed && x < 0.0) return -m;
  return m;
}

ad::Var rpow(const ad::Var& x, double p, PowerVariant v) {
  const double ax = std::abs(x.value);
  const double value = rpow(x.value, p, v);
  // d/dx |x|^p = p |x|^(p-1) sign(x); the signed variant is p |x|^(p-1).
  double partial = ax == 0.0 ? 0.0 : p * std::pow(ax, p - 1.0);
  if (v == PowerVariant::Abs && x.value < 0.0) partial = -partial;
  return ad::custom_unary(ad::OpKind::Custom, x, value, partial);
}

std::array<double, 2> vdp_rhs(double x, double y, const VdpParams& prm) {
  return {prm.a * y, prm.mu * (1.0 - rpow(x, prm.power, prm.variant)) * y - prm.c * x};
}

SamplingStrategy parse_sampling(const std::string& name) {
  if (name == "random") return SamplingStrategy::Random;
  if (name == "grid") return SamplingStrategy::Grid;
  throw ConfigError("unknown sampling strategy '" + name + "' (expected random or grid)");
}

PointSet sample_box(std::span<const double> lo, std::span<const double> hi, std::size_t n,
                    SamplingStrategy strategy, std::uint64_t seed) {
  if (lo.size() != hi.size() || lo.empty()) throw ConfigError("box bounds must match in size");
  const std::size_t dim = lo.size();
  PointSet ps;
  ps.dim = static_cast<int>(dim);
  ps.x.reserve(n * dim);
  if (strategy == SamplingStrategy::Random) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < dim; ++c) ps.x.push_back(lo[c] + (hi[c] - lo[c]) * uniform01(rng));
    }
    return ps;
  }
  const auto side = static_cast<std::size_t>(
      std::llround(std::pow(static_cast<double>(n), 1.0 / static_cast<double>(dim))));
  std::size_t total = 1;
  for (std::size_t c = 0; c < dim; ++c) total *= side;
  if (total != n) {
    throw ConfigError("grid sampling needs a point count that is a perfect power of the dimension");
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (std::size_t c = 0; c < dim; ++c) {
      const std::size_t j = rem % side;
      rem /= side;
      const double frac = side == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(side - 1);
      ps.x.push_back(lo[c] + (hi[c] - lo[c]) * frac);
    }
  }
  return ps;
}

const char* problem_kind_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::Regression: return "regression";
    case ProblemKind::OdeInverse: return "ode_inverse";
    case ProblemKind::PdeForward: return "pde_forward";
    case ProblemKind::PdeInverse: return "pde_inverse";
  }
  return "?";
}

std::vector<double> Problem::learnable_values() const {
  std::vector<double> v;
  v.reserve(learnables.size());
  for (const auto& l : learnables) v.push_back(l.value);
  return v;
}

std::vector<double> exact_residual(const Problem& p, std::span<const double> x,
                                   std::span<const double> learnables) {
  if (!p.exact_derivs || !p.residual) throw StateError("problem has no exact derivatives or residual");
  const int dirs = static_cast<int>(p.derivative_coords.size());
  FieldDerivs<double> d;
  d.resize(p.n_outputs, dirs);
  p.exact_derivs(x, d);
  FieldDerivs<ad::Var> v;
  v.resize(p.n_outputs, dirs);
  for (std::size_t i = 0; i < d.u.size(); ++i) v.u[i] = d.u[i];
  for (std::size_t i = 0; i < d.du.size(); ++i) v.du[i] = d.du[i];
  for (std::size_t i = 0; i < d.d2u.size(); ++i) v.d2u[i] = d.d2u[i];
  std::vector<ad::Var> lv(learnables.begin(), learnables.end());
  std::vector<ad::Var> out(static_cast<std::size_t>(p.residual_size));
  p.residual(v, lv, x, out);
  std::vector<double> r;
  for (const auto& o : out) r.push_back(o.value);
  return r;
}

namespace {

void fill_validation_targets(Problem& p) {
  p.validation.n_targets = p.n_outputs;
  p.validation.y.resize(p.validation.size() * static_cast<std::size_t>(p.n_outputs));
  for (std::size_t i = 0; i < p.validation.size(); ++i) {
    p.exact(p.validation.point(i),
            std::span<double>(p.validation.y).subspan(i * static_cast<std::size_t>(p.n_outputs),
                                                      static_cast<std::size_t>(p.n_outputs)));
  }
}

void fill_targets(const Problem& p, PointSet& ps) {
  ps.n_targets = p.n_outputs;
  ps.y.resize(ps.size() * static_cast<std::size_t>(p.n_outputs));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    p.exact(ps.point(i), std::span<double>(ps.y).subspan(i * static_cast<std::size_t>(p.n_outputs),
                                                         static_cast<std::size_t>(p.n_outputs)));
  }
}

PointSet linspace_1d(double lo, double hi, std::size_t n) {
  PointSet ps;
  ps.dim = 1;
  for (std::size_t i = 0; i < n; ++i) {
    ps.x.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return ps;
}

// Cubic Hermite interpolation of an ODE trajectory using the vector field
// at the grid nodes as slopes.
struct HermiteTrajectory {
  Trajectory tr;
  std::vector<double> slopes;
  double t0 = 0.0;
  double dt = 0.0;

  void state(double t, std::span<double> out) const {
    const auto n = static_cast<std::size_t>(tr.dim);
    const double pos = std::clamp((t - t0) / dt, 0.0, static_cast<double>(tr.size() - 1));
    auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= tr.size()) i = tr.size() - 2;
    const double s = pos - static_cast<double>(i);
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = h00 * tr.states[i * n + j] + h10 * dt * slopes[i * n + j] +
               h01 * tr.states[(i + 1) * n + j] + h11 * dt * slopes[(i + 1) * n + j];
    }
  }
};

}  // namespace

Trajectory vdp_trajectory(const VdpOptions& opt) {
  if (!(opt.horizon > 0.0)) throw ConfigError("Van der Pol horizon must be positive");
  const VdpParams prm = opt.truth;
  OdeRhs rhs = [prm](double, std::span<const double> y, std::span<double> dy) {
    const auto d = vdp_rhs(y[0], y[1], prm);
    dy[0] = d[0];
    dy[1] = d[1];
  };
  return rk45_integrate(rhs, opt.x0, 0.0, opt.horizon, opt.rk45);
}

Problem make_vdp_problem(const VdpOptions& opt) {
  if (opt.n_data < 2) throw ConfigError("Van der Pol needs at least 2 observations");
  auto herm = std::make_shared<HermiteTrajectory>();
  herm->tr = vdp_trajectory(opt);
  herm->t0 = 0.0;
  herm->dt = opt.rk45.dt_out;
  const VdpParams prm = opt.truth;
  for (std::size_t i = 0; i < herm->tr.size(); ++i) {
    const auto s = herm->tr.state(i);
    const auto d = vdp_rhs(s[0], s[1], prm);
    herm->slopes.push_back(d[0]);
    herm->slopes.push_back(d[1]);
  }

  Problem p;
  p.name = "vdp";
  p.kind = ProblemKind::OdeInverse;
  p.n_inputs = 1;
  p.n_outputs = 2;
  p.lo = {0.0};
  p.hi = {opt.horizon};
  p.input_names = {"t"};
  p.output_names = {"x", "y"};
  p.learnables = {{"a", opt.init[0], true, opt.init[0], prm.a},
                  {"mu", opt.init[1], true, opt.init[1], prm.mu},
                  {"c", opt.init[2], true, opt.init[2], prm.c}};
  p.residual_order = 1;
  p.derivative_coords = {0};
  p.residual_size = 2;
  const double power = prm.power;
  const PowerVariant variant = prm.variant;
  p.residual = [power, variant](const FieldDerivs<ad::Var>& u, std::span<const ad::Var> lv,
                                std::span<const double>, std::span<ad::Var> out) {
    const ad::Var& x = u.value(0);
    const ad::Var& y = u.value(1);
    out[0] = u.first(0, 0) - lv[0] * y;
    out[1] = u.first(1, 0) - lv[1] * (1.0 - rpow(x, power, variant)) * y + lv[2] * x;
  };
  p.exact = [herm](std::span<const double> x, std::span<double> u) { herm->state(x[0], u); };
  p.exact_derivs = [herm, prm](std::span<const double> x, FieldDerivs<double>& out) {
    double s[2];
    herm->state(x[0], s);
    const auto d = vdp_rhs(s[0], s[1], prm);
    out.u[0] = s[0];
    out.u[1] = s[1];
    out.du[0] = d[0];
    out.du[1] = d[1];
  };

  // Observations at equally spaced grid indices, both end points included.
  const Trajectory& tr = herm->tr;
  p.data.dim = 1;
  p.data.n_targets = 2;
  for (std::size_t i = 0; i < opt.n_data; ++i) {
    const auto idx = static_cast<std::size_t>(std::llround(
        static_cast<double>(i) * static_cast<double>(tr.size() - 1) / static_cast<double>(opt.n_data - 1)));
    p.data.x.push_back(tr.times[idx]);
    p.data.y.push_back(tr.states[2 * idx]);
    p.data.y.push_back(tr.states[2 * idx + 1]);
  }
  p.colloc.interior = sample_box(p.lo, p.hi, opt.n_colloc, opt.sampling, opt.seed);

  p.validation.dim = 1;
  p.validation.n_targets = 2;
  p.validation.x = tr.times;
  p.validation.y = tr.states;
  p.per_output_error = true;
  return p;
}

std::array<double, 2> rd_exact(double x) {
  const double s = std::sin(6.0 * x);
  const double c = std::cos(6.0 * x);
  return {s * s * s, 216.0 * s * c * c - 108.0 * s * s * s};
}

Problem make_rd_problem(const RdOptions& opt) {
  if (!(opt.half_width > 0.0)) throw ConfigError("reaction-diffusion half width must be positive");
  const double M = opt.half_width;
  const double D = opt.diffusion;
  const double kappa = opt.kappa;
  Problem p;
  p.name = "rd";
  p.kind = ProblemKind::PdeInverse;
  p.n_inputs = 1;
  p.n_outputs = 1;
  p.lo = {-M};
  p.hi = {M};
  p.input_names = {"x"};
  p.output_names = {"u"};
  p.learnables = {{"kappa", opt.kappa_init, true, opt.kappa_init, kappa},
                  {"D", D, false, D, D}};
  p.residual_order = 2;
  p.derivative_coords = {0};
  p.residual_size = 1;
  auto forcing = [D, kappa](double x) {
    const auto e = rd_exact(x);
    return D * e[1] + kappa * std::tanh(e[0]);
  };
  p.residual = [forcing](const FieldDerivs<ad::Var>& u, std::span<const ad::Var> lv,
                         std::span<const double> x, std::span<ad::Var> out) {
    out[0] = lv[1] * u.second(0, 0) + lv[0] * ad::tanh(u.value(0)) - forcing(x[0]);
  };
  p.exact = [](std::span<const double> x, std::span<double> u) { u[0] = rd_exact(x[0])[0]; };
  p.exact_derivs = [](std::span<const double> x, FieldDerivs<double>& out) {
    const auto e = rd_exact(x[0]);
    const double s = std::sin(6.0 * x[0]);
    out.u[0] = e[0];
    out.du[0] = 18.0 * s * s * std::cos(6.0 * x[0]);
    out.d2u[0] = e[1];
  };

  p.data = sample_box(p.lo, p.hi, opt.n_data, SamplingStrategy::Random, opt.seed + 1);
  fill_targets(p, p.data);
  p.colloc.interior = sample_box(p.lo, p.hi, opt.n_colloc, opt.sampling, opt.seed);
  p.colloc.boundary.dim = 1;
  p.colloc.boundary.x = {-M, M};
  fill_targets(p, p.colloc.boundary);
  p.validation = linspace_1d(-M, M, opt.n_validation);
  fill_validation_targets(p);
  return p;
}

double laplace_exact(double x, double y) {
  return std::sin(std::numbers::pi * x) * std::sinh(std::numbers::pi * y);
}

Problem make_laplace_problem(const LaplaceOptions& opt) {
  if (opt.n_boundary % 4 != 0) throw ConfigError("laplace boundary count must be divisible by 4");
  constexpr double pi = std::numbers::pi;
  Problem p;
  p.name = "laplace";
  p.kind = ProblemKind::PdeForward;
  p.n_inputs = 2;
  p.n_outputs = 1;
  p.lo = {0.0, 0.0};
  p.hi = {1.0, 1.0};
  p.input_names = {"x", "y"};
  p.output_names = {"u"};
  p.residual_order = 2;
  p.derivative_coords = {0, 1};
  p.residual_size = 1;
  p.residual = [](const FieldDerivs<ad::Var>& u, std::span<const ad::Var>, std::span<const double>,
                  std::span<ad::Var> out) { out[0] = u.second(0, 0) + u.second(0, 1); };
  p.exact = [](std::span<const double> x, std::span<double> u) { u[0] = laplace_exact(x[0], x[1]); };
  p.exact_derivs = [](std::span<const double> x, FieldDerivs<double>& out) {
    const double u = laplace_exact(x[0], x[1]);
    out.u[0] = u;
    out.du[0] = pi * std::cos(pi * x[0]) * std::sinh(pi * x[1]);
    out.du[1] = pi * std::sin(pi * x[0]) * std::cosh(pi * x[1]);
    out.d2u[0] = -pi * pi * u;
    out.d2u[1] = pi * pi * u;
  };

  p.colloc.interior = sample_box(p.lo, p.hi, opt.n_colloc, opt.sampling, opt.seed);
  // Equal share per edge: y = 0, y = 1, x = 0, x = 1.
  const std::size_t per_edge = opt.n_boundary / 4;
  PointSet& b = p.colloc.boundary;
  b.dim = 2;
  std::mt19937_64 rng(opt.seed + 2);
  for (int edge = 0; edge < 4; ++edge) {
    for (std::size_t i = 0; i < per_edge; ++i) {
      double s;
      if (opt.sampling == SamplingStrategy::Random) {
        s = uniform01(rng);
      } else {
        s = per_edge == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(per_edge - 1);
      }
      switch (edge) {
        case 0: b.x.insert(b.x.end(), {s, 0.0}); break;
        case 1: b.x.insert(b.x.end(), {s, 1.0}); break;
        case 2: b.x.insert(b.x.end(), {0.0, s}); break;
        default: b.x.insert(b.x.end(), {1.0, s}); break;
      }
    }
  }
  fill_targets(p, b);
  p.validation = sample_box(p.lo, p.hi, opt.validation_side * opt.validation_side,
                            SamplingStrategy::Grid, 0);
  fill_validation_targets(p);
  return p;
}

double regression_target(const std::string& name, double x) {
  if (name == "square") return x * x;
  if (name == "trig_rational") return std::sin(3.0 * x) / (1.0 + x * x) + 0.4 * std::cos(5.0 * x);
  throw ConfigError("unknown regression target '" + name + "' (expected square or trig_rational)");
}

Problem make_regression_problem(const RegressionOptions& opt) {
  regression_target(opt.target, 0.0);
  if (!(opt.hi > opt.lo)) throw ConfigError("regression domain must satisfy hi > lo");
  if (opt.n_data == 0) throw ConfigError("regression needs at least one sample");
  Problem p;
  p.name = "regression_" + opt.target;
  p.kind = ProblemKind::Regression;
  p.n_inputs = 1;
  p.n_outputs = 1;
  p.lo = {opt.lo};
  p.hi = {opt.hi};
  p.input_names = {"x"};
  p.output_names = {"y"};
  const std::string target = opt.target;
  p.exact = [target](std::span<const double> x, std::span<double> u) {
    u[0] = regression_target(target, x[0]);
  };
  p.data = sample_box(p.lo, p.hi, opt.n_data, SamplingStrategy::Random, opt.seed);
  fill_targets(p, p.data);
  p.validation = linspace_1d(opt.lo, opt.hi, opt.n_validation);
  fill_validation_targets(p);
  return p;
}

double relative_error(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DomainError("relative_error: size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  if (den == 0.0) throw DomainError("relative_error: reference has zero norm");
  return std::sqrt(num / den);
}

double mean_column_relative_error(std::span<const double> pred, std::span<const double> truth,
                                  int cols) {
  if (cols < 1 || pred.size() != truth.size() || pred.size() % static_cast<std::size_t>(cols) != 0) {
    throw DomainError("mean_column_relative_error: shape mismatch");
  }
  const std::size_t rows = pred.size() / static_cast<std::size_t>(cols);
  double acc = 0.0;
  std::vector<double> a(rows), b(rows);
  for (int j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) {
      a[i] = pred[i * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
      b[i] = truth[i * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
    }
    acc += relative_error(a, b);
  }
  return acc / cols;
}

}  // namespace symkan
