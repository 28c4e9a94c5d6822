#include "symkan/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "symkan/errors.hpp"

namespace symkan {

void AdamState::reset(std::size_t n) {
  step = 0;
  m.assign(n, 0.0);
  v.assign(n, 0.0);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st,
               std::span<const AdamGroup> groups) {
  if (grads.size() != params.size()) throw ConfigError("adam_step: gradient size mismatch");
  if (st.m.size() != params.size()) st.reset(params.size());
  for (const auto& g : groups) {
    if (!(g.lr >= 0.0)) throw ConfigError("adam_step: learning rate must be nonnegative");
    for (auto i : g.indices) {
      if (!std::isfinite(grads[i])) {
        throw NumericalError("adam_step: non-finite gradient at parameter " + std::to_string(i));
      }
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (const auto& g : groups) {
    for (auto i : g.indices) {
      st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
      st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
      const double mh = st.m[i] / bc1;
      const double vh = st.v[i] / bc2;
      params[i] -= g.lr * mh / (std::sqrt(vh) + st.eps);
    }
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, double lr) {
  std::vector<std::size_t> all(params.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const AdamGroup g{all, lr};
  adam_step(params, grads, st, std::span<const AdamGroup>(&g, 1));
}

// ---- L-BFGS -----------------------------------------------------------------

void LbfgsOptions::validate() const {
  if (memory < 1) throw ConfigError("lbfgs memory must be >= 1");
  if (max_iter < 0) throw ConfigError("lbfgs max_iter must be >= 0");
  if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) throw ConfigError("lbfgs needs 0 < c1 < c2 < 1");
  if (!(grad_tol >= 0.0) || !(step_tol >= 0.0)) throw ConfigError("lbfgs tolerances must be >= 0");
  if (max_linesearch < 1) throw ConfigError("lbfgs max_linesearch must be >= 1");
}

const char* termination_name(LbfgsTermination t) {
  switch (t) {
    case LbfgsTermination::GradientTolerance: return "gradient_tolerance";
    case LbfgsTermination::StepTolerance: return "step_tolerance";
    case LbfgsTermination::MaxIterations: return "max_iterations";
    case LbfgsTermination::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct Trial {
  double alpha = 0.0;
  double f = 0.0;
  double d = 0.0;  // directional derivative
  std::vector<double> x;
  std::vector<double> g;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db); NaN if degenerate.
double cubic_min(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

class LineSearch {
 public:
  LineSearch(const SmoothObjective& f, std::span<const double> x, std::span<const double> p,
             double f0, double d0, const LbfgsOptions& opt, int& evals)
      : f_(f), x_(x), p_(p), f0_(f0), d0_(d0), opt_(opt), evals_(evals) {}

  // Returns true with `out` satisfying the strong Wolfe conditions. On failure
  // `best` holds the lowest trial seen (if any improved on f0).
  bool run(double alpha0, Trial& out, Trial& best) {
    best.f = f0_;
    best.alpha = 0.0;
    Trial prev{0.0, f0_, d0_, {}, {}};
    double alpha = alpha0;
    for (int i = 0; i < opt_.max_linesearch; ++i) {
      Trial cur = eval(alpha);
      track(cur, best);
      if (!std::isfinite(cur.f) || cur.f > f0_ + opt_.c1 * alpha * d0_ || (i > 0 && cur.f >= prev.f)) {
        return zoom(prev, cur, out, best);
      }
      if (std::abs(cur.d) <= -opt_.c2 * d0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.d >= 0.0) return zoom(cur, prev, out, best);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return false;
  }

 private:
  Trial eval(double alpha) {
    Trial t;
    t.alpha = alpha;
    t.x.resize(x_.size());
    t.g.assign(x_.size(), 0.0);
    for (std::size_t i = 0; i < x_.size(); ++i) t.x[i] = x_[i] + alpha * p_[i];
    ++evals_;
    t.f = f_(t.x, t.g);
    if (!std::isfinite(t.f)) {
      t.f = std::numeric_limits<double>::infinity();
      t.d = std::numeric_limits<double>::quiet_NaN();
    } else {
      t.d = dot(t.g, p_);
    }
    return t;
  }

  void track(const Trial& t, Trial& best) const {
    if (std::isfinite(t.f) && t.f < best.f && t.f <= f0_ + opt_.c1 * t.alpha * d0_) best = t;
  }

  bool zoom(Trial lo, Trial hi, Trial& out, Trial& best) {
    for (int j = 0; j < opt_.max_linesearch; ++j) {
      const double a = lo.alpha, b = hi.alpha;
      const double width = std::abs(b - a);
      if (width <= 1e-16 * std::max(1.0, std::abs(a))) return false;
      double trial = std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(hi.f) && std::isfinite(hi.d)) {
        trial = cubic_min(a, lo.f, lo.d, b, hi.f, hi.d);
      }
      const double lo_b = std::min(a, b) + 0.1 * width;
      const double hi_b = std::max(a, b) - 0.1 * width;
      if (!std::isfinite(trial) || trial < lo_b || trial > hi_b) trial = 0.5 * (a + b);
      Trial cur = eval(trial);
      track(cur, best);
      if (!std::isfinite(cur.f) || cur.f > f0_ + opt_.c1 * trial * d0_ || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.d) <= -opt_.c2 * d0_) {
          out = std::move(cur);
          return true;
        }
        if (cur.d * (hi.alpha - lo.alpha) >= 0.0) hi = std::move(lo);
        lo = std::move(cur);
      }
    }
    return false;
  }

  const SmoothObjective& f_;
  std::span<const double> x_;
  std::span<const double> p_;
  double f0_;
  double d0_;
  const LbfgsOptions& opt_;
  int& evals_;
};

}  // namespace

LbfgsResult lbfgs_minimize(const SmoothObjective& f, std::span<const double> x0,
                           const LbfgsOptions& opt, const std::function<void(int, double)>& on_iteration) {
  opt.validate();
  const std::size_t n = x0.size();
  LbfgsResult r;
  r.x.assign(x0.begin(), x0.end());
  std::vector<double> g(n, 0.0);
  r.evaluations = 1;
  r.value = f(r.x, g);
  if (!std::isfinite(r.value)) throw NumericalError("lbfgs: objective is not finite at the start point");
  r.history.push_back(r.value);

  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho;
  std::vector<double> p(n), q(n), alpha_buf;

  for (;;) {
    r.grad_norm = norm(g);
    if (r.grad_norm <= opt.grad_tol) {
      r.reason = LbfgsTermination::GradientTolerance;
      return r;
    }
    if (r.iterations >= opt.max_iter) {
      r.reason = LbfgsTermination::MaxIterations;
      return r;
    }

    // Two-loop recursion.
    q = g;
    const std::size_t k = S.size();
    alpha_buf.assign(k, 0.0);
    for (std::size_t i = k; i-- > 0;) {
      alpha_buf[i] = rho[i] * dot(S[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] -= alpha_buf[i] * Y[i][j];
    }
    double gamma = 1.0;
    if (k > 0) gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
    for (std::size_t j = 0; j < n; ++j) q[j] *= gamma;
    for (std::size_t i = 0; i < k; ++i) {
      const double beta = rho[i] * dot(Y[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] += S[i][j] * (alpha_buf[i] - beta);
    }
    for (std::size_t j = 0; j < n; ++j) p[j] = -q[j];
    double d0 = dot(g, p);
    if (!(d0 < 0.0)) {
      // Not a descent direction: drop the memory and use steepest descent.
      S.clear();
      Y.clear();
      rho.clear();
      for (std::size_t j = 0; j < n; ++j) p[j] = -g[j];
      d0 = -r.grad_norm * r.grad_norm;
    }
    const double alpha0 = k == 0 ? std::min(1.0, 1.0 / r.grad_norm) : 1.0;

    LineSearch ls(f, r.x, p, r.value, d0, opt, r.evaluations);
    Trial accepted, best;
    if (!ls.run(alpha0, accepted, best)) {
      if (best.alpha > 0.0 && best.f < r.value) {
        r.x = std::move(best.x);
        r.value = best.f;
        r.grad_norm = norm(best.g);
        ++r.iterations;
        r.history.push_back(r.value);
      }
      r.reason = LbfgsTermination::LineSearchFailed;
      return r;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = accepted.x[j] - r.x[j];
      y[j] = accepted.g[j] - g[j];
    }
    r.x = std::move(accepted.x);
    g = std::move(accepted.g);
    r.value = accepted.f;
    ++r.iterations;
    r.history.push_back(r.value);
    if (on_iteration) on_iteration(r.iterations, r.value);

    const double sy = dot(s, y);
    const double sn = norm(s);
    if (sy > 1e-12 * sn * norm(y)) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    if (sn <= opt.step_tol) {
      r.grad_norm = norm(g);
      r.reason = r.grad_norm <= opt.grad_tol ? LbfgsTermination::GradientTolerance
                                             : LbfgsTermination::StepTolerance;
      return r;
    }
  }
}

}  // namespace symkan
