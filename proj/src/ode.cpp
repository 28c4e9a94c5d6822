#include <algorithm>
#include <cmath>

#include "symkan/problems.hpp"

namespace symkan {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output (Hairer's contd5).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

std::size_t grid_count(double t0, double t1, double dt_out) {
  if (!(dt_out > 0.0)) throw DomainError("dt_out must be positive");
  if (!(t1 >= t0)) throw DomainError("integration span must satisfy t1 >= t0");
  return static_cast<std::size_t>(std::llround((t1 - t0) / dt_out)) + 1;
}

double rms_norm(std::span<const double> v, std::span<const double> scale) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double q = v[i] / scale[i];
    s += q * q;
  }
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

Trajectory rk45_integrate(const OdeRhs& rhs, std::span<const double> y0, double t0, double t1,
                          const Rk45Options& opt) {
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) throw DomainError("rtol and atol must be positive");
  const std::size_t n = y0.size();
  const std::size_t n_out = grid_count(t0, t1, opt.dt_out);
  Trajectory tr;
  tr.dim = static_cast<int>(n);
  tr.times.reserve(n_out);
  tr.states.reserve(n_out * n);
  auto out_time = [&](std::size_t i) { return i + 1 == n_out ? t1 : t0 + static_cast<double>(i) * opt.dt_out; };

  std::vector<double> y(y0.begin(), y0.end()), y1(n), ytmp(n), err(n), sk(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> r1(n), r2(n), r3(n), r4(n), r5(n);

  tr.times.push_back(t0);
  tr.states.insert(tr.states.end(), y.begin(), y.end());
  std::size_t next = 1;
  if (n_out == 1) return tr;

  double t = t0;
  rhs(t, y, k1);

  // Initial step following Hairer's heuristic.
  for (std::size_t i = 0; i < n; ++i) sk[i] = opt.atol + opt.rtol * std::abs(y[i]);
  double h;
  {
    const double dn0 = rms_norm(y, sk);
    const double dn1 = rms_norm(k1, sk);
    double h0 = (dn0 < 1e-5 || dn1 < 1e-5) ? 1e-6 : 0.01 * dn0 / dn1;
    h0 = std::min(h0, t1 - t0);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k1[i];
    rhs(t + h0, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) err[i] = k2[i] - k1[i];
    const double dn2 = rms_norm(err, sk) / h0;
    const double dmax = std::max(dn1, dn2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    h = std::min(100.0 * h0, h1);
  }

  const double span = t1 - t0;
  const double expo1 = 0.2 - opt.pi_beta * 0.75;
  double facold = 1e-4;
  bool last_rejected = false;
  for (std::size_t step = 0; next < n_out; ++step) {
    if (step >= opt.max_steps) throw NumericalError("rk45 exceeded the maximum number of steps");
    if (h < 1e-14 * span) throw NumericalError("rk45 step size underflow (stiff problem?)");
    const bool final_step = h >= t1 - t;
    if (final_step) h = t1 - t;

    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
    rhs(t + c2 * h, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    rhs(t + c3 * h, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(t + c4 * h, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs(t + c5 * h, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    rhs(t + h, ytmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      y1[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    rhs(t + h, y1, k7);
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      sk[i] = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
    }
    const double enorm = rms_norm(err, sk);
    if (!std::isfinite(enorm)) throw NumericalError("rk45 produced a non-finite state");

    const double fac11 = std::pow(enorm, expo1);
    if (enorm <= 1.0) {
      for (std::size_t i = 0; i < n; ++i) {
        const double ydiff = y1[i] - y[i];
        const double bspl = h * k1[i] - ydiff;
        r1[i] = y[i];
        r2[i] = ydiff;
        r3[i] = bspl;
        r4[i] = ydiff - h * k7[i] - bspl;
        r5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
      }
      const double t_new = final_step ? t1 : t + h;
      while (next < n_out && out_time(next) <= t_new) {
        const double to = out_time(next);
        const double th = (to - t) / h;
        const double th1 = 1.0 - th;
        tr.times.push_back(to);
        for (std::size_t i = 0; i < n; ++i) {
          tr.states.push_back(r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))));
        }
        ++next;
      }
      t = t_new;
      std::swap(y, y1);
      std::swap(k1, k7);
      double fac = fac11 / std::pow(facold, opt.pi_beta);
      fac = std::clamp(fac / 0.9, 0.2, 10.0);
      double hnew = h / fac;
      if (last_rejected) hnew = std::min(hnew, h);
      facold = std::max(enorm, 1e-4);
      last_rejected = false;
      h = hnew;
    } else {
      h = h / std::min(5.0, fac11 / 0.9);
      last_rejected = true;
    }
  }
  return tr;
}

Trajectory rk4_integrate(const OdeRhs& rhs, std::span<const double> y0, double t0, double t1,
                         double h, double dt_out) {
  if (!(h > 0.0)) throw DomainError("rk4 step must be positive");
  const std::size_t n = y0.size();
  const std::size_t n_out = grid_count(t0, t1, dt_out);
  const auto sub = static_cast<std::size_t>(std::llround(dt_out / h));
  if (sub == 0 || std::abs(static_cast<double>(sub) * h - dt_out) > 1e-9 * dt_out) {
    throw DomainError("rk4 step must divide dt_out");
  }
  Trajectory tr;
  tr.dim = static_cast<int>(n);
  std::vector<double> y(y0.begin(), y0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  tr.times.push_back(t0);
  tr.states.insert(tr.states.end(), y.begin(), y.end());
  for (std::size_t i = 1; i < n_out; ++i) {
    for (std::size_t s = 0; s < sub; ++s) {
      const double t = t0 + static_cast<double>((i - 1) * sub + s) * h;
      rhs(t, y, k1);
      for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + 0.5 * h * k1[j];
      rhs(t + 0.5 * h, tmp, k2);
      for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + 0.5 * h * k2[j];
      rhs(t + 0.5 * h, tmp, k3);
      for (std::size_t j = 0; j < n; ++j) tmp[j] = y[j] + h * k3[j];
      rhs(t + h, tmp, k4);
      for (std::size_t j = 0; j < n; ++j) y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    tr.times.push_back(t0 + static_cast<double>(i) * dt_out);
    tr.states.insert(tr.states.end(), y.begin(), y.end());
  }
  return tr;
}

}  // namespace symkan
