#pragma once

// Analytic univariate primitives with derivatives, domain-safety policies and
// symbolic renderers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "symkan/autodiff.hpp"

namespace symkan {

enum class PrimitiveId : std::uint8_t {
  Zero,
  One,
  Identity,
  Square,
  Cube,
  Sin,
  Cos,
  Tanh,
  Exp,
  Log1pAbs,
  Lorentz,
  Sinh,
  Cosh,
};

inline constexpr double kExpClamp = 30.0;

// Derivatives f, f', ..., f^(max_order) of the safety-adjusted primitive at x,
// written to out[0..max_order]. max_order <= 4.
//
// Safety policy: exp, sinh and cosh see their argument clamped to [-30, 30]
// (derivatives vanish outside). log(1+|x|) takes odd derivatives 0 at x = 0.
inline void primitive_derivatives(PrimitiveId id, double x, int max_order, double* out) {
  switch (id) {
    case PrimitiveId::Zero:
      for (int k = 0; k <= max_order; ++k) out[k] = 0.0;
      return;
    case PrimitiveId::One:
      out[0] = 1.0;
      for (int k = 1; k <= max_order; ++k) out[k] = 0.0;
      return;
    case PrimitiveId::Identity:
      out[0] = x;
      if (max_order >= 1) out[1] = 1.0;
      for (int k = 2; k <= max_order; ++k) out[k] = 0.0;
      return;
    case PrimitiveId::Square:
      out[0] = x * x;
      if (max_order >= 1) out[1] = 2.0 * x;
      if (max_order >= 2) out[2] = 2.0;
      for (int k = 3; k <= max_order; ++k) out[k] = 0.0;
      return;
    case PrimitiveId::Cube:
      out[0] = x * x * x;
      if (max_order >= 1) out[1] = 3.0 * x * x;
      if (max_order >= 2) out[2] = 6.0 * x;
      if (max_order >= 3) out[3] = 6.0;
      if (max_order >= 4) out[4] = 0.0;
      return;
    case PrimitiveId::Sin:
    case PrimitiveId::Cos: {
      const double s = std::sin(x);
      const double c = std::cos(x);
      // sin^(k) cycles through (s, c, -s, -c); cos is sin shifted by one.
      const double cyc[4] = {s, c, -s, -c};
      const int off = id == PrimitiveId::Sin ? 0 : 1;
      for (int k = 0; k <= max_order; ++k) out[k] = cyc[(k + off) & 3];
      return;
    }
    case PrimitiveId::Tanh: {
      const double t = std::tanh(x);
      const double t2 = t * t;
      const double sech2 = 1.0 - t2;
      out[0] = t;
      if (max_order >= 1) out[1] = sech2;
      if (max_order >= 2) out[2] = -2.0 * t * sech2;
      if (max_order >= 3) out[3] = -2.0 + 8.0 * t2 - 6.0 * t2 * t2;
      if (max_order >= 4) out[4] = (16.0 * t - 24.0 * t2 * t) * sech2;
      return;
    }
    case PrimitiveId::Exp: {
      const bool inside = x >= -kExpClamp && x <= kExpClamp;
      const double e = std::exp(std::clamp(x, -kExpClamp, kExpClamp));
      out[0] = e;
      for (int k = 1; k <= max_order; ++k) out[k] = inside ? e : 0.0;
      return;
    }
    case PrimitiveId::Sinh:
    case PrimitiveId::Cosh: {
      const bool inside = x >= -kExpClamp && x <= kExpClamp;
      const double xc = std::clamp(x, -kExpClamp, kExpClamp);
      const double sh = std::sinh(xc);
      const double ch = std::cosh(xc);
      const bool is_sinh = id == PrimitiveId::Sinh;
      out[0] = is_sinh ? sh : ch;
      for (int k = 1; k <= max_order; ++k) {
        const bool odd = (k & 1) != 0;
        out[k] = inside ? ((odd == is_sinh) ? ch : sh) : 0.0;
      }
      return;
    }
    case PrimitiveId::Log1pAbs: {
      const double a = std::abs(x);
      const double sg = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      const double r = 1.0 / (1.0 + a);
      out[0] = std::log1p(a);
      if (max_order >= 1) out[1] = sg * r;
      if (max_order >= 2) out[2] = -r * r;
      if (max_order >= 3) out[3] = 2.0 * sg * r * r * r;
      if (max_order >= 4) out[4] = -6.0 * r * r * r * r;
      return;
    }
    case PrimitiveId::Lorentz: {
      const double x2 = x * x;
      const double q = 1.0 / (1.0 + x2);
      const double q2 = q * q;
      out[0] = q;
      if (max_order >= 1) out[1] = -2.0 * x * q2;
      if (max_order >= 2) out[2] = (6.0 * x2 - 2.0) * q2 * q;
      if (max_order >= 3) out[3] = 24.0 * x * (1.0 - x2) * q2 * q2;
      if (max_order >= 4) out[4] = 24.0 * (5.0 * x2 * x2 - 10.0 * x2 + 1.0) * q2 * q2 * q;
      return;
    }
  }
}

struct Primitive {
  PrimitiveId id;
  std::string name;

  // (f, f', f'', f''') at x.
  std::array<double, 4> eval(double x) const {
    std::array<double, 4> d{};
    primitive_derivatives(id, x, 3, d.data());
    return d;
  }

  // Derivatives up to `order` (0..3).
  std::vector<double> eval(double x, int order) const;

  // Infix rendering of f applied to `arg` (already a valid operand string).
  std::string render(std::string_view arg) const;

  friend bool operator==(const Primitive& a, const Primitive& b) { return a.id == b.id; }
};

class PrimitiveLibrary {
 public:
  PrimitiveLibrary() = default;
  explicit PrimitiveLibrary(std::vector<Primitive> prims);

  std::size_t size() const { return prims_.size(); }
  const Primitive& operator[](std::size_t i) const { return prims_[i]; }
  const std::vector<Primitive>& primitives() const { return prims_; }
  std::vector<std::string> names() const;

  // Index of a primitive by canonical name or alias, -1 if absent.
  int index_of(std::string_view name) const;

 private:
  std::vector<Primitive> prims_;
};

// {0, 1, x, x^2, x^3, sin, cos, tanh, exp, log1pabs, lorentz, sinh, cosh}.
PrimitiveLibrary default_library();

// Primitives in the requested order. Accepts canonical names and aliases
// ("zero", "one", "identity", "square", "cube", "0", "1").
PrimitiveLibrary library_subset(std::span<const std::string> names);

// Canonical spelling for a name or alias; throws ConfigError if unknown.
std::string canonical_primitive_name(std::string_view name);

// Primitive applied to a tape variable: each derivative order k is recorded as
// a node whose local partial is order k+1.
std::array<ad::Var, 4> primitive_derivatives(const Primitive& p, const ad::Var& x);

inline std::array<double, 4> primitive_derivatives(const Primitive& p, double x) {
  return p.eval(x);
}

template <class T>
T apply(const Primitive& p, const T& x) {
  return primitive_derivatives(p, x)[0];
}

template <class T>
ad::Jet3<T> apply(const Primitive& p, const ad::Jet3<T>& x) {
  return ad::jet_compose(primitive_derivatives(p, x[0]), x);
}

}  // namespace symkan
