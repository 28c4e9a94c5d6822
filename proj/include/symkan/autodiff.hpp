#pragma once

// Scalar reverse-mode tape and order-3 truncated Taylor jets.
//
// Jets are generic over their coefficient type. With double coefficients they
// give input derivatives of a plain evaluation; with Var coefficients every
// Taylor coefficient is itself a tape value, so a single reverse sweep over any
// coefficient yields its parameter gradient (forward-over-reverse).

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "symkan/errors.hpp"

namespace symkan::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  Exp,
  Log,
  Sin,
  Cos,
  Tanh,
  Sqrt,
  Sigmoid,
  Primitive,
  StraightThrough,
  Custom,
};

const char* op_name(OpKind kind);

class Tape;

// A scalar value that may live on a tape. id < 0 denotes a passive constant.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;
  double value = 0.0;

  Var() = default;
  Var(double v) : value(v) {}  // NOLINT: implicit lift of constants
  Var(Tape* t, std::int32_t i, double v) : tape(t), id(i), value(v) {}

  bool is_constant() const { return id < 0; }
};

class Tape {
 public:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double da;
    double db;
    OpKind kind;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Registers a trainable leaf.
  Var variable(double value);

  // Records a node with one or two parents. Throws NumericalError if the value
  // or any local partial is non-finite (eager detection).
  Var unary(OpKind kind, const Var& a, double da, double value);
  Var binary(OpKind kind, const Var& a, double da, const Var& b, double db, double value);

  std::size_t size() const { return nodes_.size(); }
  std::size_t leaf_count() const { return leaves_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::int32_t>& leaves() const { return leaves_; }

  // Ordinal of a leaf node in creation order, or -1 if the node is not a leaf.
  std::int32_t leaf_ordinal(std::int32_t node_id) const;

  // Drops all nodes but keeps allocated capacity.
  void clear();

 private:
  std::vector<Node> nodes_;
  std::vector<std::int32_t> leaves_;
};

// Adjoint of the root with respect to every leaf, in leaf creation order.
class GradientMap {
 public:
  GradientMap() = default;
  GradientMap(const Tape* tape, std::vector<double> adjoints)
      : tape_(tape), adjoints_(std::move(adjoints)) {}

  // Gradient for a leaf variable; constants and foreign variables map to 0.
  double operator[](const Var& leaf) const;
  std::span<const double> values() const { return adjoints_; }
  std::size_t size() const { return adjoints_.size(); }

  friend bool operator==(const GradientMap& a, const GradientMap& b) {
    return a.adjoints_ == b.adjoints_;
  }

 private:
  const Tape* tape_ = nullptr;
  std::vector<double> adjoints_;
};

// Reverse accumulation with the root adjoint seeded to 1. The tape is not
// modified. Throws NumericalError naming the operation if an adjoint becomes
// non-finite.
GradientMap backward(const Tape& tape, const Var& root);

// Hot-path variant: adds weight * d(root)/d(leaf) into leaf_grads (indexed by
// leaf ordinal), reusing scratch as the node adjoint buffer.
void accumulate_gradient(const Tape& tape, const Var& root, double weight,
                         std::span<double> leaf_grads, std::vector<double>& scratch);

// ---- Var arithmetic --------------------------------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var exp(const Var& x);
Var log(const Var& x);
Var sin(const Var& x);
Var cos(const Var& x);
Var tanh(const Var& x);
Var sqrt(const Var& x);
Var sigmoid(const Var& x);

// Forward value is `hard`; the gradient passes to `soft` unchanged.
Var straight_through(double hard, const Var& soft);

// Node with an arbitrary value and local partial with respect to x.
Var custom_unary(OpKind kind, const Var& x, double value, double partial);

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double straight_through(double hard, double /*soft*/) { return hard; }

// ---- Jets -------------------------------------------------------------------

// Truncated Taylor polynomial c0 + c1 t + c2 t^2 + c3 t^3 along one seed
// direction, with c_k = u^(k)/k!.
template <class T>
struct Jet3 {
  std::array<T, 4> c{};

  Jet3() : c{T(0.0), T(0.0), T(0.0), T(0.0)} {}
  Jet3(T c0) : c{c0, T(0.0), T(0.0), T(0.0)} {}  // NOLINT: constant lift
  Jet3(T c0, T c1, T c2, T c3) : c{c0, c1, c2, c3} {}

  const T& operator[](std::size_t k) const { return c[k]; }
  T& operator[](std::size_t k) { return c[k]; }

  T value() const { return c[0]; }
  T first() const { return c[1]; }
  T second() const { return T(2.0) * c[2]; }
  T third() const { return T(6.0) * c[3]; }
};

inline Jet3<double> jet_seed(double x, bool seeded) {
  return seeded ? Jet3<double>(x, 1.0, 0.0, 0.0) : Jet3<double>(x);
}

template <class T>
Jet3<T> jet_seed(const T& x, bool seeded) {
  return seeded ? Jet3<T>(x, T(1.0), T(0.0), T(0.0)) : Jet3<T>(x);
}

template <class T>
Jet3<T> operator+(const Jet3<T>& a, const Jet3<T>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}

template <class T>
Jet3<T> operator-(const Jet3<T>& a, const Jet3<T>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]};
}

template <class T>
Jet3<T> operator-(const Jet3<T>& a) {
  return {-a[0], -a[1], -a[2], -a[3]};
}

template <class T>
Jet3<T>& operator+=(Jet3<T>& a, const Jet3<T>& b) {
  return a = a + b;
}

// Scaling by a coefficient-type scalar.
template <class T>
Jet3<T> operator*(const T& s, const Jet3<T>& a) {
  return {s * a[0], s * a[1], s * a[2], s * a[3]};
}

// Adds a scalar to the constant term.
template <class T>
Jet3<T> shift(const Jet3<T>& a, const T& s) {
  return {a[0] + s, a[1], a[2], a[3]};
}

// Truncated Cauchy product.
template <class T>
Jet3<T> jet_mul(const Jet3<T>& a, const Jet3<T>& b) {
  return {a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[1] * b[1] + a[2] * b[0],
          a[0] * b[3] + a[1] * b[2] + a[2] * b[1] + a[3] * b[0]};
}

template <class T>
Jet3<T> operator*(const Jet3<T>& a, const Jet3<T>& b) {
  return jet_mul(a, b);
}

// Composition f(x(t)) given f, f', f'', f''' evaluated at x.c0.
template <class T>
Jet3<T> jet_compose(const std::array<T, 4>& f, const Jet3<T>& x) {
  const T& x1 = x[1];
  const T& x2 = x[2];
  const T& x3 = x[3];
  return {f[0], f[1] * x1, f[1] * x2 + T(0.5) * f[2] * x1 * x1,
          f[1] * x3 + f[2] * x1 * x2 + T(1.0 / 6.0) * f[3] * x1 * x1 * x1};
}

// ---- Gradient checking -------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

// Compares backward() gradients with central differences per coordinate.
// Relative error is |ad - fd| / max(|ad|, |fd|, floor).
GradCheckReport grad_check(const TapeFunction& fn, std::span<const double> point, double h,
                           double floor = 1e-8);

}  // namespace symkan::ad
