#include "symkan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace symkan::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::Shift: return "shift";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Primitive: return "primitive";
    case OpKind::StraightThrough: return "straight_through";
    case OpKind::Custom: return "custom";
  }
  return "unknown";
}

namespace {

[[noreturn]] void non_finite(OpKind kind, const char* what) {
  throw NumericalError(std::string("non-finite ") + what + " recorded by operation '" +
                       op_name(kind) + "'");
}

Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape && b.tape && a.tape != b.tape) {
    throw StateError("operands recorded on different tapes");
  }
  return a.tape ? a.tape : b.tape;
}

}  // namespace

Var Tape::variable(double value) {
  if (!std::isfinite(value)) non_finite(OpKind::Leaf, "value");
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({static_cast<std::int32_t>(leaves_.size()), -1, 0.0, 0.0, OpKind::Leaf});
  leaves_.push_back(id);
  return {this, id, value};
}

Var Tape::unary(OpKind kind, const Var& a, double da, double value) {
  if (!std::isfinite(value)) non_finite(kind, "value");
  if (a.is_constant()) return Var(value);
  if (!std::isfinite(da)) non_finite(kind, "partial");
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({a.id, -1, da, 0.0, kind});
  return {this, id, value};
}

Var Tape::binary(OpKind kind, const Var& a, double da, const Var& b, double db, double value) {
  if (!std::isfinite(value)) non_finite(kind, "value");
  if (a.is_constant()) return unary(kind, b, db, value);
  if (b.is_constant()) return unary(kind, a, da, value);
  if (!std::isfinite(da) || !std::isfinite(db)) non_finite(kind, "partial");
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({a.id, b.id, da, db, kind});
  return {this, id, value};
}

std::int32_t Tape::leaf_ordinal(std::int32_t node_id) const {
  if (node_id < 0 || node_id >= static_cast<std::int32_t>(nodes_.size())) return -1;
  const Node& n = nodes_[static_cast<std::size_t>(node_id)];
  return n.kind == OpKind::Leaf ? n.a : -1;
}

void Tape::clear() {
  nodes_.clear();
  leaves_.clear();
}

double GradientMap::operator[](const Var& leaf) const {
  if (leaf.is_constant() || leaf.tape != tape_ || tape_ == nullptr) return 0.0;
  const auto ord = tape_->leaf_ordinal(leaf.id);
  return ord < 0 ? 0.0 : adjoints_[static_cast<std::size_t>(ord)];
}

void accumulate_gradient(const Tape& tape, const Var& root, double weight,
                         std::span<double> leaf_grads, std::vector<double>& scratch) {
  if (root.is_constant()) return;
  if (root.tape != &tape) throw StateError("root is not recorded on this tape");
  const auto& nodes = tape.nodes();
  const auto n = static_cast<std::size_t>(root.id) + 1;
  scratch.assign(n, 0.0);
  scratch[n - 1] = weight;
  for (std::size_t i = n; i-- > 0;) {
    const double adj = scratch[i];
    if (adj == 0.0) continue;
    const auto& node = nodes[i];
    if (!std::isfinite(adj)) non_finite(node.kind, "adjoint");
    if (node.kind == OpKind::Leaf) {
      leaf_grads[static_cast<std::size_t>(node.a)] += adj;
      continue;
    }
    scratch[static_cast<std::size_t>(node.a)] += adj * node.da;
    if (node.b >= 0) scratch[static_cast<std::size_t>(node.b)] += adj * node.db;
  }
}

GradientMap backward(const Tape& tape, const Var& root) {
  std::vector<double> grads(tape.leaf_count(), 0.0);
  std::vector<double> scratch;
  accumulate_gradient(tape, root, 1.0, grads, scratch);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) non_finite(OpKind::Leaf, "gradient");
  }
  return {&tape, std::move(grads)};
}

Var operator+(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value + b.value;
  return t ? t->binary(OpKind::Add, a, 1.0, b, 1.0, v) : Var(v);
}

Var operator-(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value - b.value;
  return t ? t->binary(OpKind::Sub, a, 1.0, b, -1.0, v) : Var(v);
}

Var operator*(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value * b.value;
  return t ? t->binary(OpKind::Mul, a, b.value, b, a.value, v) : Var(v);
}

Var operator/(const Var& a, const Var& b) {
  Tape* t = common_tape(a, b);
  const double v = a.value / b.value;
  if (!t) return Var(v);
  return t->binary(OpKind::Div, a, 1.0 / b.value, b, -v / b.value, v);
}

Var operator-(const Var& a) {
  return a.tape ? a.tape->unary(OpKind::Neg, a, -1.0, -a.value) : Var(-a.value);
}

Var custom_unary(OpKind kind, const Var& x, double value, double partial) {
  return x.tape ? x.tape->unary(kind, x, partial, value) : Var(value);
}

Var exp(const Var& x) {
  const double v = std::exp(x.value);
  return custom_unary(OpKind::Exp, x, v, v);
}

Var log(const Var& x) {
  return custom_unary(OpKind::Log, x, std::log(x.value), 1.0 / x.value);
}

Var sin(const Var& x) {
  return custom_unary(OpKind::Sin, x, std::sin(x.value), std::cos(x.value));
}

Var cos(const Var& x) {
  return custom_unary(OpKind::Cos, x, std::cos(x.value), -std::sin(x.value));
}

Var tanh(const Var& x) {
  const double t = std::tanh(x.value);
  return custom_unary(OpKind::Tanh, x, t, 1.0 - t * t);
}

Var sqrt(const Var& x) {
  const double r = std::sqrt(x.value);
  return custom_unary(OpKind::Sqrt, x, r, 0.5 / r);
}

Var sigmoid(const Var& x) {
  const double s = sigmoid(x.value);
  return custom_unary(OpKind::Sigmoid, x, s, s * (1.0 - s));
}

Var straight_through(double hard, const Var& soft) {
  return custom_unary(OpKind::StraightThrough, soft, hard, 1.0);
}

GradCheckReport grad_check(const TapeFunction& fn, std::span<const double> point, double h,
                           double floor) {
  GradCheckReport report;
  const std::size_t n = point.size();
  {
    Tape tape;
    std::vector<Var> xs;
    xs.reserve(n);
    for (double p : point) xs.push_back(tape.variable(p));
    const Var y = fn(tape, xs);
    const GradientMap g = backward(tape, y);
    report.analytic.resize(n);
    for (std::size_t i = 0; i < n; ++i) report.analytic[i] = g[xs[i]];
  }
  auto eval_at = [&](const std::vector<double>& p) {
    Tape tape;
    std::vector<Var> xs;
    xs.reserve(n);
    for (double v : p) xs.push_back(Var(v));
    return fn(tape, xs).value;
  };
  report.numeric.resize(n);
  std::vector<double> p(point.begin(), point.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = p[i];
    p[i] = x0 + h;
    const double fp = eval_at(p);
    p[i] = x0 - h;
    const double fm = eval_at(p);
    p[i] = x0;
    report.numeric[i] = (fp - fm) / (2.0 * h);
    const double ad = report.analytic[i];
    const double fd = report.numeric[i];
    const double denom = std::max({std::abs(ad), std::abs(fd), floor});
    const double err = std::abs(ad - fd) / denom;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  return report;
}

}  // namespace symkan::ad
