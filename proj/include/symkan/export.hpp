#pragma once

// Closed-form expressions of a hardened network: extraction, rewriting,
// rendering, a structured (JSON) form and an evaluator used as an oracle.

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symkan/network.hpp"

namespace symkan {

struct SymExpr {
  enum class Kind { Const, Var, AffineIn, PrimApply, AffineOut, WeightedSum };

  Kind kind = Kind::Const;
  double value = 0.0;                // Const
  int index = 0;                     // Var
  double scale = 1.0;                // AffineIn / AffineOut
  double shift = 0.0;                // AffineIn / AffineOut
  std::string prim;                  // PrimApply, canonical primitive name
  std::vector<double> coefs;         // WeightedSum, one per child
  std::vector<SymExpr> children;

  static SymExpr constant(double v);
  static SymExpr var(int i);
  static SymExpr affine_in(double scale, double shift, SymExpr child);
  static SymExpr affine_out(double scale, double shift, SymExpr child);
  static SymExpr apply(std::string prim, SymExpr child);
  static SymExpr sum(std::vector<double> coefs, std::vector<SymExpr> children);

  bool is_const() const { return kind == Kind::Const; }
  bool is_affine() const { return kind == Kind::AffineIn || kind == Kind::AffineOut; }
  const SymExpr& child() const { return children.front(); }

  friend bool operator==(const SymExpr&, const SymExpr&) = default;
};

// One expression per output, in original input units (x0 .. x{n-1}).
// Throws StateError for an unhardened network.
std::vector<SymExpr> extract(const Network& net);

double eval_expr(const SymExpr& e, std::span<const double> x);

// Fixpoint of the rewrite rules; WeightedSum terms with |coef| <= eps_coef and
// affine maps with |scale| <= eps_coef are dropped.
SymExpr simplify(const SymExpr& e, double eps_coef = 1e-8);

// Infix text with `precision` significant digits.
std::string render_text(const SymExpr& e, int precision = 6);

nlohmann::json render_structured(const SymExpr& e);
// Inverse of render_structured; throws LoadError on malformed documents.
SymExpr parse_structured(const nlohmann::json& j);

// Parses the infix language produced by render_text into a callable tree.
// Supported: numbers, x<i>, + - * / ^, sin cos tanh exp sinh cosh log abs.
class InfixExpression {
 public:
  explicit InfixExpression(const std::string& text);
  double operator()(std::span<const double> x) const;
  int max_variable() const { return max_var_; }

 private:
  struct Node {
    char op = 0;  // '#' number, 'x' variable, 'f' function, '+', '-', '*', '/', '^', 'n' (negate)
    double value = 0.0;
    int index = 0;
    std::string fn;
    std::vector<int> args;
  };
  int parse_sum();
  int parse_product();
  int parse_unary();
  int parse_power();
  int parse_atom();
  int add(Node n);
  double eval(int id, std::span<const double> x) const;

  std::string src_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;
  int root_ = -1;
  int max_var_ = -1;
};

// Number of PrimApply nodes with the given primitive name.
int count_primitive(const SymExpr& e, const std::string& prim);
// True when e is built only from Const, Var, affine maps and weighted sums.
bool is_affine_form(const SymExpr& e);

struct SelectedPrimitive {
  std::string name;
  bool alive = true;
};

struct PrimitiveReport {
  std::vector<std::vector<SelectedPrimitive>> layers;
};

// Throws StateError for an unhardened network.
PrimitiveReport report_selected_primitives(const Network& net);

// Markdown table: one row per layer, entries "name (alive|killed)".
std::string render_report_markdown(const PrimitiveReport& r);

}  // namespace symkan
