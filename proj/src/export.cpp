#include "symkan/export.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "symkan/errors.hpp"

namespace symkan {

SymExpr SymExpr::constant(double v) {
  SymExpr e;
  e.kind = Kind::Const;
  e.value = v;
  return e;
}

SymExpr SymExpr::var(int i) {
  SymExpr e;
  e.kind = Kind::Var;
  e.index = i;
  return e;
}

namespace {

SymExpr affine(SymExpr::Kind kind, double scale, double shift, SymExpr child) {
  SymExpr e;
  e.kind = kind;
  e.scale = scale;
  e.shift = shift;
  e.children.push_back(std::move(child));
  return e;
}

const PrimitiveLibrary& full_library() {
  static const PrimitiveLibrary lib = default_library();
  return lib;
}

const Primitive& primitive_named(const std::string& name) {
  const int p = full_library().index_of(name);
  if (p < 0) throw ConfigError("unknown primitive '" + name + "' in expression");
  return full_library()[static_cast<std::size_t>(p)];
}

}  // namespace

SymExpr SymExpr::affine_in(double scale, double shift, SymExpr child) {
  return affine(Kind::AffineIn, scale, shift, std::move(child));
}

SymExpr SymExpr::affine_out(double scale, double shift, SymExpr child) {
  return affine(Kind::AffineOut, scale, shift, std::move(child));
}

SymExpr SymExpr::apply(std::string prim, SymExpr child) {
  SymExpr e;
  e.kind = Kind::PrimApply;
  e.prim = canonical_primitive_name(prim);
  e.children.push_back(std::move(child));
  return e;
}

SymExpr SymExpr::sum(std::vector<double> coefs, std::vector<SymExpr> children) {
  if (coefs.size() != children.size()) throw ConfigError("weighted sum: coefficient count mismatch");
  SymExpr e;
  e.kind = Kind::WeightedSum;
  e.coefs = std::move(coefs);
  e.children = std::move(children);
  return e;
}

// ---- Extraction ----------------------------------------------------------------

std::vector<SymExpr> extract(const Network& net) {
  if (!net.is_hardened()) throw StateError("extract requires a hardened network (run stage 2 first)");
  const auto& cfg = net.config();
  const auto& lay = net.layout();
  const auto& theta = net.params();

  std::vector<SymExpr> h;
  std::vector<bool> alive;
  for (int i = 0; i < cfg.n_inputs; ++i) {
    if (cfg.input_affine.empty()) {
      h.push_back(SymExpr::var(i));
    } else {
      const auto& a = cfg.input_affine[static_cast<std::size_t>(i)];
      h.push_back(SymExpr::affine_in(a.scale, a.shift, SymExpr::var(i)));
    }
    alive.push_back(true);
  }

  for (int l = 0; l < cfg.layers(); ++l) {
    std::vector<SymExpr> next;
    std::vector<bool> next_alive;
    for (int k = 0; k < cfg.units[static_cast<std::size_t>(l)]; ++k) {
      const UnitHardening& hs = net.hardening(l, k);
      if (hs.pruned) {
        next.push_back(SymExpr::constant(0.0));
        next_alive.push_back(false);
        continue;
      }
      const std::size_t off = lay.edge_offset(l, k, hs.edge);
      std::vector<double> w;
      std::vector<SymExpr> terms;
      for (int i = 0; i < lay.fan_in(l); ++i) {
        if (!alive[static_cast<std::size_t>(i)]) continue;
        w.push_back(theta[off + static_cast<std::size_t>(i)]);
        terms.push_back(h[static_cast<std::size_t>(i)]);
      }
      w.push_back(theta[off + lay.b_off(l)]);
      terms.push_back(SymExpr::constant(1.0));
      const auto p = static_cast<std::size_t>(hs.primitive);
      SymExpr z = SymExpr::affine_in(theta[off + lay.gamma_off(l) + p], theta[off + lay.beta_off(l) + p],
                                     SymExpr::sum(std::move(w), std::move(terms)));
      SymExpr f = SymExpr::apply(net.library()[p].name, std::move(z));
      next.push_back(SymExpr::affine_out(theta[off + lay.a_off(l) + p], theta[off + lay.bias_off(l) + p],
                                         std::move(f)));
      next_alive.push_back(true);
    }
    h = std::move(next);
    alive = std::move(next_alive);
  }

  const int group = cfg.units.back() / cfg.n_outputs;
  std::vector<SymExpr> out;
  for (int j = 0; j < cfg.n_outputs; ++j) {
    std::vector<double> c;
    std::vector<SymExpr> terms;
    for (int k = 0; k < group; ++k) {
      const auto u = static_cast<std::size_t>(j * group + k);
      if (!alive[u]) continue;
      c.push_back(1.0);
      terms.push_back(h[u]);
    }
    out.push_back(terms.empty() ? SymExpr::constant(0.0) : SymExpr::sum(std::move(c), std::move(terms)));
  }
  return out;
}

double eval_expr(const SymExpr& e, std::span<const double> x) {
  using K = SymExpr::Kind;
  switch (e.kind) {
    case K::Const: return e.value;
    case K::Var:
      if (e.index < 0 || static_cast<std::size_t>(e.index) >= x.size()) {
        throw DomainError("expression variable x" + std::to_string(e.index) + " out of range");
      }
      return x[static_cast<std::size_t>(e.index)];
    case K::AffineIn:
    case K::AffineOut: return e.scale * eval_expr(e.child(), x) + e.shift;
    case K::PrimApply: return apply(primitive_named(e.prim), eval_expr(e.child(), x));
    case K::WeightedSum: {
      double acc = 0.0;
      for (std::size_t i = 0; i < e.children.size(); ++i) acc += e.coefs[i] * eval_expr(e.children[i], x);
      return acc;
    }
  }
  return 0.0;
}

// ---- Simplification ---------------------------------------------------------------

namespace {

SymExpr simplify_once(const SymExpr& in, double eps) {
  using K = SymExpr::Kind;
  SymExpr e = in;
  for (auto& c : e.children) c = simplify_once(c, eps);

  switch (e.kind) {
    case K::Const:
    case K::Var: return e;
    case K::AffineIn:
    case K::AffineOut: {
      const SymExpr& c = e.child();
      if (std::abs(e.scale) <= eps) return SymExpr::constant(e.shift);
      if (c.is_const()) return SymExpr::constant(e.scale * c.value + e.shift);
      if (c.is_affine()) {
        return affine(e.kind, e.scale * c.scale, e.scale * c.shift + e.shift, c.child());
      }
      if (e.scale == 1.0 && e.shift == 0.0) return c;
      return e;
    }
    case K::PrimApply: {
      const Primitive& p = primitive_named(e.prim);
      if (p.id == PrimitiveId::Identity) return e.child();
      if (p.id == PrimitiveId::Zero) return SymExpr::constant(0.0);
      if (p.id == PrimitiveId::One) return SymExpr::constant(1.0);
      if (e.child().is_const()) return SymExpr::constant(apply(p, e.child().value));
      return e;
    }
    case K::WeightedSum: {
      std::vector<double> coefs;
      std::vector<SymExpr> kids;
      double konst = 0.0;
      bool has_const = false;
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (e.children[i].is_const()) {
          konst += e.coefs[i] * e.children[i].value;
          has_const = true;
          continue;
        }
        if (std::abs(e.coefs[i]) <= eps) continue;
        coefs.push_back(e.coefs[i]);
        kids.push_back(e.children[i]);
      }
      if (has_const && std::abs(konst) <= eps) konst = 0.0;
      if (kids.empty()) return SymExpr::constant(konst);
      if (kids.size() == 1) return SymExpr::affine_in(coefs[0], konst, std::move(kids[0]));
      if (konst != 0.0) {
        coefs.push_back(konst);
        kids.push_back(SymExpr::constant(1.0));
      }
      return SymExpr::sum(std::move(coefs), std::move(kids));
    }
  }
  return e;
}

}  // namespace

SymExpr simplify(const SymExpr& e, double eps_coef) {
  if (!(eps_coef >= 0.0)) throw ConfigError("simplify: eps_coef must be >= 0");
  SymExpr cur = e;
  for (int iter = 0; iter < 1000; ++iter) {
    SymExpr next = simplify_once(cur, eps_coef);
    if (next == cur) return cur;
    cur = std::move(next);
  }
  return cur;
}

// ---- Text rendering -----------------------------------------------------------------

namespace {

// Precedence of a rendered fragment: 0 sum or leading minus, 1 product,
// 2 power, 3 atom.
struct Frag {
  std::string s;
  int prec = 3;
};

std::string fmt_num(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

Frag num(double v, int precision) {
  Frag f{fmt_num(v, precision), 3};
  if (f.s[0] == '-') f.prec = 0;
  return f;
}

std::string wrap(const Frag& f, int need) { return f.prec < need ? "(" + f.s + ")" : f.s; }

Frag scaled(double c, const Frag& child, int precision) {
  if (c == 1.0) return child;
  Frag out{fmt_num(c, precision) + "*" + wrap(child, 1), 1};
  if (out.s[0] == '-') out.prec = 0;
  return out;
}

void append_term(std::string& acc, const std::string& term) {
  if (acc.empty()) {
    acc = term;
  } else if (term[0] == '-') {
    acc += term;
  } else {
    acc += "+" + term;
  }
}

Frag render(const SymExpr& e, int precision) {
  using K = SymExpr::Kind;
  switch (e.kind) {
    case K::Const: return num(e.value, precision);
    case K::Var: return {"x" + std::to_string(e.index), 3};
    case K::AffineIn:
    case K::AffineOut: {
      Frag body = scaled(e.scale, render(e.child(), precision), precision);
      if (e.shift == 0.0) return body;
      std::string s = body.s;
      append_term(s, fmt_num(e.shift, precision));
      return {s, 0};
    }
    case K::PrimApply: {
      const Primitive& p = primitive_named(e.prim);
      const Frag arg = render(e.child(), precision);
      switch (p.id) {
        case PrimitiveId::Zero: return {"0", 3};
        case PrimitiveId::One: return {"1", 3};
        case PrimitiveId::Identity: return arg;
        case PrimitiveId::Square:
        case PrimitiveId::Cube: return {p.render(wrap(arg, 3)), 2};
        case PrimitiveId::Lorentz: return {p.render(wrap(arg, 3)), 1};
        default: return {p.render(arg.s), 3};
      }
    }
    case K::WeightedSum: {
      if (e.children.empty()) return {"0", 3};
      std::string s;
      Frag last;
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        const auto& c = e.children[i];
        last = c.is_const() ? num(e.coefs[i] * c.value, precision)
                            : scaled(e.coefs[i], render(c, precision), precision);
        append_term(s, last.s);
      }
      if (e.children.size() == 1) return last;
      return {s, 0};
    }
  }
  return {"0", 3};
}

}  // namespace

std::string render_text(const SymExpr& e, int precision) {
  if (precision < 1 || precision > 17) throw ConfigError("render precision must lie in [1, 17]");
  return render(e, precision).s;
}

// ---- Structured form -------------------------------------------------------------------

nlohmann::json render_structured(const SymExpr& e) {
  using K = SymExpr::Kind;
  nlohmann::json j;
  switch (e.kind) {
    case K::Const:
      j["type"] = "const";
      j["value"] = e.value;
      break;
    case K::Var:
      j["type"] = "var";
      j["index"] = e.index;
      break;
    case K::AffineIn:
    case K::AffineOut:
      j["type"] = e.kind == K::AffineIn ? "affine_in" : "affine_out";
      j["scale"] = e.scale;
      j["shift"] = e.shift;
      j["child"] = render_structured(e.child());
      break;
    case K::PrimApply:
      j["type"] = "prim";
      j["name"] = e.prim;
      j["child"] = render_structured(e.child());
      break;
    case K::WeightedSum: {
      j["type"] = "sum";
      nlohmann::json terms = nlohmann::json::array();
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        terms.push_back({{"coef", e.coefs[i]}, {"expr", render_structured(e.children[i])}});
      }
      j["terms"] = std::move(terms);
      break;
    }
  }
  return j;
}

SymExpr parse_structured(const nlohmann::json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "const") return SymExpr::constant(j.at("value").get<double>());
    if (type == "var") return SymExpr::var(j.at("index").get<int>());
    if (type == "affine_in") {
      return SymExpr::affine_in(j.at("scale").get<double>(), j.at("shift").get<double>(),
                                parse_structured(j.at("child")));
    }
    if (type == "affine_out") {
      return SymExpr::affine_out(j.at("scale").get<double>(), j.at("shift").get<double>(),
                                 parse_structured(j.at("child")));
    }
    if (type == "prim") return SymExpr::apply(j.at("name").get<std::string>(), parse_structured(j.at("child")));
    if (type == "sum") {
      std::vector<double> c;
      std::vector<SymExpr> kids;
      for (const auto& t : j.at("terms")) {
        c.push_back(t.at("coef").get<double>());
        kids.push_back(parse_structured(t.at("expr")));
      }
      return SymExpr::sum(std::move(c), std::move(kids));
    }
    throw LoadError("unknown expression node type '" + type + "'");
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(std::string("malformed expression document: ") + ex.what());
  } catch (const ConfigError& ex) {
    throw LoadError(ex.what());
  }
}

// ---- Infix parser ---------------------------------------------------------------

InfixExpression::InfixExpression(const std::string& text) : src_(text) {
  root_ = parse_sum();
  while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  if (pos_ != src_.size()) {
    throw ConfigError("unexpected '" + src_.substr(pos_, 1) + "' at offset " + std::to_string(pos_));
  }
}

int InfixExpression::add(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

namespace {

char peek(const std::string& s, std::size_t& pos) {
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return pos < s.size() ? s[pos] : '\0';
}

}  // namespace

int InfixExpression::parse_sum() {
  int lhs = parse_product();
  for (;;) {
    const char c = peek(src_, pos_);
    if (c != '+' && c != '-') return lhs;
    ++pos_;
    const int rhs = parse_product();
    lhs = add({c, 0.0, 0, {}, {lhs, rhs}});
  }
}

int InfixExpression::parse_product() {
  int lhs = parse_unary();
  for (;;) {
    const char c = peek(src_, pos_);
    if (c != '*' && c != '/') return lhs;
    ++pos_;
    const int rhs = parse_unary();
    lhs = add({c, 0.0, 0, {}, {lhs, rhs}});
  }
}

int InfixExpression::parse_unary() {
  const char c = peek(src_, pos_);
  if (c == '-') {
    ++pos_;
    return add({'n', 0.0, 0, {}, {parse_unary()}});
  }
  if (c == '+') {
    ++pos_;
    return parse_unary();
  }
  return parse_power();
}

int InfixExpression::parse_power() {
  const int base = parse_atom();
  if (peek(src_, pos_) == '^') {
    ++pos_;
    const int ex = parse_unary();
    return add({'^', 0.0, 0, {}, {base, ex}});
  }
  return base;
}

int InfixExpression::parse_atom() {
  const char c = peek(src_, pos_);
  if (c == '(') {
    ++pos_;
    const int inner = parse_sum();
    if (peek(src_, pos_) != ')') throw ConfigError("expected ')' at offset " + std::to_string(pos_));
    ++pos_;
    return inner;
  }
  if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
    const char* begin = src_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw ConfigError("bad number at offset " + std::to_string(pos_));
    pos_ += static_cast<std::size_t>(end - begin);
    return add({'#', v, 0, {}, {}});
  }
  if (std::isalpha(static_cast<unsigned char>(c))) {
    std::size_t start = pos_;
    while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::string word = src_.substr(start, pos_ - start);
    if (word.size() > 1 && word[0] == 'x' &&
        word.find_first_not_of("0123456789", 1) == std::string::npos) {
      const int idx = std::stoi(word.substr(1));
      max_var_ = std::max(max_var_, idx);
      return add({'x', 0.0, idx, {}, {}});
    }
    static const char* kFunctions[] = {"sin", "cos", "tanh", "exp", "sinh", "cosh", "log", "abs"};
    bool known = false;
    for (const char* f : kFunctions) known = known || word == f;
    if (!known) throw ConfigError("unknown function '" + word + "'");
    if (peek(src_, pos_) != '(') throw ConfigError("expected '(' after " + word);
    ++pos_;
    const int arg = parse_sum();
    if (peek(src_, pos_) != ')') throw ConfigError("expected ')' after argument of " + word);
    ++pos_;
    return add({'f', 0.0, 0, word, {arg}});
  }
  throw ConfigError("unexpected end of expression at offset " + std::to_string(pos_));
}

double InfixExpression::eval(int id, std::span<const double> x) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  auto arg = [&](std::size_t i) { return eval(n.args[i], x); };
  switch (n.op) {
    case '#': return n.value;
    case 'x':
      if (static_cast<std::size_t>(n.index) >= x.size()) throw DomainError("variable out of range");
      return x[static_cast<std::size_t>(n.index)];
    case 'n': return -arg(0);
    case '+': return arg(0) + arg(1);
    case '-': return arg(0) - arg(1);
    case '*': return arg(0) * arg(1);
    case '/': return arg(0) / arg(1);
    case '^': {
      const double b = arg(0), p = arg(1);
      if (p == 2.0) return b * b;
      if (p == 3.0) return b * b * b;
      return std::pow(b, p);
    }
    case 'f': {
      const double a = arg(0);
      if (n.fn == "sin") return std::sin(a);
      if (n.fn == "cos") return std::cos(a);
      if (n.fn == "tanh") return std::tanh(a);
      if (n.fn == "exp") return std::exp(a);
      if (n.fn == "sinh") return std::sinh(a);
      if (n.fn == "cosh") return std::cosh(a);
      if (n.fn == "log") return std::log(a);
      return std::abs(a);
    }
  }
  return 0.0;
}

double InfixExpression::operator()(std::span<const double> x) const { return eval(root_, x); }

// ---- Structure helpers ---------------------------------------------------------------

int count_primitive(const SymExpr& e, const std::string& prim) {
  int n = e.kind == SymExpr::Kind::PrimApply && e.prim == canonical_primitive_name(prim) ? 1 : 0;
  for (const auto& c : e.children) n += count_primitive(c, prim);
  return n;
}

bool is_affine_form(const SymExpr& e) {
  if (e.kind == SymExpr::Kind::PrimApply) {
    const auto id = primitive_named(e.prim).id;
    if (id != PrimitiveId::Identity && id != PrimitiveId::Zero && id != PrimitiveId::One) return false;
  }
  for (const auto& c : e.children) {
    if (!is_affine_form(c)) return false;
  }
  return true;
}

// ---- Primitive report -------------------------------------------------------------------

PrimitiveReport report_selected_primitives(const Network& net) {
  if (!net.is_hardened()) throw StateError("primitive report requires a hardened network (run stage 2 first)");
  PrimitiveReport r;
  const auto& cfg = net.config();
  for (int l = 0; l < cfg.layers(); ++l) {
    std::vector<SelectedPrimitive> row;
    for (int k = 0; k < cfg.units[static_cast<std::size_t>(l)]; ++k) {
      const auto& hs = net.hardening(l, k);
      row.push_back({net.library()[static_cast<std::size_t>(hs.primitive)].name, !hs.pruned});
    }
    r.layers.push_back(std::move(row));
  }
  return r;
}

std::string render_report_markdown(const PrimitiveReport& r) {
  std::string s = "| Layer | Selected primitives |\n|---|---|\n";
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    s += "| " + std::to_string(l) + " | ";
    for (std::size_t k = 0; k < r.layers[l].size(); ++k) {
      if (k > 0) s += ", ";
      s += r.layers[l][k].name + (r.layers[l][k].alive ? " (alive)" : " (killed)");
    }
    s += " |\n";
  }
  return s;
}

}  // namespace symkan
