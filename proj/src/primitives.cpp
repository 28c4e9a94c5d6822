#include "symkan/primitives.hpp"

#include <algorithm>
#include <utility>

namespace symkan {

namespace {

struct Entry {
  PrimitiveId id;
  const char* name;
};

constexpr Entry kCanonical[] = {
    {PrimitiveId::Zero, "0"},          {PrimitiveId::One, "1"},
    {PrimitiveId::Identity, "x"},      {PrimitiveId::Square, "x^2"},
    {PrimitiveId::Cube, "x^3"},        {PrimitiveId::Sin, "sin"},
    {PrimitiveId::Cos, "cos"},         {PrimitiveId::Tanh, "tanh"},
    {PrimitiveId::Exp, "exp"},         {PrimitiveId::Log1pAbs, "log1pabs"},
    {PrimitiveId::Lorentz, "lorentz"}, {PrimitiveId::Sinh, "sinh"},
    {PrimitiveId::Cosh, "cosh"},
};

constexpr std::pair<const char*, const char*> kAliases[] = {
    {"zero", "0"},    {"one", "1"},    {"const", "1"},   {"identity", "x"},
    {"square", "x^2"}, {"x2", "x^2"},  {"cube", "x^3"},  {"x3", "x^3"},
    {"log", "log1pabs"},
};

const Entry* find_canonical(std::string_view name) {
  for (const auto& e : kCanonical) {
    if (name == e.name) return &e;
  }
  for (const auto& [alias, canon] : kAliases) {
    if (name == alias) return find_canonical(canon);
  }
  return nullptr;
}

std::string valid_names() {
  std::string out;
  for (const auto& e : kCanonical) {
    if (!out.empty()) out += ", ";
    out += e.name;
  }
  return out;
}

}  // namespace

std::vector<double> Primitive::eval(double x, int order) const {
  if (order < 0 || order > 3) throw DomainError("primitive derivative order must be in 0..3");
  double d[5];
  primitive_derivatives(id, x, order, d);
  return {d, d + order + 1};
}

std::string Primitive::render(std::string_view arg) const {
  const std::string a(arg);
  switch (id) {
    case PrimitiveId::Zero: return "0";
    case PrimitiveId::One: return "1";
    case PrimitiveId::Identity: return a;
    case PrimitiveId::Square: return a + "^2";
    case PrimitiveId::Cube: return a + "^3";
    case PrimitiveId::Sin: return "sin(" + a + ")";
    case PrimitiveId::Cos: return "cos(" + a + ")";
    case PrimitiveId::Tanh: return "tanh(" + a + ")";
    case PrimitiveId::Exp: return "exp(" + a + ")";
    case PrimitiveId::Log1pAbs: return "log(1+abs(" + a + "))";
    case PrimitiveId::Lorentz: return "1/(1+" + a + "^2)";
    case PrimitiveId::Sinh: return "sinh(" + a + ")";
    case PrimitiveId::Cosh: return "cosh(" + a + ")";
  }
  return a;
}

PrimitiveLibrary::PrimitiveLibrary(std::vector<Primitive> prims) : prims_(std::move(prims)) {
  for (std::size_t i = 0; i < prims_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (prims_[i].name == prims_[j].name) {
        throw ConfigError("duplicate primitive '" + prims_[i].name + "' in library");
      }
    }
  }
}

std::vector<std::string> PrimitiveLibrary::names() const {
  std::vector<std::string> out;
  out.reserve(prims_.size());
  for (const auto& p : prims_) out.push_back(p.name);
  return out;
}

int PrimitiveLibrary::index_of(std::string_view name) const {
  const Entry* e = find_canonical(name);
  if (!e) return -1;
  for (std::size_t i = 0; i < prims_.size(); ++i) {
    if (prims_[i].id == e->id) return static_cast<int>(i);
  }
  return -1;
}

PrimitiveLibrary default_library() {
  std::vector<Primitive> prims;
  for (const auto& e : kCanonical) prims.push_back({e.id, e.name});
  return PrimitiveLibrary(std::move(prims));
}

std::string canonical_primitive_name(std::string_view name) {
  const Entry* e = find_canonical(name);
  if (!e) {
    throw ConfigError("unknown primitive '" + std::string(name) + "'; valid names: " +
                      valid_names());
  }
  return e->name;
}

PrimitiveLibrary library_subset(std::span<const std::string> names) {
  if (names.empty()) throw ConfigError("primitive library must not be empty");
  std::vector<Primitive> prims;
  prims.reserve(names.size());
  for (const auto& n : names) {
    const Entry* e = find_canonical(n);
    if (!e) {
      throw ConfigError("unknown primitive '" + n + "'; valid names: " + valid_names());
    }
    prims.push_back({e->id, e->name});
  }
  return PrimitiveLibrary(std::move(prims));
}

std::array<ad::Var, 4> primitive_derivatives(const Primitive& p, const ad::Var& x) {
  double d[5];
  primitive_derivatives(p.id, x.value, 4, d);
  std::array<ad::Var, 4> out;
  for (int k = 0; k < 4; ++k) {
    out[static_cast<std::size_t>(k)] = ad::custom_unary(ad::OpKind::Primitive, x, d[k], d[k + 1]);
  }
  return out;
}

}  // namespace symkan
