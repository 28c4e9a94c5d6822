#include "symkan/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "symkan/errors.hpp"
#include "symkan/io.hpp"
#include "symkan/primitives.hpp"

namespace symkan {

namespace {

// Reads typed keys from one table and remembers which keys were consumed so
// that leftovers can be reported.
class Section {
 public:
  Section(const toml::table* tbl, std::string name) : tbl_(tbl), name_(std::move(name)) {}

  void get(const char* key, double& out) {
    if (const auto* n = node(key)) {
      if (auto v = n->value<double>()) {
        out = *v;
      } else {
        fail(key, "a number");
      }
    }
  }
  void get(const char* key, bool& out) {
    if (const auto* n = node(key)) {
      if (!n->is_boolean()) fail(key, "a boolean");
      out = *n->value<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const auto* n = node(key)) {
      if (!n->is_string()) fail(key, "a string");
      out = *n->value<std::string>();
    }
  }
  void get(const char* key, std::int64_t& out) {
    if (const auto* n = node(key)) {
      if (!n->is_integer()) fail(key, "an integer");
      out = *n->value<std::int64_t>();
    }
  }
  void get(const char* key, int& out) {
    std::int64_t v = out;
    get(key, v);
    if (v < INT32_MIN || v > INT32_MAX) fail(key, "a 32-bit integer");
    out = static_cast<int>(v);
  }
  void get(const char* key, std::size_t& out) {
    auto v = static_cast<std::int64_t>(out);
    get(key, v);
    if (v < 0) fail(key, "a nonnegative integer");
    out = static_cast<std::size_t>(v);
  }
  void get(const char* key, std::vector<int>& out) {
    if (const auto* n = node(key)) {
      const auto* arr = n->as_array();
      if (!arr) fail(key, "an array of integers");
      out.clear();
      for (const auto& el : *arr) {
        if (!el.is_integer()) fail(key, "an array of integers");
        out.push_back(static_cast<int>(*el.value<std::int64_t>()));
      }
    }
  }
  void get(const char* key, std::vector<std::string>& out) {
    if (const auto* n = node(key)) {
      const auto* arr = n->as_array();
      if (!arr) fail(key, "an array of strings");
      out.clear();
      for (const auto& el : *arr) {
        if (!el.is_string()) fail(key, "an array of strings");
        out.push_back(*el.value<std::string>());
      }
    }
  }
  template <std::size_t N>
  void get(const char* key, std::array<double, N>& out) {
    if (const auto* n = node(key)) {
      const auto* arr = n->as_array();
      if (!arr || arr->size() != N) fail(key, "an array of " + std::to_string(N) + " numbers");
      for (std::size_t i = 0; i < N; ++i) {
        auto v = (*arr)[i].value<double>();
        if (!v) fail(key, "an array of " + std::to_string(N) + " numbers");
        out[i] = *v;
      }
    }
  }

  void finish() const {
    if (!tbl_) return;
    for (const auto& [k, v] : *tbl_) {
      if (!used_.count(std::string(k.str()))) {
        throw ConfigError("unknown key '" + std::string(k.str()) + "' in [" + name_ + "]");
      }
    }
  }

 private:
  const toml::node* node(const char* key) {
    used_.insert(key);
    return tbl_ ? tbl_->get(key) : nullptr;
  }
  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError("[" + name_ + "] " + key + " must be " + what);
  }

  const toml::table* tbl_;
  std::string name_;
  std::set<std::string> used_;
};

const toml::table* subtable(const toml::table& root, const char* name) {
  const auto* n = root.get(name);
  if (!n) return nullptr;
  const auto* t = n->as_table();
  if (!t) throw ConfigError(std::string("'") + name + "' must be a table");
  return t;
}

void check_choice(const std::string& value, std::initializer_list<const char*> options, const char* what) {
  std::string list;
  for (const char* o : options) {
    if (value == o) return;
    if (!list.empty()) list += ", ";
    list += o;
  }
  throw ConfigError(std::string(what) + " '" + value + "' not recognized; expected one of: " + list);
}

}  // namespace

void RunConfig::validate() const {
  check_choice(problem.name, {"regression", "vdp", "rd", "laplace"}, "problem");
  check_choice(problem.power_variant, {"abs", "signed"}, "power_variant");
  check_choice(network.input_normalization, {"unit_box", "none"}, "input_normalization");
  check_choice(train.harden_trigger, {"end", "entropy"}, "harden_trigger");
  check_choice(train.edge_scoring, {"sampled", "noise_free"}, "edge_scoring");
  if (!(train.gumbel_scale >= 0.0)) throw ConfigError("gumbel_scale must be nonnegative");
  (void)parse_sampling(problem.sampling);
  if (network.units.empty()) throw ConfigError("[network] units must not be empty");
  for (int k : network.units) {
    if (k < 1) throw ConfigError("[network] units entries must be >= 1");
  }
  if (network.edges < 1) throw ConfigError("[network] edges must be >= 1");
  if (library.empty()) throw ConfigError("[library] names must not be empty");
  if (!(train.eps_kill >= 0.0 && train.eps_kill <= 1.0)) throw ConfigError("eps_kill must lie in [0, 1]");
  if (train.log_every < 1) throw ConfigError("log_every must be >= 1");
  if (train.seed < 0) throw ConfigError("seed must be nonnegative");
  if (!(train.learnable_lr_mult >= 0.0)) throw ConfigError("learnable_lr_mult must be nonnegative");
  if (problem.name == "regression" && !(problem.hi > problem.lo)) throw ConfigError("regression needs hi > lo");
  if (problem.name == "vdp" && !(problem.horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (problem.name == "rd" && !(problem.half_width > 0.0)) throw ConfigError("half_width must be positive");
  losses.validate();
  schedules.validate();
  stage2.lbfgs.validate();
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << origin << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
        << e.description();
    throw ConfigError(msg.str());
  }
  static const std::set<std::string> sections{"problem", "network", "library", "losses",
                                              "schedules", "train", "stage2"};
  for (const auto& [k, v] : root) {
    if (!sections.count(std::string(k.str()))) {
      throw ConfigError("unknown section or key '" + std::string(k.str()) + "'");
    }
  }

  RunConfig c;
  {
    Section s(subtable(root, "problem"), "problem");
    auto& p = c.problem;
    s.get("name", p.name);
    s.get("sampling", p.sampling);
    s.get("data_file", p.data_file);
    s.get("n_data", p.n_data);
    s.get("n_colloc", p.n_colloc);
    s.get("n_boundary", p.n_boundary);
    s.get("n_validation", p.n_validation);
    s.get("target", p.target);
    s.get("lo", p.lo);
    s.get("hi", p.hi);
    s.get("horizon", p.horizon);
    s.get("a", p.a);
    s.get("mu", p.mu);
    s.get("c", p.c);
    s.get("power", p.power);
    s.get("power_variant", p.power_variant);
    s.get("x0", p.x0);
    s.get("init", p.init);
    s.get("rtol", p.rtol);
    s.get("atol", p.atol);
    s.get("dt", p.dt);
    s.get("half_width", p.half_width);
    s.get("diffusion", p.diffusion);
    s.get("kappa", p.kappa);
    s.get("kappa_init", p.kappa_init);
    s.finish();
  }
  {
    Section s(subtable(root, "network"), "network");
    s.get("units", c.network.units);
    s.get("edges", c.network.edges);
    s.get("unit_gates", c.network.unit_gates);
    s.get("input_normalization", c.network.input_normalization);
    s.finish();
  }
  {
    Section s(subtable(root, "library"), "library");
    s.get("names", c.library);
    s.finish();
    for (auto& n : c.library) n = canonical_primitive_name(n);
  }
  {
    Section s(subtable(root, "losses"), "losses");
    auto& w = c.losses;
    s.get("lambda_data", w.lambda_data);
    s.get("lambda_r", w.lambda_r);
    s.get("lambda_b", w.lambda_b);
    s.get("lambda_0", w.lambda_0);
    s.get("lambda_ent", w.lambda_ent);
    s.get("lambda_nms", w.lambda_nms);
    s.get("lambda_unit", w.lambda_unit);
    s.get("lambda_bias", w.lambda_bias);
    s.get("rho", w.rho);
    std::string penalty = unit_penalty_name(w.unit_penalty);
    s.get("unit_penalty", penalty);
    w.unit_penalty = parse_unit_penalty(penalty);
    s.finish();
  }
  {
    Section s(subtable(root, "schedules"), "schedules");
    auto& h = c.schedules;
    s.get("tau_start", h.tau_start);
    s.get("tau_end", h.tau_end);
    s.get("lambda_sel_max", h.lambda_sel_max);
    s.get("ramp_fraction", h.ramp_fraction);
    s.get("lr0", h.lr0);
    s.get("lr_decay", h.lr_decay);
    s.get("gate_lr_mult", h.gate_lr_mult);
    s.finish();
  }
  {
    Section s(subtable(root, "train"), "train");
    auto& t = c.train;
    s.get("T1", c.schedules.T1);
    s.get("log_every", t.log_every);
    s.get("seed", t.seed);
    s.get("eps_kill", t.eps_kill);
    s.get("harden_trigger", t.harden_trigger);
    s.get("learnable_lr_mult", t.learnable_lr_mult);
    s.get("residual_batch", t.residual_batch);
    s.get("gumbel_scale", t.gumbel_scale);
    s.get("edge_scoring", t.edge_scoring);
    s.finish();
  }
  {
    Section s(subtable(root, "stage2"), "stage2");
    auto& o = c.stage2.lbfgs;
    s.get("enabled", c.stage2.enabled);
    s.get("memory", o.memory);
    s.get("max_iter", o.max_iter);
    s.get("c1", o.c1);
    s.get("c2", o.c2);
    s.get("grad_tol", o.grad_tol);
    s.get("step_tol", o.step_tol);
    s.get("max_linesearch", o.max_linesearch);
    s.finish();
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const LoadError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.string());
}

namespace {

template <class R>
toml::array to_array(const R& range) {
  toml::array a;
  for (const auto& v : range) a.push_back(v);
  return a;
}

}  // namespace

std::string dump_config(const RunConfig& c) {
  const auto& p = c.problem;
  toml::table problem{
      {"name", p.name},
      {"sampling", p.sampling},
      {"data_file", p.data_file},
      {"n_data", static_cast<std::int64_t>(p.n_data)},
      {"n_colloc", static_cast<std::int64_t>(p.n_colloc)},
      {"n_boundary", static_cast<std::int64_t>(p.n_boundary)},
      {"n_validation", static_cast<std::int64_t>(p.n_validation)},
      {"target", p.target},
      {"lo", p.lo},
      {"hi", p.hi},
      {"horizon", p.horizon},
      {"a", p.a},
      {"mu", p.mu},
      {"c", p.c},
      {"power", p.power},
      {"power_variant", p.power_variant},
      {"x0", to_array(p.x0)},
      {"init", to_array(p.init)},
      {"rtol", p.rtol},
      {"atol", p.atol},
      {"dt", p.dt},
      {"half_width", p.half_width},
      {"diffusion", p.diffusion},
      {"kappa", p.kappa},
      {"kappa_init", p.kappa_init},
  };
  toml::array units;
  for (int k : c.network.units) units.push_back(static_cast<std::int64_t>(k));
  toml::table network{
      {"units", units},
      {"edges", static_cast<std::int64_t>(c.network.edges)},
      {"unit_gates", c.network.unit_gates},
      {"input_normalization", c.network.input_normalization},
  };
  toml::table library{{"names", to_array(c.library)}};
  const auto& w = c.losses;
  toml::table losses{
      {"lambda_data", w.lambda_data}, {"lambda_r", w.lambda_r},
      {"lambda_b", w.lambda_b},       {"lambda_0", w.lambda_0},
      {"lambda_ent", w.lambda_ent},   {"lambda_nms", w.lambda_nms},
      {"lambda_unit", w.lambda_unit}, {"lambda_bias", w.lambda_bias},
      {"rho", w.rho},                 {"unit_penalty", std::string(unit_penalty_name(w.unit_penalty))},
  };
  const auto& h = c.schedules;
  toml::table schedules{
      {"tau_start", h.tau_start},         {"tau_end", h.tau_end},
      {"lambda_sel_max", h.lambda_sel_max}, {"ramp_fraction", h.ramp_fraction},
      {"lr0", h.lr0},                     {"lr_decay", h.lr_decay},
      {"gate_lr_mult", h.gate_lr_mult},
  };
  const auto& t = c.train;
  toml::table train{
      {"T1", static_cast<std::int64_t>(h.T1)},
      {"log_every", static_cast<std::int64_t>(t.log_every)},
      {"seed", t.seed},
      {"eps_kill", t.eps_kill},
      {"harden_trigger", t.harden_trigger},
      {"learnable_lr_mult", t.learnable_lr_mult},
      {"residual_batch", static_cast<std::int64_t>(t.residual_batch)},
      {"gumbel_scale", t.gumbel_scale},
      {"edge_scoring", t.edge_scoring},
  };
  const auto& o = c.stage2.lbfgs;
  toml::table stage2{
      {"enabled", c.stage2.enabled},
      {"memory", static_cast<std::int64_t>(o.memory)},
      {"max_iter", static_cast<std::int64_t>(o.max_iter)},
      {"c1", o.c1},
      {"c2", o.c2},
      {"grad_tol", o.grad_tol},
      {"step_tol", o.step_tol},
      {"max_linesearch", static_cast<std::int64_t>(o.max_linesearch)},
  };

  // Sections in a fixed order; toml::table itself sorts keys.
  std::ostringstream out;
  const std::pair<const char*, const toml::table*> order[] = {
      {"problem", &problem}, {"network", &network}, {"library", &library}, {"losses", &losses},
      {"schedules", &schedules}, {"train", &train}, {"stage2", &stage2}};
  bool first = true;
  for (const auto& [name, tbl] : order) {
    if (!first) out << "\n";
    first = false;
    out << "[" << name << "]\n" << *tbl << "\n";
  }
  return out.str();
}

namespace {

// Replaces the observations with rows from a CSV whose columns are the
// problem's input names followed by its output names.
void load_observations(Problem& p, const std::string& file, std::size_t n_data) {
  const CsvTable t = read_csv(file);
  std::vector<int> cols;
  for (const auto& names : {p.input_names, p.output_names}) {
    for (const auto& n : names) {
      const int c = t.column(n);
      if (c < 0) throw LoadError(file + ": missing column '" + n + "'");
      cols.push_back(c);
    }
  }
  if (t.rows.empty()) throw LoadError(file + ": no rows");
  std::vector<std::size_t> pick;
  if (n_data == 0 || n_data >= t.rows.size()) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) pick.push_back(i);
  } else if (n_data == 1) {
    pick.push_back(0);
  } else {
    for (std::size_t i = 0; i < n_data; ++i) {
      pick.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(i) *
                                                           static_cast<double>(t.rows.size() - 1) /
                                                           static_cast<double>(n_data - 1))));
    }
  }
  PointSet d;
  d.dim = p.n_inputs;
  d.n_targets = p.n_outputs;
  for (std::size_t r : pick) {
    for (int j = 0; j < p.n_inputs; ++j) d.x.push_back(t.rows[r][static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])]);
    for (int j = 0; j < p.n_outputs; ++j) {
      d.y.push_back(t.rows[r][static_cast<std::size_t>(cols[static_cast<std::size_t>(p.n_inputs + j)])]);
    }
  }
  p.data = std::move(d);
}

template <class T>
T or_default(std::size_t v, T fallback) {
  return v == 0 ? fallback : static_cast<T>(v);
}

}  // namespace

Problem build_problem(const RunConfig& c) {
  const auto& p = c.problem;
  const auto seed = static_cast<std::uint64_t>(c.train.seed);
  const SamplingStrategy sampling = parse_sampling(p.sampling);
  Problem out;
  if (p.name == "regression") {
    RegressionOptions o;
    o.target = p.target;
    o.lo = p.lo;
    o.hi = p.hi;
    o.n_data = or_default(p.n_data, o.n_data);
    o.n_validation = or_default(p.n_validation, o.n_validation);
    o.seed = seed;
    out = make_regression_problem(o);
  } else if (p.name == "vdp") {
    VdpOptions o;
    o.horizon = p.horizon;
    o.n_data = or_default(p.n_data, o.n_data);
    o.n_colloc = or_default(p.n_colloc, o.n_colloc);
    o.seed = seed;
    o.truth = {p.a, p.mu, p.c, p.power, p.power_variant == "signed" ? PowerVariant::Signed : PowerVariant::Abs};
    o.x0 = p.x0;
    o.init = p.init;
    o.sampling = sampling;
    o.rk45.rtol = p.rtol;
    o.rk45.atol = p.atol;
    o.rk45.dt_out = p.dt;
    out = make_vdp_problem(o);
  } else if (p.name == "rd") {
    RdOptions o;
    o.half_width = p.half_width;
    o.n_data = or_default(p.n_data, o.n_data);
    o.n_colloc = or_default(p.n_colloc, o.n_colloc);
    o.n_validation = or_default(p.n_validation, o.n_validation);
    o.seed = seed;
    o.diffusion = p.diffusion;
    o.kappa = p.kappa;
    o.kappa_init = p.kappa_init;
    o.sampling = sampling;
    out = make_rd_problem(o);
  } else {
    LaplaceOptions o;
    o.n_colloc = or_default(p.n_colloc, o.n_colloc);
    o.n_boundary = p.n_boundary;
    o.validation_side = or_default(p.n_validation, o.validation_side);
    o.seed = seed;
    o.sampling = sampling;
    out = make_laplace_problem(o);
  }
  if (!p.data_file.empty()) load_observations(out, p.data_file, p.n_data);
  return out;
}

NetworkConfig build_network_config(const RunConfig& c, const Problem& problem) {
  NetworkConfig n;
  n.n_inputs = problem.n_inputs;
  n.n_outputs = problem.n_outputs;
  n.units = c.network.units;
  n.edges = c.network.edges;
  for (const auto& name : c.library) n.library.push_back(canonical_primitive_name(name));
  n.unit_gates = c.network.unit_gates;
  n.rho = c.losses.rho;
  n.seed = static_cast<std::uint64_t>(c.train.seed);
  if (c.network.input_normalization == "unit_box") {
    for (int j = 0; j < problem.n_inputs; ++j) {
      n.input_affine.push_back(unit_box_affine(problem.lo[static_cast<std::size_t>(j)],
                                               problem.hi[static_cast<std::size_t>(j)]));
    }
  }
  n.validate();
  return n;
}

}  // namespace symkan
