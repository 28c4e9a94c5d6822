#include "symkan/network.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace symkan {

InputAffine unit_box_affine(double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("input domain must satisfy hi > lo");
  const double scale = 2.0 / (hi - lo);
  return {scale, -1.0 - scale * lo};
}

int NetworkConfig::total_units() const {
  int n = 0;
  for (int k : units) n += k;
  return n;
}

void NetworkConfig::validate() const {
  if (n_inputs < 1) throw ConfigError("network.n_inputs must be >= 1");
  if (units.empty()) throw ConfigError("network.units must list at least one layer");
  for (int k : units) {
    if (k < 1) throw ConfigError("every layer needs at least one unit");
  }
  if (edges < 1) throw ConfigError("network.edges must be >= 1");
  if (n_outputs < 1) throw ConfigError("network.n_outputs must be >= 1");
  if (units.back() % n_outputs != 0) {
    throw ConfigError("last-layer width " + std::to_string(units.back()) +
                      " is not divisible by n_outputs " + std::to_string(n_outputs));
  }
  if (library.empty()) throw ConfigError("library must not be empty");
  if (!input_affine.empty() && static_cast<int>(input_affine.size()) != n_inputs) {
    throw ConfigError("input_affine must have one entry per input coordinate");
  }
  if (unit_gates && !(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
}

Layout::Layout(const NetworkConfig& cfg, std::size_t library_size)
    : P_(static_cast<int>(library_size)), E_(cfg.edges) {
  int base = 0;
  std::size_t off = 0;
  for (int l = 0; l < cfg.layers(); ++l) {
    unit_base_.push_back(base);
    fan_in_.push_back(cfg.fan_in(l));
    const std::size_t edge_size =
        static_cast<std::size_t>(cfg.fan_in(l)) + 1 + 5 * static_cast<std::size_t>(P_);
    for (int k = 0; k < cfg.units[static_cast<std::size_t>(l)]; ++k) {
      for (int e = 0; e < E_; ++e) {
        edge_offsets_.push_back(off);
        off += edge_size;
      }
      if (cfg.unit_gates) {
        gate_offsets_.push_back(off);
        off += 1;
      } else {
        gate_offsets_.push_back(std::numeric_limits<std::size_t>::max());
      }
    }
    base += cfg.units[static_cast<std::size_t>(l)];
  }
  size_ = off;
}

Network::Network(NetworkConfig cfg, PrimitiveLibrary lib)
    : config_(std::move(cfg)), library_(std::move(lib)) {
  config_.validate();
  if (library_.names() != config_.library) {
    // Keep the config's name list canonical so checkpoints round-trip.
    config_.library = library_.names();
  }
  layout_ = Layout(config_, library_.size());
  params_.assign(layout_.size(), 0.0);
  hardening_.assign(static_cast<std::size_t>(config_.total_units()), UnitHardening{});
}

EdgeView Network::edge(int layer, int unit, int e) {
  const std::size_t off = layout_.edge_offset(layer, unit, e);
  const auto P = static_cast<std::size_t>(layout_.library_size());
  double* base = params_.data() + off;
  return {{base, static_cast<std::size_t>(layout_.fan_in(layer))},
          base[layout_.b_off(layer)],
          {base + layout_.gamma_off(layer), P},
          {base + layout_.beta_off(layer), P},
          {base + layout_.a_off(layer), P},
          {base + layout_.bias_off(layer), P},
          {base + layout_.logit_off(layer), P}};
}

ConstEdgeView Network::edge(int layer, int unit, int e) const {
  const std::size_t off = layout_.edge_offset(layer, unit, e);
  const auto P = static_cast<std::size_t>(layout_.library_size());
  const double* base = params_.data() + off;
  return {{base, static_cast<std::size_t>(layout_.fan_in(layer))},
          base[layout_.b_off(layer)],
          {base + layout_.gamma_off(layer), P},
          {base + layout_.beta_off(layer), P},
          {base + layout_.a_off(layer), P},
          {base + layout_.bias_off(layer), P},
          {base + layout_.logit_off(layer), P}};
}

double& Network::gate_logit(int layer, int unit) {
  if (!config_.unit_gates) throw StateError("unit gates are disabled");
  return params_[layout_.gate_offset(layer, unit)];
}

double Network::gate_logit(int layer, int unit) const {
  if (!config_.unit_gates) throw StateError("unit gates are disabled");
  return params_[layout_.gate_offset(layer, unit)];
}

bool Network::is_hardened() const {
  for (const auto& h : hardening_) {
    if (!h.hardened) return false;
  }
  return true;
}

std::uint64_t Network::structure_hash() const {
  // FNV-1a over (hardened, pruned, edge, primitive) per unit.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& u : hardening_) {
    mix(u.hardened ? 1 : 0);
    mix(u.pruned ? 1 : 0);
    mix(static_cast<std::uint64_t>(u.edge));
    mix(static_cast<std::uint64_t>(u.primitive));
  }
  return h;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<double> sample_gumbel(std::mt19937_64& rng, std::size_t count) {
  std::vector<double> out(count);
  for (auto& g : out) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    g = -std::log(-std::log(u));
  }
  return out;
}

Network init_network(const NetworkConfig& cfg) {
  Network net(cfg, library_subset(cfg.library));
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  const auto& c = net.config();
  for (int l = 0; l < c.layers(); ++l) {
    const double bound = std::sqrt(6.0 / (c.fan_in(l) + 1.0));
    for (int k = 0; k < c.units[static_cast<std::size_t>(l)]; ++k) {
      for (int e = 0; e < c.edges; ++e) {
        EdgeView ed = net.edge(l, k, e);
        for (double& w : ed.w) w = uniform(-bound, bound);
        ed.b = 0.0;
        for (double& g : ed.gamma) g = 1.0;
        for (double& b : ed.beta) b = 0.0;
        for (double& a : ed.A) a = uniform(-0.5, 0.5);
        for (double& b : ed.B) b = 0.0;
        for (double& g : ed.logits) g = uniform(-0.01, 0.01);
      }
      if (c.unit_gates) net.gate_logit(l, k) = 2.0;
    }
  }
  return net;
}

ParamGroups param_groups(const Network& net) {
  ParamGroups g;
  const auto& c = net.config();
  const auto& lay = net.layout();
  const auto P = static_cast<std::size_t>(lay.library_size());
  std::vector<char> is_gate(lay.size(), 0);
  for (int l = 0; l < c.layers(); ++l) {
    for (int k = 0; k < c.units[static_cast<std::size_t>(l)]; ++k) {
      for (int e = 0; e < c.edges; ++e) {
        const std::size_t off = lay.edge_offset(l, k, e) + lay.logit_off(l);
        for (std::size_t p = 0; p < P; ++p) is_gate[off + p] = 1;
      }
      if (c.unit_gates) is_gate[lay.gate_offset(l, k)] = 1;
    }
  }
  for (std::size_t i = 0; i < lay.size(); ++i) {
    (is_gate[i] ? g.gate : g.continuous).push_back(i);
  }
  return g;
}

std::size_t continuous_param_count(const Network& net) { return param_groups(net).continuous.size(); }

std::vector<double> forward(const Network& net, std::span<const double> x, double tau,
                            std::span<const double> noise, Mode mode, ForwardDiagnostics* diag) {
  const std::span<const double> theta(net.params());
  if (mode == Mode::Hard) {
    return forward_generic<double, double>(net, theta, nullptr, x, mode);
  }
  GateState<double> gates = compute_gates<double>(net, theta, tau, noise);
  auto out = forward_generic<double, double>(net, theta, &gates, x, mode);
  if (diag) diag->gates = std::move(gates);
  return out;
}

std::vector<ad::Jet3<double>> forward_jet(const Network& net, std::span<const double> x,
                                          int seed_coord, double tau, Mode mode) {
  if (seed_coord < 0 || seed_coord >= net.config().n_inputs) {
    throw ConfigError("seed coordinate out of range");
  }
  std::vector<ad::Jet3<double>> in;
  in.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    in.push_back(ad::jet_seed(x[i], static_cast<int>(i) == seed_coord));
  }
  const std::span<const double> theta(net.params());
  if (mode == Mode::Hard) {
    return forward_generic<double, ad::Jet3<double>>(net, theta, nullptr, in, mode);
  }
  const GateState<double> gates = compute_gates<double>(net, theta, tau);
  return forward_generic<double, ad::Jet3<double>>(net, theta, &gates, in, mode);
}

void harden(Network& net, double tau, double eps_kill) {
  const auto& c = net.config();
  const std::span<const double> theta(net.params());
  const GateState<double> gates = compute_gates<double>(net, theta, tau);
  for (int l = 0; l < c.layers(); ++l) {
    for (int k = 0; k < c.units[static_cast<std::size_t>(l)]; ++k) {
      const int ui = net.layout().unit_index(l, k);
      const auto e_star = static_cast<int>(gates.selected[static_cast<std::size_t>(ui)]);
      const ConstEdgeView ed = std::as_const(net).edge(l, k, e_star);
      UnitHardening hs;
      hs.hardened = true;
      hs.edge = e_star;
      hs.primitive = static_cast<int>(argmax<double>(ed.logits));
      if (c.unit_gates) hs.pruned = ad::sigmoid(net.gate_logit(l, k)) <= eps_kill;
      net.hardening(l, k) = hs;
    }
  }
}

}  // namespace symkan
