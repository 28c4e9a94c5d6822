#pragma once

// The Symbolic-KAN model. Each unit owns E edges; an edge projects the previous
// layer to a scalar s = w.h + b and maps it through a gated mixture of library
// primitives sum_p alpha_p (A_p f_p(gamma_p s + beta_p) + B_p). A unit keeps one
// edge via a straight-through top-1 mask and is optionally scaled by a sigmoid
// gate. Outputs are sums of contiguous groups of last-layer units.
//
// All trainable parameters live in one flat vector whose canonical order is
// described by Layout; EdgeView/ConstEdgeView give named access to one edge.

#include <cstdint>
#include <algorithm>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "symkan/autodiff.hpp"
#include "symkan/primitives.hpp"

namespace symkan {

// normalized = scale * x + shift
struct InputAffine {
  double scale = 1.0;
  double shift = 0.0;

  friend bool operator==(const InputAffine&, const InputAffine&) = default;
};

// Affine map sending [lo, hi] onto [-1, 1].
InputAffine unit_box_affine(double lo, double hi);

struct NetworkConfig {
  int n_inputs = 1;
  std::vector<int> units{2, 2};
  int edges = 3;
  std::vector<std::string> library;
  int n_outputs = 1;
  bool unit_gates = false;
  double rho = 0.5;
  std::vector<InputAffine> input_affine;  // empty means identity
  std::uint64_t seed = 0;

  int layers() const { return static_cast<int>(units.size()); }
  // Width of the vector feeding layer l.
  int fan_in(int layer) const { return layer == 0 ? n_inputs : units[static_cast<std::size_t>(layer - 1)]; }
  int total_units() const;
  int total_edges() const { return total_units() * edges; }

  // Throws ConfigError on violated invariants.
  void validate() const;
};

// Offsets into the flat parameter vector. Per edge: w[fan_in], b, gamma[P],
// beta[P], A[P], B[P], logits[P]; the unit gate logit (if enabled) follows the
// unit's edges.
class Layout {
 public:
  Layout() = default;
  Layout(const NetworkConfig& cfg, std::size_t library_size);

  std::size_t size() const { return size_; }
  int library_size() const { return P_; }
  int unit_index(int layer, int unit) const { return unit_base_[static_cast<std::size_t>(layer)] + unit; }
  int edge_index(int layer, int unit, int edge) const { return unit_index(layer, unit) * E_ + edge; }
  std::size_t edge_offset(int layer, int unit, int edge) const {
    return edge_offsets_[static_cast<std::size_t>(edge_index(layer, unit, edge))];
  }
  // Offset of the gate logit d, or SIZE_MAX when gates are disabled.
  std::size_t gate_offset(int layer, int unit) const {
    return gate_offsets_[static_cast<std::size_t>(unit_index(layer, unit))];
  }
  int fan_in(int layer) const { return fan_in_[static_cast<std::size_t>(layer)]; }

  // Relative offsets within an edge block.
  std::size_t b_off(int layer) const { return static_cast<std::size_t>(fan_in(layer)); }
  std::size_t gamma_off(int layer) const { return b_off(layer) + 1; }
  std::size_t beta_off(int layer) const { return gamma_off(layer) + static_cast<std::size_t>(P_); }
  std::size_t a_off(int layer) const { return beta_off(layer) + static_cast<std::size_t>(P_); }
  std::size_t bias_off(int layer) const { return a_off(layer) + static_cast<std::size_t>(P_); }
  std::size_t logit_off(int layer) const { return bias_off(layer) + static_cast<std::size_t>(P_); }

 private:
  int P_ = 0;
  int E_ = 0;
  std::size_t size_ = 0;
  std::vector<int> unit_base_;
  std::vector<int> fan_in_;
  std::vector<std::size_t> edge_offsets_;
  std::vector<std::size_t> gate_offsets_;
};

template <class T>
struct BasicEdgeView {
  std::span<T> w;
  T& b;
  std::span<T> gamma;
  std::span<T> beta;
  std::span<T> A;
  std::span<T> B;
  std::span<T> logits;
};
using EdgeView = BasicEdgeView<double>;
using ConstEdgeView = BasicEdgeView<const double>;

// Committed discrete structure of one unit.
struct UnitHardening {
  bool hardened = false;
  bool pruned = false;
  int edge = 0;
  int primitive = 0;

  friend bool operator==(const UnitHardening&, const UnitHardening&) = default;
};

class Network {
 public:
  Network() = default;
  Network(NetworkConfig cfg, PrimitiveLibrary lib);

  const NetworkConfig& config() const { return config_; }
  const PrimitiveLibrary& library() const { return library_; }
  const Layout& layout() const { return layout_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  EdgeView edge(int layer, int unit, int edge);
  ConstEdgeView edge(int layer, int unit, int edge) const;
  double& gate_logit(int layer, int unit);
  double gate_logit(int layer, int unit) const;

  UnitHardening& hardening(int layer, int unit) {
    return hardening_[static_cast<std::size_t>(layout_.unit_index(layer, unit))];
  }
  const UnitHardening& hardening(int layer, int unit) const {
    return hardening_[static_cast<std::size_t>(layout_.unit_index(layer, unit))];
  }
  const std::vector<UnitHardening>& hardening_states() const { return hardening_; }
  std::vector<UnitHardening>& hardening_states() { return hardening_; }
  bool is_hardened() const;

  // Hash of the committed discrete structure (selections and pruning).
  std::uint64_t structure_hash() const;

  // Applies the configured input normalization.
  template <class V>
  V normalize_input(int coord, const V& x) const;

 private:
  NetworkConfig config_;
  PrimitiveLibrary library_;
  Layout layout_;
  std::vector<double> params_;
  std::vector<UnitHardening> hardening_;
};

// Deterministic initialization from config.seed.
Network init_network(const NetworkConfig& cfg);

// Number of scalar parameters excluding primitive and unit-gate logits.
std::size_t continuous_param_count(const Network& net);

struct ParamGroups {
  std::vector<std::size_t> gate;        // primitive logits and unit-gate logits
  std::vector<std::size_t> continuous;  // everything else
};
ParamGroups param_groups(const Network& net);

// ---- Gates -----------------------------------------------------------------

// Gumbel(0,1) samples via -log(-log(u)).
std::vector<double> sample_gumbel(std::mt19937_64& rng, std::size_t count);

// Uniform double in [0, 1) from 53 random bits; stable across standard libraries.
double uniform01(std::mt19937_64& rng);

// Temperature softmax of (logits + noise) in max-shifted form.
template <class T>
std::vector<T> gumbel_softmax(std::span<const T> logits, double tau,
                              std::span<const double> noise = {}) {
  if (!(tau > 0.0)) throw DomainError("gumbel_softmax requires tau > 0");
  const std::size_t n = logits.size();
  std::vector<T> z(n);
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < n; ++p) {
    const double nz = noise.empty() ? 0.0 : noise[p];
    z[p] = (logits[p] + T(nz)) * T(1.0 / tau);
    zmax = std::max(zmax, ad::value_of(z[p]));
  }
  T total(0.0);
  for (std::size_t p = 0; p < n; ++p) {
    using std::exp;
    z[p] = exp(z[p] - T(zmax));
    total = total + z[p];
  }
  for (auto& v : z) v = v / total;
  return z;
}

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  return gumbel_softmax<T>(logits, 1.0);
}

// Index of the largest value, lowest index on ties.
template <class T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (ad::value_of(v[i]) > ad::value_of(v[best])) best = i;
  }
  return best;
}

template <class T>
struct EdgeMask {
  std::vector<T> scores;  // S = softmax of per-edge confidences
  std::size_t selected = 0;
};

// Confidence c_e = max_p alpha_e[p]; S = softmax(c); selected = top-1 of S.
template <class T>
EdgeMask<T> edge_mask(std::span<const std::vector<T>> alphas) {
  std::vector<T> conf;
  conf.reserve(alphas.size());
  for (const auto& a : alphas) conf.push_back(a[argmax<T>(a)]);
  EdgeMask<T> out;
  out.scores = softmax<T>(conf);
  out.selected = argmax<T>(out.scores);
  return out;
}

// Per-step gate quantities for every unit, in unit/edge index order.
template <class T>
struct GateState {
  int P = 0;
  int E = 0;
  std::vector<T> alpha;                   // [edge_index * P + p]
  std::vector<T> scores;                  // S, [edge_index]
  std::vector<std::size_t> selected;      // eta_hat position per unit
  std::vector<T> mask;                    // straight-through eta, [edge_index]
  std::vector<T> zeta;                    // unit gate value, 1 when disabled

  std::span<const T> alpha_of(int edge_index) const {
    return std::span<const T>(alpha).subspan(static_cast<std::size_t>(edge_index * P),
                                             static_cast<std::size_t>(P));
  }
};

// Which alphas feed the edge confidences: the sampled (noisy) ones or the
// noise-free ones. The primitive mixture always uses the sampled alphas.
enum class EdgeScoring { Sampled, NoiseFree };

// Gates from logits in `theta` at temperature tau. `noise` is empty (noise-free)
// or holds one Gumbel sample per primitive logit in edge order.
template <class T>
GateState<T> compute_gates(const Network& net, std::span<const T> theta, double tau,
                           std::span<const double> noise = {},
                           EdgeScoring scoring = EdgeScoring::Sampled);

// ---- Forward evaluation --------------------------------------------------------

enum class Mode { Soft, Hard };

// Generic forward: T is the parameter scalar (double or ad::Var); V is the
// activation type (T or ad::Jet3<T>). `gates` is ignored in hard mode.
template <class T, class V>
std::vector<V> forward_generic(const Network& net, std::span<const T> theta,
                               const GateState<T>* gates, std::span<const V> inputs, Mode mode);

struct ForwardDiagnostics {
  GateState<double> gates;
};

// Plain evaluation. Soft mode computes noise-free gates unless `noise` is given.
std::vector<double> forward(const Network& net, std::span<const double> x, double tau,
                            std::span<const double> noise, Mode mode,
                            ForwardDiagnostics* diag = nullptr);

// Jet evaluation seeded in input coordinate `seed_coord`.
std::vector<ad::Jet3<double>> forward_jet(const Network& net, std::span<const double> x,
                                          int seed_coord, double tau, Mode mode);

// Commits every unit: p* = argmax logits per edge, e* = top-1 of S from
// noise-free alphas at tau, pruned when gates are enabled and sigmoid(d) <= eps_kill.
void harden(Network& net, double tau, double eps_kill);

// Edge transform for one edge, generic over scalar/jet activations.
template <class T, class V>
V edge_transform(const PrimitiveLibrary& lib, std::span<const T> gamma, std::span<const T> beta,
                 std::span<const T> A, std::span<const T> B, const V& s, std::span<const T> alpha);

}  // namespace symkan

#include "symkan/network_impl.hpp"
