#pragma once

// Template definitions for network.hpp.

#include <type_traits>

namespace symkan {

namespace detail {

template <class T>
T scale(const T& s, const T& v) {
  return s * v;
}
template <class T>
ad::Jet3<T> scale(const T& s, const ad::Jet3<T>& v) {
  return s * v;
}
template <class T>
T add_scalar(const T& v, const T& s) {
  return v + s;
}
template <class T>
ad::Jet3<T> add_scalar(const ad::Jet3<T>& v, const T& s) {
  return ad::shift(v, s);
}
template <class V>
V zero_like() {
  return V(0.0);
}

}  // namespace detail

template <class V>
V Network::normalize_input(int coord, const V& x) const {
  if (config_.input_affine.empty()) return x;
  const auto& a = config_.input_affine[static_cast<std::size_t>(coord)];
  if constexpr (std::is_same_v<V, double>) {
    return a.scale * x + a.shift;
  } else if constexpr (std::is_same_v<V, ad::Var>) {
    return ad::Var(a.scale) * x + ad::Var(a.shift);
  } else {
    using T = std::decay_t<decltype(x[0])>;
    return ad::shift(T(a.scale) * x, T(a.shift));
  }
}

template <class T, class V>
V edge_transform(const PrimitiveLibrary& lib, std::span<const T> gamma, std::span<const T> beta,
                 std::span<const T> A, std::span<const T> B, const V& s, std::span<const T> alpha) {
  V y = detail::zero_like<V>();
  for (std::size_t p = 0; p < lib.size(); ++p) {
    if constexpr (std::is_same_v<T, double>) {
      if (alpha[p] == 0.0) continue;
    }
    const V z = detail::add_scalar(detail::scale(gamma[p], s), beta[p]);
    const V f = apply(lib[p], z);
    y += detail::scale(alpha[p], detail::add_scalar(detail::scale(A[p], f), B[p]));
  }
  return y;
}

template <class T>
GateState<T> compute_gates(const Network& net, std::span<const T> theta, double tau,
                           std::span<const double> noise, EdgeScoring scoring) {
  const auto& cfg = net.config();
  const auto& lay = net.layout();
  const int P = lay.library_size();
  const int E = cfg.edges;
  GateState<T> g;
  g.P = P;
  g.E = E;
  const auto n_edges = static_cast<std::size_t>(cfg.total_edges());
  g.alpha.reserve(n_edges * static_cast<std::size_t>(P));
  g.scores.reserve(n_edges);
  g.mask.reserve(n_edges);
  for (int l = 0; l < cfg.layers(); ++l) {
    for (int k = 0; k < cfg.units[static_cast<std::size_t>(l)]; ++k) {
      std::vector<std::vector<T>> alphas;
      std::vector<std::vector<T>> clean;
      alphas.reserve(static_cast<std::size_t>(E));
      for (int e = 0; e < E; ++e) {
        const std::size_t off = lay.edge_offset(l, k, e) + lay.logit_off(l);
        const auto logits = theta.subspan(off, static_cast<std::size_t>(P));
        std::span<const double> nz;
        if (!noise.empty()) {
          nz = noise.subspan(static_cast<std::size_t>(lay.edge_index(l, k, e) * P),
                             static_cast<std::size_t>(P));
        }
        alphas.push_back(gumbel_softmax<T>(logits, tau, nz));
        for (const auto& a : alphas.back()) g.alpha.push_back(a);
        if (scoring == EdgeScoring::NoiseFree && !nz.empty()) clean.push_back(gumbel_softmax<T>(logits, tau, {}));
      }
      const EdgeMask<T> m = edge_mask<T>(clean.empty() ? alphas : clean);
      g.selected.push_back(m.selected);
      for (int e = 0; e < E; ++e) {
        const T& S = m.scores[static_cast<std::size_t>(e)];
        g.scores.push_back(S);
        const double hard = static_cast<std::size_t>(e) == m.selected ? 1.0 : 0.0;
        g.mask.push_back(ad::straight_through(hard, S));
      }
      if (cfg.unit_gates) {
        using ad::sigmoid;
        g.zeta.push_back(sigmoid(theta[lay.gate_offset(l, k)]));
      } else {
        g.zeta.push_back(T(1.0));
      }
    }
  }
  return g;
}

template <class T, class V>
std::vector<V> forward_generic(const Network& net, std::span<const T> theta,
                               const GateState<T>* gates, std::span<const V> inputs, Mode mode) {
  const auto& cfg = net.config();
  const auto& lay = net.layout();
  const auto& lib = net.library();
  if (static_cast<int>(inputs.size()) != cfg.n_inputs) {
    throw ConfigError("input dimension mismatch: expected " + std::to_string(cfg.n_inputs) +
                      ", got " + std::to_string(inputs.size()));
  }
  if (mode == Mode::Soft && gates == nullptr) throw StateError("soft forward requires gates");
  const auto P = static_cast<std::size_t>(lay.library_size());

  std::vector<V> h;
  h.reserve(inputs.size());
  for (int i = 0; i < cfg.n_inputs; ++i) {
    h.push_back(net.normalize_input(i, inputs[static_cast<std::size_t>(i)]));
  }

  auto projection = [&](int l, std::size_t off, const std::vector<V>& prev) {
    const auto fan = static_cast<std::size_t>(lay.fan_in(l));
    V s = detail::scale(theta[off], prev[0]);
    for (std::size_t i = 1; i < fan; ++i) s += detail::scale(theta[off + i], prev[i]);
    return detail::add_scalar(s, theta[off + fan]);
  };

  for (int l = 0; l < cfg.layers(); ++l) {
    const int K = cfg.units[static_cast<std::size_t>(l)];
    std::vector<V> next;
    next.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      if (mode == Mode::Hard) {
        const UnitHardening& hs = net.hardening(l, k);
        if (!hs.hardened) {
          throw StateError("unit (" + std::to_string(l) + "," + std::to_string(k) +
                           ") evaluated in hard mode before hardening");
        }
        if (hs.pruned) {
          next.push_back(detail::zero_like<V>());
          continue;
        }
        const std::size_t off = lay.edge_offset(l, k, hs.edge);
        const V s = projection(l, off, h);
        const auto p = static_cast<std::size_t>(hs.primitive);
        const V z = detail::add_scalar(detail::scale(theta[off + lay.gamma_off(l) + p], s),
                                       theta[off + lay.beta_off(l) + p]);
        const V f = apply(lib[p], z);
        next.push_back(detail::add_scalar(detail::scale(theta[off + lay.a_off(l) + p], f),
                                          theta[off + lay.bias_off(l) + p]));
        continue;
      }
      V hsum = detail::zero_like<V>();
      for (int e = 0; e < cfg.edges; ++e) {
        const int ei = lay.edge_index(l, k, e);
        const T& m = gates->mask[static_cast<std::size_t>(ei)];
        if constexpr (std::is_same_v<T, double>) {
          if (m == 0.0) continue;
        }
        const std::size_t off = lay.edge_offset(l, k, e);
        const V s = projection(l, off, h);
        const V y = edge_transform<T, V>(lib, theta.subspan(off + lay.gamma_off(l), P),
                                         theta.subspan(off + lay.beta_off(l), P),
                                         theta.subspan(off + lay.a_off(l), P),
                                         theta.subspan(off + lay.bias_off(l), P), s,
                                         gates->alpha_of(ei));
        hsum += detail::scale(m, y);
      }
      if (cfg.unit_gates) {
        hsum = detail::scale(gates->zeta[static_cast<std::size_t>(lay.unit_index(l, k))], hsum);
      }
      next.push_back(hsum);
    }
    h = std::move(next);
  }

  const int group = cfg.units.back() / cfg.n_outputs;
  std::vector<V> out;
  out.reserve(static_cast<std::size_t>(cfg.n_outputs));
  for (int j = 0; j < cfg.n_outputs; ++j) {
    V acc = h[static_cast<std::size_t>(j * group)];
    for (int k = 1; k < group; ++k) acc += h[static_cast<std::size_t>(j * group + k)];
    out.push_back(acc);
  }
  return out;
}

}  // namespace symkan
