#include "symkan/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace symkan {

KernelGates kernel_gates_hard(const Network& net) {
  const auto& cfg = net.config();
  const auto& lay = net.layout();
  const auto P = static_cast<std::size_t>(lay.library_size());
  KernelGates k;
  k.alpha.assign(static_cast<std::size_t>(cfg.total_edges()) * P, 0.0);
  k.mask.assign(static_cast<std::size_t>(cfg.total_edges()), 0.0);
  k.zeta.assign(static_cast<std::size_t>(cfg.total_units()), 1.0);
  for (int l = 0; l < cfg.layers(); ++l) {
    for (int k_ = 0; k_ < cfg.units[static_cast<std::size_t>(l)]; ++k_) {
      const UnitHardening& hs = net.hardening(l, k_);
      if (!hs.hardened) {
        throw StateError("unit (" + std::to_string(l) + "," + std::to_string(k_) +
                         ") is not hardened");
      }
      if (hs.pruned) continue;
      const auto ei = static_cast<std::size_t>(lay.edge_index(l, k_, hs.edge));
      k.mask[ei] = 1.0;
      k.alpha[ei * P + static_cast<std::size_t>(hs.primitive)] = 1.0;
    }
  }
  return k;
}

void KernelGradients::reset(const Network& net) {
  const auto& cfg = net.config();
  const auto edges = static_cast<std::size_t>(cfg.total_edges());
  theta.assign(net.layout().size(), 0.0);
  alpha.assign(edges * static_cast<std::size_t>(net.layout().library_size()), 0.0);
  mask.assign(edges, 0.0);
  zeta.assign(static_cast<std::size_t>(cfg.total_units()), 0.0);
}

namespace {

template <int N>
inline double dot(const double* a, const double* b) {
  double s = 0.0;
  for (int c = 0; c < N; ++c) s += a[c] * b[c];
  return s;
}

// F = f(z) on coefficient arrays; z is gamma * s shifted by beta, so only
// z0 differs from gamma * s.
template <int Order, int NDir, int N>
inline void compose(double gamma, const double* s, const double* f, double* F) {
  F[0] = f[0];
  if constexpr (Order >= 1) {
    for (int d = 0; d < NDir; ++d) F[1 + d] = f[1] * gamma * s[1 + d];
  }
  if constexpr (Order >= 2) {
    for (int d = 0; d < NDir; ++d) {
      const double z1 = gamma * s[1 + d];
      F[1 + NDir + d] = f[1] * gamma * s[1 + NDir + d] + 0.5 * f[2] * z1 * z1;
    }
  }
}

// Pullback of compose with respect to z.
template <int Order, int NDir, int N>
inline void compose_adjoint(double gamma, const double* s, const double* f, const double* Fb,
                            double* zb) {
  zb[0] = Fb[0] * f[1];
  if constexpr (Order >= 1) {
    for (int d = 0; d < NDir; ++d) {
      const double z1 = gamma * s[1 + d];
      zb[0] += Fb[1 + d] * f[2] * z1;
      zb[1 + d] = Fb[1 + d] * f[1];
    }
  }
  if constexpr (Order >= 2) {
    for (int d = 0; d < NDir; ++d) {
      const double z1 = gamma * s[1 + d];
      const double z2 = gamma * s[1 + NDir + d];
      const double F2b = Fb[1 + NDir + d];
      zb[0] += F2b * (f[2] * z2 + 0.5 * f[3] * z1 * z1);
      zb[1 + d] += F2b * f[2] * z1;
      zb[1 + NDir + d] = F2b * f[1];
    }
  }
}

}  // namespace

template <int Order, int NDir>
NetworkKernel<Order, NDir>::NetworkKernel(const Network& net, const KernelGates& gates,
                                          std::array<int, NDir> seeds, bool gate_grads)
    : net_(net), gates_(gates), seeds_(seeds), gate_grads_(gate_grads) {
  const auto& cfg = net.config();
  const auto& lay = net.layout();
  P_ = lay.library_size();
  E_ = cfg.edges;
  L_ = cfg.layers();
  for (const auto& p : net.library().primitives()) ids_.push_back(p.id);
  if (Order >= 1) {
    for (int d : seeds_) {
      if (d < 0 || d >= cfg.n_inputs) throw ConfigError("seed coordinate out of range");
    }
  }
  const auto edges = static_cast<std::size_t>(cfg.total_edges());
  const auto units = static_cast<std::size_t>(cfg.total_units());
  if (gates.alpha.size() != edges * static_cast<std::size_t>(P_) || gates.mask.size() != edges ||
      gates.zeta.size() != units) {
    throw StateError("gate arrays do not match the network shape");
  }
  constexpr auto N = static_cast<std::size_t>(kCoeffs);
  act_.resize(static_cast<std::size_t>(L_) + 1);
  adj_.resize(static_cast<std::size_t>(L_) + 1);
  act_[0].assign(static_cast<std::size_t>(cfg.n_inputs) * N, 0.0);
  adj_[0].assign(act_[0].size(), 0.0);
  int base = 0;
  for (int l = 0; l < L_; ++l) {
    const int K = cfg.units[static_cast<std::size_t>(l)];
    fan_.push_back(lay.fan_in(l));
    width_.push_back(K);
    unit_base_.push_back(base);
    base += K;
    act_[static_cast<std::size_t>(l) + 1].assign(static_cast<std::size_t>(K) * N, 0.0);
    adj_[static_cast<std::size_t>(l) + 1].assign(static_cast<std::size_t>(K) * N, 0.0);
    rel_gamma_.push_back(lay.gamma_off(l));
    rel_beta_.push_back(lay.beta_off(l));
    rel_a_.push_back(lay.a_off(l));
    rel_b_.push_back(lay.bias_off(l));
    for (int k = 0; k < K; ++k) {
      for (int e = 0; e < E_; ++e) edge_off_.push_back(lay.edge_offset(l, k, e));
    }
  }
  s_.assign(edges * N, 0.0);
  y_.assign(edges * N, 0.0);
  fd_.assign(edges * static_cast<std::size_t>(P_) * kDerivs, 0.0);
  hsum_.assign(units * N, 0.0);
  out_.assign(static_cast<std::size_t>(cfg.n_outputs) * N, 0.0);
}

template <int Order, int NDir>
std::span<const double> NetworkKernel<Order, NDir>::forward(std::span<const double> x) {
  constexpr int N = kCoeffs;
  const auto& cfg = net_.config();
  if (static_cast<int>(x.size()) != cfg.n_inputs) {
    throw ConfigError("input dimension mismatch: expected " + std::to_string(cfg.n_inputs) +
                      ", got " + std::to_string(x.size()));
  }
  const double* th = net_.params().data();
  const double* alpha = gates_.alpha.data();
  const double* mask = gates_.mask.data();
  const double* zeta = gates_.zeta.data();

  double* h0 = act_[0].data();
  for (int i = 0; i < cfg.n_inputs; ++i) {
    InputAffine a;
    if (!cfg.input_affine.empty()) a = cfg.input_affine[static_cast<std::size_t>(i)];
    double* h = h0 + i * N;
    std::fill(h, h + N, 0.0);
    h[0] = a.scale * x[static_cast<std::size_t>(i)] + a.shift;
    if constexpr (Order >= 1) {
      for (int d = 0; d < NDir; ++d) {
        if (seeds_[static_cast<std::size_t>(d)] == i) h[1 + d] = a.scale;
      }
    }
  }

  for (int l = 0; l < L_; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const int fan = fan_[li];
    const double* hin = act_[li].data();
    double* hout = act_[li + 1].data();
    for (int k = 0; k < width_[li]; ++k) {
      const int ui = unit_base_[li] + k;
      double hs[N] = {};
      for (int e = 0; e < E_; ++e) {
        const int ei = ui * E_ + e;
        const double m = mask[ei];
        if (m == 0.0 && !gate_grads_) continue;
        const double* base = th + edge_off_[static_cast<std::size_t>(ei)];
        double* s = s_.data() + ei * N;
        for (int c = 0; c < N; ++c) s[c] = 0.0;
        for (int i = 0; i < fan; ++i) {
          const double w = base[i];
          const double* hi = hin + i * N;
          for (int c = 0; c < N; ++c) s[c] += w * hi[c];
        }
        s[0] += base[fan];
        const double* gam = base + rel_gamma_[li];
        const double* bet = base + rel_beta_[li];
        const double* A = base + rel_a_[li];
        const double* B = base + rel_b_[li];
        double* y = y_.data() + ei * N;
        for (int c = 0; c < N; ++c) y[c] = 0.0;
        for (int p = 0; p < P_; ++p) {
          const double a = alpha[ei * P_ + p];
          if (a == 0.0 && !gate_grads_) continue;
          double* f = fd_.data() + (static_cast<std::size_t>(ei) * P_ + p) * kDerivs;
          primitive_derivatives(ids_[static_cast<std::size_t>(p)], gam[p] * s[0] + bet[p],
                                Order + 1, f);
          double F[N];
          compose<Order, NDir, N>(gam[p], s, f, F);
          const double aA = a * A[p];
          for (int c = 0; c < N; ++c) y[c] += aA * F[c];
          y[0] += a * B[p];
        }
        for (int c = 0; c < N; ++c) hs[c] += m * y[c];
      }
      double* hsum = hsum_.data() + ui * N;
      const double z = zeta[ui];
      for (int c = 0; c < N; ++c) {
        hsum[c] = hs[c];
        hout[k * N + c] = z * hs[c];
      }
    }
  }

  const double* last = act_[static_cast<std::size_t>(L_)].data();
  const int group = width_.back() / cfg.n_outputs;
  for (int j = 0; j < cfg.n_outputs; ++j) {
    double* o = out_.data() + j * N;
    for (int c = 0; c < N; ++c) o[c] = 0.0;
    for (int k = 0; k < group; ++k) {
      const double* h = last + (j * group + k) * N;
      for (int c = 0; c < N; ++c) o[c] += h[c];
    }
  }
  for (double v : out_) {
    if (!std::isfinite(v)) throw NumericalError("non-finite network output in kernel forward");
  }
  return out_;
}

template <int Order, int NDir>
void NetworkKernel<Order, NDir>::backward(std::span<const double> out_adj,
                                          KernelGradients& grads) {
  constexpr int N = kCoeffs;
  const auto& cfg = net_.config();
  if (out_adj.size() != out_.size()) throw StateError("output adjoint has the wrong size");
  const double* th = net_.params().data();
  const double* alpha = gates_.alpha.data();
  const double* mask = gates_.mask.data();
  const double* zeta = gates_.zeta.data();
  double* gth = grads.theta.data();

  {
    double* top = adj_[static_cast<std::size_t>(L_)].data();
    const int group = width_.back() / cfg.n_outputs;
    for (int k = 0; k < width_.back(); ++k) {
      for (int c = 0; c < N; ++c) top[k * N + c] = out_adj[static_cast<std::size_t>((k / group) * N + c)];
    }
  }

  for (int l = L_ - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const int fan = fan_[li];
    const double* hin = act_[li].data();
    const double* hbar_all = adj_[li + 1].data();
    double* hin_bar = l > 0 ? adj_[li].data() : nullptr;
    if (hin_bar) std::fill(adj_[li].begin(), adj_[li].end(), 0.0);
    for (int k = 0; k < width_[li]; ++k) {
      const int ui = unit_base_[li] + k;
      const double* hb = hbar_all + k * N;
      bool any = false;
      for (int c = 0; c < N; ++c) any = any || hb[c] != 0.0;
      if (!any) continue;
      if (gate_grads_) grads.zeta[static_cast<std::size_t>(ui)] += dot<N>(hb, hsum_.data() + ui * N);
      double pre[N];
      for (int c = 0; c < N; ++c) pre[c] = zeta[ui] * hb[c];
      for (int e = 0; e < E_; ++e) {
        const int ei = ui * E_ + e;
        const double* y = y_.data() + ei * N;
        if (gate_grads_) grads.mask[static_cast<std::size_t>(ei)] += dot<N>(pre, y);
        const double m = mask[ei];
        if (m == 0.0) continue;
        const std::size_t off = edge_off_[static_cast<std::size_t>(ei)];
        const double* base = th + off;
        double* gbase = gth + off;
        const double* s = s_.data() + ei * N;
        const double* gam = base + rel_gamma_[li];
        const double* A = base + rel_a_[li];
        const double* B = base + rel_b_[li];
        double yb[N];
        for (int c = 0; c < N; ++c) yb[c] = m * pre[c];
        double sb[N] = {};
        for (int p = 0; p < P_; ++p) {
          const double a = alpha[ei * P_ + p];
          if (a == 0.0 && !gate_grads_) continue;
          const double* f = fd_.data() + (static_cast<std::size_t>(ei) * P_ + p) * kDerivs;
          double F[N];
          compose<Order, NDir, N>(gam[p], s, f, F);
          const double dF = dot<N>(yb, F);
          if (gate_grads_) grads.alpha[static_cast<std::size_t>(ei * P_ + p)] += A[p] * dF + B[p] * yb[0];
          if (a == 0.0) continue;
          gbase[rel_a_[li] + p] += a * dF;
          gbase[rel_b_[li] + p] += a * yb[0];
          double Fb[N];
          const double aA = a * A[p];
          for (int c = 0; c < N; ++c) Fb[c] = aA * yb[c];
          double zb[N];
          compose_adjoint<Order, NDir, N>(gam[p], s, f, Fb, zb);
          // z = gamma * s + beta: d/dgamma = <zb, s>, d/dbeta = zb0.
          gbase[rel_gamma_[li] + p] += dot<N>(zb, s);
          gbase[rel_beta_[li] + p] += zb[0];
          for (int c = 0; c < N; ++c) sb[c] += gam[p] * zb[c];
        }
        gbase[fan] += sb[0];
        for (int i = 0; i < fan; ++i) {
          gbase[i] += dot<N>(sb, hin + i * N);
          if (hin_bar) {
            const double w = base[i];
            for (int c = 0; c < N; ++c) hin_bar[i * N + c] += w * sb[c];
          }
        }
      }
    }
  }
}

template class NetworkKernel<0, 1>;
template class NetworkKernel<1, 1>;
template class NetworkKernel<2, 1>;
template class NetworkKernel<2, 2>;

}  // namespace symkan
