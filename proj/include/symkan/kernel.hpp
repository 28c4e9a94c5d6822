#pragma once

// Batched forward and adjoint evaluation of a network on truncated Taylor
// coefficients along up to two seeded input directions. Per point the primal
// and all seeded directions share one pass. forward_generic over tape jets is
// the reference this is checked against.

#include <array>
#include <span>
#include <vector>

#include "symkan/network.hpp"

namespace symkan {

// Gate values as plain numbers, the view the kernel consumes.
struct KernelGates {
  std::vector<double> alpha;  // [edge * P + p]
  std::vector<double> mask;   // [edge]
  std::vector<double> zeta;   // [unit]
};

template <class T>
KernelGates kernel_gates(const GateState<T>& g) {
  KernelGates k;
  k.alpha.reserve(g.alpha.size());
  for (const auto& a : g.alpha) k.alpha.push_back(ad::value_of(a));
  for (const auto& m : g.mask) k.mask.push_back(ad::value_of(m));
  for (const auto& z : g.zeta) k.zeta.push_back(ad::value_of(z));
  return k;
}

// One-hot gates realizing the committed structure. Pruned units get an
// all-zero mask. Throws StateError if a unit is not hardened.
KernelGates kernel_gates_hard(const Network& net);

// Adjoints accumulated by NetworkKernel::backward.
struct KernelGradients {
  std::vector<double> theta;
  std::vector<double> alpha;
  std::vector<double> mask;
  std::vector<double> zeta;

  void reset(const Network& net);
};

template <int Order, int NDir>
class NetworkKernel {
  static_assert(Order >= 0 && Order <= 2);
  static_assert(NDir == 1 || NDir == 2);

 public:
  // Coefficients per activation: value, NDir first derivatives, NDir
  // second-order Taylor coefficients (half the second derivative).
  static constexpr int kCoeffs = 1 + (Order >= 1 ? NDir : 0) + (Order >= 2 ? NDir : 0);
  static constexpr int kDerivs = Order + 2;

  // seeds[d] is the input coordinate differentiated along direction d.
  // With gate_grads the forward pass also evaluates masked-off edges and
  // zero-weight primitives, since their values feed the gate adjoints.
  NetworkKernel(const Network& net, const KernelGates& gates, std::array<int, NDir> seeds,
                bool gate_grads);

  // Output coefficients laid out [output * kCoeffs + c].
  std::span<const double> forward(std::span<const double> x);

  // Adds the pullback of out_adj (layout of forward's result) taken at the
  // most recent forward point.
  void backward(std::span<const double> out_adj, KernelGradients& grads);

 private:
  const Network& net_;
  const KernelGates& gates_;
  std::array<int, NDir> seeds_;
  bool gate_grads_;

  int P_ = 0;
  int E_ = 0;
  int L_ = 0;
  std::vector<PrimitiveId> ids_;
  std::vector<int> fan_;
  std::vector<int> width_;
  std::vector<int> unit_base_;
  std::vector<std::size_t> edge_off_;
  std::vector<std::size_t> rel_gamma_, rel_beta_, rel_a_, rel_b_;

  std::vector<std::vector<double>> act_;  // layer inputs, act_[L] = last layer outputs
  std::vector<std::vector<double>> adj_;
  std::vector<double> s_;
  std::vector<double> y_;
  std::vector<double> fd_;
  std::vector<double> hsum_;
  std::vector<double> out_;
};

extern template class NetworkKernel<0, 1>;
extern template class NetworkKernel<1, 1>;
extern template class NetworkKernel<2, 1>;
extern template class NetworkKernel<2, 2>;

}  // namespace symkan
