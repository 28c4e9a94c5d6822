#pragma once

// Loss terms, annealing schedules and the assembled training objective.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "symkan/network.hpp"
#include "symkan/problems.hpp"

namespace symkan {

enum class UnitPenalty { Additive, Budgeted };

UnitPenalty parse_unit_penalty(const std::string& name);
const char* unit_penalty_name(UnitPenalty k);

struct LossWeights {
  double lambda_data = 1.0;
  double lambda_r = 1.0;
  double lambda_b = 1.0;
  double lambda_0 = 1.0;
  double lambda_ent = 1e-2;
  double lambda_nms = 1e-2;
  double lambda_unit = 1e-2;
  double lambda_bias = 1e-4;
  double rho = 0.5;
  UnitPenalty unit_penalty = UnitPenalty::Budgeted;

  void validate() const;
};

struct Schedules {
  double tau_start = 5.0;
  double tau_end = 0.1;
  int T1 = 1000;
  double lambda_sel_max = 1.0;
  double ramp_fraction = 0.5;
  double lr0 = 1e-2;
  double lr_decay = 0.1;
  double gate_lr_mult = 0.1;

  void validate() const;
};

struct ScheduleValues {
  double tau = 0.0;
  double lambda_sel = 0.0;
  double lr = 0.0;
  double lr_gate = 0.0;
};

ScheduleValues schedule_eval(const Schedules& s, int t);

struct LossReport {
  double data = 0.0;
  double pde = 0.0;
  double bc = 0.0;
  double ic = 0.0;
  double entropy = 0.0;
  double nms = 0.0;
  double unit = 0.0;
  double bias = 0.0;
  double total = 0.0;
  bool data_active = false;
  bool pde_active = false;
  bool bc_active = false;
  bool ic_active = false;
  bool symbolic_active = false;
  bool unit_active = false;
};

// ---- Individual terms --------------------------------------------------------

// Sum over edges of the Shannon entropy of alpha, with 0 log 0 = 0. Edge
// boundaries do not matter since the sum runs over every component.
template <class T>
T entropy_loss(std::span<const T> alpha) {
  T acc(0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (ad::value_of(alpha[i]) <= 0.0) continue;
    using std::log;
    acc = acc - alpha[i] * log(alpha[i]);
  }
  return acc;
}

// Sum over units and edge pairs e1 < e2 of <alpha_e1, alpha_e2>.
template <class T>
T nms_loss(std::span<const T> alpha, int P, int E) {
  T acc(0.0);
  const auto stride = static_cast<std::size_t>(P);
  const std::size_t units = alpha.size() / (stride * static_cast<std::size_t>(E));
  for (std::size_t u = 0; u < units; ++u) {
    const std::size_t base = u * static_cast<std::size_t>(E) * stride;
    for (int e1 = 0; e1 < E; ++e1) {
      for (int e2 = e1 + 1; e2 < E; ++e2) {
        for (std::size_t p = 0; p < stride; ++p) {
          acc = acc + alpha[base + static_cast<std::size_t>(e1) * stride + p] *
                          alpha[base + static_cast<std::size_t>(e2) * stride + p];
        }
      }
    }
  }
  return acc;
}

// Additive: sum of all zeta. Budgeted: sum over layers of (mean zeta - rho)^2.
// `widths` gives the units per layer in order.
template <class T>
T unit_loss(std::span<const T> zeta, std::span<const int> widths, UnitPenalty kind, double rho) {
  if (kind == UnitPenalty::Budgeted && !(rho > 0.0 && rho < 1.0)) {
    throw ConfigError("budgeted unit sparsity needs rho in (0, 1)");
  }
  T acc(0.0);
  std::size_t pos = 0;
  for (int K : widths) {
    T layer(0.0);
    for (int k = 0; k < K; ++k) layer = layer + zeta[pos++];
    if (kind == UnitPenalty::Additive) {
      acc = acc + layer;
    } else {
      const T dev = layer * T(1.0 / K) - T(rho);
      acc = acc + dev * dev;
    }
  }
  return acc;
}

// Sum of squares of every primitive output bias B.
double bias_loss(const Network& net);

// Mean over samples of the squared output error summed over coordinates.
double data_loss(const Network& net, const PointSet& data, Mode mode, double tau = 1.0);

struct PhysicsLosses {
  double pde = 0.0;
  double bc = 0.0;
  double ic = 0.0;
  bool pde_active = false;
  bool bc_active = false;
  bool ic_active = false;
};

PhysicsLosses physics_losses(const Network& net, const Problem& problem,
                             std::span<const double> learnables, Mode mode, double tau = 1.0);

// ---- Objective -----------------------------------------------------------------

struct ObjectiveSettings {
  Mode mode = Mode::Soft;
  double tau = 1.0;
  double lambda_sel = 0.0;
  // Gumbel samples, one per primitive logit; empty means noise-free.
  std::span<const double> noise;
  EdgeScoring edge_scoring = EdgeScoring::Sampled;
  // Data/physics only (the refinement objective): skips the gate graph.
  bool symbolic_terms = true;
  bool gradient = true;
  // Interior collocation indices to use; empty means all. The PDE mean is
  // taken over the subset.
  std::span<const std::size_t> residual_subset;
};

struct Objective {
  LossReport report;
  std::vector<double> grad_theta;
  std::vector<double> grad_learnables;  // zero for non-trainable scalars
};

// The training objective with its gradient, using the batch adjoint kernel.
Objective evaluate_objective(const Network& net, const Problem& problem,
                             std::span<const double> learnables, const LossWeights& w,
                             const ObjectiveSettings& s);

// Same objective recorded on a single tape through forward_generic with
// tape-valued jets. Slow; the reference route for tests.
Objective evaluate_objective_tape(const Network& net, const Problem& problem,
                                  std::span<const double> learnables, const LossWeights& w,
                                  const ObjectiveSettings& s);

// Noise-free report of the objective at step t of the schedules.
LossReport total_loss(const Network& net, const Problem& problem,
                      std::span<const double> learnables, const LossWeights& w,
                      const Schedules& sched, int t);

}  // namespace symkan
