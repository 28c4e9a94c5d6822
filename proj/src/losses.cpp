#include "symkan/losses.hpp"

#include <algorithm>
#include <array>

#include "symkan/kernel.hpp"

namespace symkan {

UnitPenalty parse_unit_penalty(const std::string& name) {
  if (name == "additive") return UnitPenalty::Additive;
  if (name == "budgeted") return UnitPenalty::Budgeted;
  throw ConfigError("unknown unit penalty '" + name + "' (expected additive or budgeted)");
}

const char* unit_penalty_name(UnitPenalty k) {
  return k == UnitPenalty::Additive ? "additive" : "budgeted";
}

void LossWeights::validate() const {
  for (double v : {lambda_data, lambda_r, lambda_b, lambda_0, lambda_ent, lambda_nms, lambda_unit,
                   lambda_bias}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  }
  if (unit_penalty == UnitPenalty::Budgeted && !(rho > 0.0 && rho < 1.0)) {
    throw ConfigError("rho must lie in (0, 1) for budgeted unit sparsity");
  }
}

void Schedules::validate() const {
  if (!(tau_end > 0.0) || !(tau_start >= tau_end)) {
    throw ConfigError("schedules need tau_start >= tau_end > 0");
  }
  if (T1 < 1) throw ConfigError("T1 must be >= 1");
  if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0)) throw ConfigError("ramp_fraction must lie in (0, 1]");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (!(gate_lr_mult >= 0.0)) throw ConfigError("gate_lr_mult must be nonnegative");
  if (!(lambda_sel_max >= 0.0)) throw ConfigError("lambda_sel_max must be nonnegative");
}

ScheduleValues schedule_eval(const Schedules& s, int t) {
  if (t < 0 || t > s.T1) throw DomainError("schedule step outside [0, T1]");
  const double frac = static_cast<double>(t) / s.T1;
  ScheduleValues v;
  v.tau = s.tau_start * std::pow(s.tau_end / s.tau_start, frac);
  v.lambda_sel = s.lambda_sel_max * std::min(1.0, frac / s.ramp_fraction);
  v.lr = s.lr0 * std::pow(s.lr_decay, frac);
  v.lr_gate = s.gate_lr_mult * v.lr;
  return v;
}

double bias_loss(const Network& net) {
  const auto& cfg = net.config();
  double acc = 0.0;
  for (int l = 0; l < cfg.layers(); ++l) {
    for (int k = 0; k < cfg.units[static_cast<std::size_t>(l)]; ++k) {
      for (int e = 0; e < cfg.edges; ++e) {
        for (double b : net.edge(l, k, e).B) acc += b * b;
      }
    }
  }
  return acc;
}

double data_loss(const Network& net, const PointSet& data, Mode mode, double tau) {
  if (data.empty()) throw ConfigError("data loss needs at least one sample");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto out = forward(net, data.point(i), tau, {}, mode);
    const auto y = data.target(i);
    for (std::size_t j = 0; j < out.size(); ++j) acc += (out[j] - y[j]) * (out[j] - y[j]);
  }
  return acc / static_cast<double>(data.size());
}

namespace {

bool has_residual(const Problem& p) { return p.residual_order > 0 && !p.colloc.interior.empty(); }

// Mean squared mismatch over a value-only point set; adds weight-scaled
// pullbacks into grads.
double value_term(NetworkKernel<0, 1>& kern, const PointSet& ps, double weight, bool gradient,
                  KernelGradients& grads) {
  const auto n = static_cast<double>(ps.size());
  double acc = 0.0;
  std::vector<double> adj;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto out = kern.forward(ps.point(i));
    const auto y = ps.target(i);
    adj.assign(out.size(), 0.0);
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double d = out[j] - y[j];
      acc += d * d;
      adj[j] = 2.0 * d * weight / n;
    }
    if (gradient && weight != 0.0) kern.backward(adj, grads);
  }
  return acc / n;
}

template <int Order, int NDir>
double residual_term_impl(const Network& net, const KernelGates& gates, bool gate_grads,
                          const Problem& p, std::span<const double> learnables,
                          std::span<const std::size_t> subset, double weight, bool gradient,
                          KernelGradients& grads, std::vector<double>& learn_grads) {
  constexpr int N = NetworkKernel<Order, NDir>::kCoeffs;
  std::array<int, NDir> seeds{};
  for (int d = 0; d < NDir; ++d) seeds[static_cast<std::size_t>(d)] = p.derivative_coords[static_cast<std::size_t>(d)];
  NetworkKernel<Order, NDir> kern(net, gates, seeds, gate_grads);
  const PointSet& pts = p.colloc.interior;
  const std::size_t count = subset.empty() ? pts.size() : subset.size();
  const int n_out = p.n_outputs;
  const auto n_learn = learnables.size();

  ad::Tape tape;
  FieldDerivs<ad::Var> fd;
  fd.resize(n_out, NDir);
  std::vector<ad::Var> lv(n_learn);
  std::vector<ad::Var> r(static_cast<std::size_t>(p.residual_size));
  const std::size_t n_leaves = static_cast<std::size_t>(n_out) * (1 + (Order >= 1 ? NDir : 0) + (Order >= 2 ? NDir : 0)) + n_learn;
  std::vector<double> leaf_grads(n_leaves), scratch;
  std::vector<double> adj(static_cast<std::size_t>(n_out * N));
  const double scale = weight / static_cast<double>(count);

  double acc = 0.0;
  for (std::size_t q = 0; q < count; ++q) {
    const std::size_t i = subset.empty() ? q : subset[q];
    const auto x = pts.point(i);
    const auto out = kern.forward(x);
    tape.clear();
    for (int j = 0; j < n_out; ++j) fd.u[static_cast<std::size_t>(j)] = tape.variable(out[static_cast<std::size_t>(j * N)]);
    if constexpr (Order >= 1) {
      for (int j = 0; j < n_out; ++j) {
        for (int d = 0; d < NDir; ++d) {
          fd.du[static_cast<std::size_t>(j * NDir + d)] = tape.variable(out[static_cast<std::size_t>(j * N + 1 + d)]);
        }
      }
    }
    if constexpr (Order >= 2) {
      for (int j = 0; j < n_out; ++j) {
        for (int d = 0; d < NDir; ++d) {
          fd.d2u[static_cast<std::size_t>(j * NDir + d)] =
              tape.variable(2.0 * out[static_cast<std::size_t>(j * N + 1 + NDir + d)]);
        }
      }
    }
    for (std::size_t k = 0; k < n_learn; ++k) lv[k] = tape.variable(learnables[k]);
    p.residual(fd, lv, x, r);
    ad::Var root(0.0);
    for (const auto& ri : r) root = root + ri * ri;
    acc += root.value;
    if (!gradient || weight == 0.0) continue;

    std::fill(leaf_grads.begin(), leaf_grads.end(), 0.0);
    ad::accumulate_gradient(tape, root, scale, leaf_grads, scratch);
    std::size_t li = 0;
    for (int j = 0; j < n_out; ++j) adj[static_cast<std::size_t>(j * N)] = leaf_grads[li++];
    if constexpr (Order >= 1) {
      for (int j = 0; j < n_out; ++j) {
        for (int d = 0; d < NDir; ++d) adj[static_cast<std::size_t>(j * N + 1 + d)] = leaf_grads[li++];
      }
    }
    if constexpr (Order >= 2) {
      for (int j = 0; j < n_out; ++j) {
        for (int d = 0; d < NDir; ++d) {
          // The leaf is 2 c2, so the c2 adjoint doubles.
          adj[static_cast<std::size_t>(j * N + 1 + NDir + d)] = 2.0 * leaf_grads[li++];
        }
      }
    }
    for (std::size_t k = 0; k < n_learn; ++k) learn_grads[k] += leaf_grads[li++];
    kern.backward(adj, grads);
  }
  return acc / static_cast<double>(count);
}

double residual_term(const Network& net, const KernelGates& gates, bool gate_grads, const Problem& p,
                     std::span<const double> learnables, std::span<const std::size_t> subset,
                     double weight, bool gradient, KernelGradients& grads,
                     std::vector<double>& learn_grads) {
  const auto dirs = p.derivative_coords.size();
  if (p.residual_order > 2) throw ConfigError("residual derivative order above 2 is unsupported");
  if (p.residual_order == 1 && dirs == 1) {
    return residual_term_impl<1, 1>(net, gates, gate_grads, p, learnables, subset, weight, gradient,
                                    grads, learn_grads);
  }
  if (p.residual_order == 2 && dirs == 1) {
    return residual_term_impl<2, 1>(net, gates, gate_grads, p, learnables, subset, weight, gradient,
                                    grads, learn_grads);
  }
  if (p.residual_order == 2 && dirs == 2) {
    return residual_term_impl<2, 2>(net, gates, gate_grads, p, learnables, subset, weight, gradient,
                                    grads, learn_grads);
  }
  throw ConfigError("unsupported residual shape: order " + std::to_string(p.residual_order) +
                    " with " + std::to_string(dirs) + " directions");
}

void check_learnables(const Problem& p, std::span<const double> learnables) {
  if (learnables.size() != p.learnables.size()) {
    throw ConfigError("expected " + std::to_string(p.learnables.size()) + " learnable values, got " +
                      std::to_string(learnables.size()));
  }
}

std::vector<int> layer_widths(const Network& net) { return net.config().units; }

// Regularizers shared by both routes, on gate states already on `tape`.
template <class GS>
void add_symbolic_terms(const Network& net, const GS& noise_free, const LossWeights& w,
                        const ObjectiveSettings& s, LossReport& rep, ad::Var& J) {
  const int P = net.layout().library_size();
  const int E = net.config().edges;
  const std::span<const ad::Var> alpha(noise_free.alpha);
  const ad::Var H = entropy_loss<ad::Var>(alpha);
  const ad::Var nms = nms_loss<ad::Var>(alpha, P, E);
  rep.entropy = H.value;
  rep.nms = nms.value;
  rep.symbolic_active = true;
  J = J + ad::Var(s.lambda_sel * w.lambda_ent) * H + ad::Var(s.lambda_sel * w.lambda_nms) * nms;
  if (net.config().unit_gates) {
    const auto widths = layer_widths(net);
    const ad::Var U = unit_loss<ad::Var>(std::span<const ad::Var>(noise_free.zeta), widths,
                                         w.unit_penalty, w.rho);
    rep.unit = U.value;
    rep.unit_active = true;
    J = J + ad::Var(w.lambda_unit) * U;
  }
}

void finish_total(const LossWeights& w, const ObjectiveSettings& s, LossReport& rep) {
  rep.total = w.lambda_data * rep.data + w.lambda_r * rep.pde + w.lambda_b * rep.bc +
              w.lambda_0 * rep.ic;
  if (rep.symbolic_active) {
    rep.total += s.lambda_sel * (w.lambda_ent * rep.entropy + w.lambda_nms * rep.nms);
    rep.total += w.lambda_unit * rep.unit;
    rep.total += w.lambda_bias * rep.bias;
  }
}

}  // namespace

Objective evaluate_objective(const Network& net, const Problem& problem,
                             std::span<const double> learnables, const LossWeights& w,
                             const ObjectiveSettings& s) {
  check_learnables(problem, learnables);
  const auto& lay = net.layout();
  const bool soft = s.mode == Mode::Soft;
  const bool symbolic = soft && s.symbolic_terms;
  Objective obj;
  LossReport& rep = obj.report;

  // Gate graph: logits and unit-gate logits are the only leaves.
  ad::Tape gtape;
  std::vector<ad::Var> theta_v;
  std::vector<std::size_t> leaf_param;
  GateState<ad::Var> sampled;
  KernelGates kg;
  if (soft) {
    const ParamGroups groups = param_groups(net);
    theta_v.reserve(lay.size());
    for (double v : net.params()) theta_v.emplace_back(v);
    for (std::size_t idx : groups.gate) {
      theta_v[idx] = gtape.variable(net.params()[idx]);
      leaf_param.push_back(idx);
    }
    sampled = compute_gates<ad::Var>(net, theta_v, s.tau, s.noise, s.edge_scoring);
    kg = kernel_gates(sampled);
  } else {
    kg = kernel_gates_hard(net);
  }

  const bool gate_grads = soft && s.gradient;
  KernelGradients grads;
  grads.reset(net);
  obj.grad_learnables.assign(learnables.size(), 0.0);

  if (!problem.data.empty()) {
    NetworkKernel<0, 1> kern(net, kg, {0}, gate_grads);
    rep.data = value_term(kern, problem.data, w.lambda_data, s.gradient, grads);
    rep.data_active = true;
  }
  if (!problem.colloc.boundary.empty() || !problem.colloc.initial.empty()) {
    NetworkKernel<0, 1> kern(net, kg, {0}, gate_grads);
    if (!problem.colloc.boundary.empty()) {
      rep.bc = value_term(kern, problem.colloc.boundary, w.lambda_b, s.gradient, grads);
      rep.bc_active = true;
    }
    if (!problem.colloc.initial.empty()) {
      rep.ic = value_term(kern, problem.colloc.initial, w.lambda_0, s.gradient, grads);
      rep.ic_active = true;
    }
  }
  if (has_residual(problem)) {
    rep.pde = residual_term(net, kg, gate_grads, problem, learnables, s.residual_subset, w.lambda_r,
                            s.gradient, grads, obj.grad_learnables);
    rep.pde_active = true;
  }

  if (symbolic) {
    rep.bias = bias_loss(net);
  }

  if (soft && (s.gradient || symbolic)) {
    ad::Var J(0.0);
    if (s.gradient) {
      for (std::size_t i = 0; i < sampled.alpha.size(); ++i) {
        if (grads.alpha[i] != 0.0) J = J + ad::Var(grads.alpha[i]) * sampled.alpha[i];
      }
      for (std::size_t i = 0; i < sampled.mask.size(); ++i) {
        if (grads.mask[i] != 0.0) J = J + ad::Var(grads.mask[i]) * sampled.mask[i];
      }
      if (net.config().unit_gates) {
        for (std::size_t i = 0; i < sampled.zeta.size(); ++i) {
          if (grads.zeta[i] != 0.0) J = J + ad::Var(grads.zeta[i]) * sampled.zeta[i];
        }
      }
    }
    if (symbolic) {
      if (s.noise.empty()) {
        add_symbolic_terms(net, sampled, w, s, rep, J);
      } else {
        const GateState<ad::Var> clean = compute_gates<ad::Var>(net, theta_v, s.tau);
        add_symbolic_terms(net, clean, w, s, rep, J);
      }
    }
    if (s.gradient && !J.is_constant()) {
      std::vector<double> leaf_grads(gtape.leaf_count(), 0.0);
      std::vector<double> scratch;
      ad::accumulate_gradient(gtape, J, 1.0, leaf_grads, scratch);
      for (std::size_t i = 0; i < leaf_param.size(); ++i) grads.theta[leaf_param[i]] += leaf_grads[i];
    }
  }

  if (s.gradient) {
    if (symbolic && w.lambda_bias != 0.0) {
      const auto& cfg = net.config();
      const auto P = static_cast<std::size_t>(lay.library_size());
      for (int l = 0; l < cfg.layers(); ++l) {
        for (int k = 0; k < cfg.units[static_cast<std::size_t>(l)]; ++k) {
          for (int e = 0; e < cfg.edges; ++e) {
            const std::size_t off = lay.edge_offset(l, k, e) + lay.bias_off(l);
            for (std::size_t p = 0; p < P; ++p) {
              grads.theta[off + p] += 2.0 * w.lambda_bias * net.params()[off + p];
            }
          }
        }
      }
    }
    for (std::size_t k = 0; k < learnables.size(); ++k) {
      if (!problem.learnables[k].trainable) obj.grad_learnables[k] = 0.0;
    }
    obj.grad_theta = std::move(grads.theta);
  }
  finish_total(w, s, rep);
  return obj;
}

Objective evaluate_objective_tape(const Network& net, const Problem& problem,
                                  std::span<const double> learnables, const LossWeights& w,
                                  const ObjectiveSettings& s) {
  check_learnables(problem, learnables);
  const bool soft = s.mode == Mode::Soft;
  const bool symbolic = soft && s.symbolic_terms;
  ad::Tape tape;
  std::vector<ad::Var> theta;
  theta.reserve(net.params().size());
  for (double v : net.params()) theta.push_back(tape.variable(v));
  std::vector<ad::Var> lv;
  for (double v : learnables) lv.push_back(tape.variable(v));
  const std::span<const ad::Var> th(theta);

  GateState<ad::Var> gates;
  if (soft) gates = compute_gates<ad::Var>(net, th, s.tau, s.noise, s.edge_scoring);
  const GateState<ad::Var>* gp = soft ? &gates : nullptr;

  Objective obj;
  LossReport& rep = obj.report;
  ad::Var J(0.0);

  auto value_set = [&](const PointSet& ps, double weight, double& term) {
    ad::Var acc(0.0);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      std::vector<ad::Var> in(ps.point(i).begin(), ps.point(i).end());
      const auto out = forward_generic<ad::Var, ad::Var>(net, th, gp, in, s.mode);
      const auto y = ps.target(i);
      for (std::size_t j = 0; j < out.size(); ++j) {
        const ad::Var d = out[j] - ad::Var(y[j]);
        acc = acc + d * d;
      }
    }
    acc = acc * ad::Var(1.0 / static_cast<double>(ps.size()));
    term = acc.value;
    J = J + ad::Var(weight) * acc;
  };

  if (!problem.data.empty()) {
    value_set(problem.data, w.lambda_data, rep.data);
    rep.data_active = true;
  }
  if (!problem.colloc.boundary.empty()) {
    value_set(problem.colloc.boundary, w.lambda_b, rep.bc);
    rep.bc_active = true;
  }
  if (!problem.colloc.initial.empty()) {
    value_set(problem.colloc.initial, w.lambda_0, rep.ic);
    rep.ic_active = true;
  }
  if (has_residual(problem)) {
    if (problem.residual_order > 2) throw ConfigError("residual derivative order above 2 is unsupported");
    const PointSet& pts = problem.colloc.interior;
    const std::size_t count = s.residual_subset.empty() ? pts.size() : s.residual_subset.size();
    const int dirs = static_cast<int>(problem.derivative_coords.size());
    FieldDerivs<ad::Var> fd;
    fd.resize(problem.n_outputs, dirs);
    std::vector<ad::Var> r(static_cast<std::size_t>(problem.residual_size));
    ad::Var acc(0.0);
    for (std::size_t q = 0; q < count; ++q) {
      const std::size_t i = s.residual_subset.empty() ? q : s.residual_subset[q];
      const auto x = pts.point(i);
      for (int d = 0; d < dirs; ++d) {
        std::vector<ad::Jet3<ad::Var>> in;
        for (std::size_t c = 0; c < x.size(); ++c) {
          in.push_back(ad::jet_seed(ad::Var(x[c]),
                                    static_cast<int>(c) == problem.derivative_coords[static_cast<std::size_t>(d)]));
        }
        const auto out = forward_generic<ad::Var, ad::Jet3<ad::Var>>(net, th, gp, in, s.mode);
        for (int j = 0; j < problem.n_outputs; ++j) {
          const auto& o = out[static_cast<std::size_t>(j)];
          fd.u[static_cast<std::size_t>(j)] = o.value();
          fd.du[static_cast<std::size_t>(j * dirs + d)] = o.first();
          fd.d2u[static_cast<std::size_t>(j * dirs + d)] = o.second();
        }
      }
      problem.residual(fd, lv, x, r);
      for (const auto& ri : r) acc = acc + ri * ri;
    }
    acc = acc * ad::Var(1.0 / static_cast<double>(count));
    rep.pde = acc.value;
    rep.pde_active = true;
    J = J + ad::Var(w.lambda_r) * acc;
  }
  if (symbolic) {
    if (s.noise.empty()) {
      add_symbolic_terms(net, gates, w, s, rep, J);
    } else {
      const GateState<ad::Var> clean = compute_gates<ad::Var>(net, th, s.tau);
      add_symbolic_terms(net, clean, w, s, rep, J);
    }
    const auto& cfg = net.config();
    const auto& lay = net.layout();
    ad::Var bias(0.0);
    for (int l = 0; l < cfg.layers(); ++l) {
      for (int k = 0; k < cfg.units[static_cast<std::size_t>(l)]; ++k) {
        for (int e = 0; e < cfg.edges; ++e) {
          const std::size_t off = lay.edge_offset(l, k, e) + lay.bias_off(l);
          for (int p = 0; p < lay.library_size(); ++p) {
            bias = bias + theta[off + static_cast<std::size_t>(p)] * theta[off + static_cast<std::size_t>(p)];
          }
        }
      }
    }
    rep.bias = bias.value;
    J = J + ad::Var(w.lambda_bias) * bias;
  }
  finish_total(w, s, rep);

  if (s.gradient) {
    const ad::GradientMap g = ad::backward(tape, J);
    obj.grad_theta.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) obj.grad_theta[i] = g[theta[i]];
    obj.grad_learnables.resize(lv.size());
    for (std::size_t k = 0; k < lv.size(); ++k) {
      obj.grad_learnables[k] = problem.learnables[k].trainable ? g[lv[k]] : 0.0;
    }
  }
  return obj;
}

PhysicsLosses physics_losses(const Network& net, const Problem& problem,
                             std::span<const double> learnables, Mode mode, double tau) {
  ObjectiveSettings s;
  s.mode = mode;
  s.tau = tau;
  s.symbolic_terms = false;
  s.gradient = false;
  const Objective o = evaluate_objective(net, problem, learnables, LossWeights{}, s);
  PhysicsLosses out;
  out.pde = o.report.pde;
  out.bc = o.report.bc;
  out.ic = o.report.ic;
  out.pde_active = o.report.pde_active;
  out.bc_active = o.report.bc_active;
  out.ic_active = o.report.ic_active;
  return out;
}

LossReport total_loss(const Network& net, const Problem& problem, std::span<const double> learnables,
                      const LossWeights& w, const Schedules& sched, int t) {
  const ScheduleValues v = schedule_eval(sched, t);
  ObjectiveSettings s;
  s.mode = Mode::Soft;
  s.tau = v.tau;
  s.lambda_sel = v.lambda_sel;
  s.gradient = false;
  return evaluate_objective(net, problem, learnables, w, s).report;
}

}  // namespace symkan
