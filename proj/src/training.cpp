#include "symkan/training.hpp"

#include <cmath>
#include <algorithm>
#include <atomic>
#include <fstream>
#include <ostream>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include <json.hpp>

#include "symkan/checkpoint.hpp"
#include "symkan/errors.hpp"
#include "symkan/export.hpp"
#include "symkan/io.hpp"
#include "symkan/network_impl.hpp"
#include "symkan/optimize.hpp"

namespace symkan {

namespace fs = std::filesystem;

std::string metrics_header(const Problem& problem) {
  std::string h =
      "step,loss_total,loss_data,loss_pde,loss_bc,loss_ic,loss_ent,loss_nms,loss_unit,loss_bias,tau,"
      "lambda_sel,val_err";
  for (const auto& l : problem.learnables) h += "," + l.name;
  return h;
}

std::string metrics_line(const MetricsRow& r) {
  std::string s = std::to_string(r.step);
  for (double v : {r.loss.total, r.loss.data, r.loss.pde, r.loss.bc, r.loss.ic, r.loss.entropy, r.loss.nms,
                   r.loss.unit, r.loss.bias, r.tau, r.lambda_sel, r.val_err}) {
    s += "," + format_double(v);
  }
  for (double v : r.learnables) s += "," + format_double(v);
  return s;
}

namespace {

std::vector<double> predict(const Network& net, const PointSet& pts, Mode mode, double tau) {
  const std::span<const double> theta(net.params());
  GateState<double> gates;
  if (mode == Mode::Soft) gates = compute_gates<double>(net, theta, tau, {});
  std::vector<double> out;
  out.reserve(pts.size() * static_cast<std::size_t>(net.config().n_outputs));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto y = forward_generic<double, double>(net, theta, mode == Mode::Soft ? &gates : nullptr,
                                                   pts.point(i), mode);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double mean_edge_entropy(const Network& net, double tau) {
  const GateState<double> g = compute_gates<double>(net, std::span<const double>(net.params()), tau, {});
  double h = 0.0;
  for (double a : g.alpha) {
    if (a > 0.0) h -= a * std::log(a);
  }
  return h / static_cast<double>(net.config().total_edges());
}

}  // namespace

double validation_error(const Network& net, const Problem& problem, Mode mode, double tau) {
  const PointSet& v = problem.validation;
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto pred = predict(net, v, mode, tau);
  if (problem.per_output_error) return mean_column_relative_error(pred, v.y, v.n_targets);
  return relative_error(pred, v.y);
}

double refinement_objective(const Network& net, const Problem& problem, std::span<const double> learnables,
                            const LossWeights& w) {
  ObjectiveSettings s;
  s.mode = Mode::Hard;
  s.symbolic_terms = false;
  s.gradient = false;
  return evaluate_objective(net, problem, learnables, w, s).report.total;
}


void stage1_train(const Problem& problem, Network& net, std::vector<double>& learnables, const RunConfig& cfg,
                  RunRecord& record, const TrainHooks& hooks) {
  if (net.is_hardened()) throw StateError("stage 1 needs an unhardened network");
  const Schedules& sched = cfg.schedules;
  const std::size_t n_theta = net.params().size();
  const std::size_t n_lv = learnables.size();
  const std::size_t n_noise =
      static_cast<std::size_t>(net.config().total_edges()) * static_cast<std::size_t>(net.library().size());

  const ParamGroups groups = param_groups(net);
  std::vector<std::size_t> learnable_idx;
  for (std::size_t j = 0; j < n_lv; ++j) {
    if (problem.learnables[j].trainable) learnable_idx.push_back(n_theta + j);
  }

  std::seed_seq seq{static_cast<std::uint64_t>(cfg.train.seed), std::uint64_t{0x9e3779b97f4a7c15ULL}};
  std::mt19937_64 rng(seq);

  const std::size_t n_interior = problem.colloc.interior.size();
  const std::size_t batch = cfg.train.residual_batch;
  const bool minibatch = batch > 0 && batch < n_interior && problem.residual_order > 0;
  std::vector<std::size_t> subset;

  AdamState adam;
  adam.reset(n_theta + n_lv);
  std::vector<double> x(n_theta + n_lv);
  std::vector<double> g(n_theta + n_lv);

  ObjectiveSettings s;
  s.mode = Mode::Soft;
  s.edge_scoring = cfg.train.edge_scoring == "noise_free" ? EdgeScoring::NoiseFree : EdgeScoring::Sampled;
  const double entropy_floor = 0.05 * std::log(static_cast<double>(net.library().size()));

  for (int t = 1; t <= sched.T1; ++t) {
    const ScheduleValues sv = schedule_eval(sched, t - 1);
    std::vector<double> noise = sample_gumbel(rng, n_noise);
    if (cfg.train.gumbel_scale != 1.0) {
      for (double& n : noise) n *= cfg.train.gumbel_scale;
    }
    if (minibatch) {
      subset.resize(batch);
      std::uniform_int_distribution<std::size_t> pick(0, n_interior - 1);
      for (auto& i : subset) i = pick(rng);
    }
    s.tau = sv.tau;
    s.lambda_sel = sv.lambda_sel;
    s.noise = noise;
    s.residual_subset = subset;
    const Objective obj = evaluate_objective(net, problem, learnables, cfg.losses, s);
    if (!std::isfinite(obj.report.total) || !all_finite(obj.grad_theta) || !all_finite(obj.grad_learnables)) {
      throw NumericalError("non-finite loss at stage 1 step " + std::to_string(t));
    }

    std::copy(net.params().begin(), net.params().end(), x.begin());
    std::copy(learnables.begin(), learnables.end(), x.begin() + static_cast<std::ptrdiff_t>(n_theta));
    std::copy(obj.grad_theta.begin(), obj.grad_theta.end(), g.begin());
    std::copy(obj.grad_learnables.begin(), obj.grad_learnables.end(), g.begin() + static_cast<std::ptrdiff_t>(n_theta));
    const AdamGroup ag[] = {{groups.continuous, sv.lr},
                            {groups.gate, sv.lr_gate},
                            {learnable_idx, sv.lr * cfg.train.learnable_lr_mult}};
    adam_step(x, g, adam, ag);
    std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n_theta), net.params().begin());
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(n_theta), x.end(), learnables.begin());
    record.stage1_steps = t;

    const bool log = t == 1 || t % cfg.train.log_every == 0 || t == sched.T1;
    if (!log) continue;
    MetricsRow row;
    row.step = t;
    row.loss = total_loss(net, problem, learnables, cfg.losses, sched, t - 1);
    row.tau = sv.tau;
    row.lambda_sel = sv.lambda_sel;
    row.val_err = validation_error(net, problem, Mode::Soft, sv.tau);
    row.learnables = learnables;
    if (!std::isfinite(row.loss.total)) throw NumericalError("non-finite loss at stage 1 step " + std::to_string(t));
    record.history.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (hooks.on_checkpoint) hooks.on_checkpoint(net, learnables, t);

    if (cfg.train.harden_trigger == "entropy" && t < sched.T1 && mean_edge_entropy(net, sv.tau) <= entropy_floor) {
      record.entropy_triggered = true;
      break;
    }
  }
}

void stage2_refine(const Problem& problem, Network& net, std::vector<double>& learnables, const RunConfig& cfg,
                   RunRecord& record, const TrainHooks& hooks) {
  const int t_end = static_cast<int>(std::min<std::int64_t>(record.stage1_steps, cfg.schedules.T1));
  const ScheduleValues sv = schedule_eval(cfg.schedules, t_end);
  if (!net.is_hardened()) harden(net, sv.tau, cfg.train.eps_kill);
  record.hash_at_hardening = net.structure_hash();

  const std::size_t n_theta = net.params().size();
  const ParamGroups groups = param_groups(net);
  std::vector<std::size_t> lv_idx;
  for (std::size_t j = 0; j < learnables.size(); ++j) {
    if (problem.learnables[j].trainable) lv_idx.push_back(j);
  }
  const std::size_t n_c = groups.continuous.size();

  std::vector<double> x0(n_c + lv_idx.size());
  for (std::size_t i = 0; i < n_c; ++i) x0[i] = net.params()[groups.continuous[i]];
  for (std::size_t j = 0; j < lv_idx.size(); ++j) x0[n_c + j] = learnables[lv_idx[j]];

  Network work = net;
  std::vector<double> lv = learnables;
  ObjectiveSettings s;
  s.mode = Mode::Hard;
  s.symbolic_terms = false;
  const SmoothObjective f = [&](std::span<const double> x, std::span<double> g) {
    for (std::size_t i = 0; i < n_c; ++i) work.params()[groups.continuous[i]] = x[i];
    for (std::size_t j = 0; j < lv_idx.size(); ++j) lv[lv_idx[j]] = x[n_c + j];
    try {
      const Objective obj = evaluate_objective(work, problem, lv, cfg.losses, s);
      for (std::size_t i = 0; i < n_c; ++i) g[i] = obj.grad_theta[groups.continuous[i]];
      for (std::size_t j = 0; j < lv_idx.size(); ++j) g[n_c + j] = obj.grad_learnables[lv_idx[j]];
      return obj.report.total;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<double> g0(x0.size());
  record.objective_at_hardening = f(x0, g0);
  if (!std::isfinite(record.objective_at_hardening)) {
    throw NumericalError("non-finite objective after hardening");
  }
  record.objective_after_refine = record.objective_at_hardening;
  if (cfg.stage2.enabled && !x0.empty()) {
    const LbfgsResult r = lbfgs_minimize(f, x0, cfg.stage2.lbfgs);
    for (std::size_t i = 0; i < n_c; ++i) net.params()[groups.continuous[i]] = r.x[i];
    for (std::size_t j = 0; j < lv_idx.size(); ++j) learnables[lv_idx[j]] = r.x[n_c + j];
    record.objective_after_refine = r.value;
    record.stage2_iterations = r.iterations;
    record.stage2_reason = termination_name(r.reason);
  } else {
    record.stage2_reason = "disabled";
  }
  (void)n_theta;
  record.structure_hash = net.structure_hash();

  MetricsRow row;
  row.step = record.stage1_steps + record.stage2_iterations + 1;
  s.gradient = false;
  row.loss = evaluate_objective(net, problem, learnables, cfg.losses, s).report;
  row.tau = sv.tau;
  row.lambda_sel = sv.lambda_sel;
  row.val_err = validation_error(net, problem, Mode::Hard);
  row.learnables = learnables;
  record.history.push_back(row);
  if (hooks.on_row) hooks.on_row(row);
}

std::vector<std::string> write_exports(const Network& net, const fs::path& dir) {
  const std::vector<SymExpr> raw = extract(net);
  std::vector<std::string> texts;
  nlohmann::json doc;
  doc["library"] = net.config().library;
  auto& aff = doc["input_affine"] = nlohmann::json::array();
  for (const auto& a : net.config().input_affine) aff.push_back({{"scale", a.scale}, {"shift", a.shift}});
  auto& outs = doc["outputs"] = nlohmann::json::array();
  std::string txt;
  for (const auto& e : raw) {
    const SymExpr simple = simplify(e);
    texts.push_back(render_text(simple));
    txt += texts.back() + "\n";
    outs.push_back({{"text", texts.back()}, {"expr", render_structured(simple)}});
  }
  write_file_atomic(dir / "expression.txt", txt);
  write_file_atomic(dir / "expression.json", doc.dump(2) + "\n");
  write_file_atomic(dir / "primitives.md", render_report_markdown(report_selected_primitives(net)));
  return texts;
}

double write_predictions(const Network& net, const Problem& problem, const PointSet& grid, const fs::path& path) {
  const Mode mode = net.is_hardened() ? Mode::Hard : Mode::Soft;
  const auto pred = predict(net, grid, mode, 1.0);
  const int n_out = net.config().n_outputs;
  const bool has_exact = static_cast<bool>(problem.exact);
  std::vector<double> exact;
  std::string out;
  for (const auto& n : problem.input_names) out += n + ",";
  for (const auto& n : problem.output_names) out += "pred_" + n + ",";
  if (has_exact) {
    for (const auto& n : problem.output_names) out += "exact_" + n + ",";
  }
  out += "abs_err\n";
  std::vector<double> u(static_cast<std::size_t>(n_out));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (double v : grid.point(i)) out += format_double(v) + ",";
    const auto p = std::span<const double>(pred).subspan(i * static_cast<std::size_t>(n_out), static_cast<std::size_t>(n_out));
    for (double v : p) out += format_double(v) + ",";
    double err = std::numeric_limits<double>::quiet_NaN();
    if (has_exact) {
      problem.exact(grid.point(i), u);
      double sq = 0.0;
      for (int j = 0; j < n_out; ++j) {
        out += format_double(u[static_cast<std::size_t>(j)]) + ",";
        sq += (p[static_cast<std::size_t>(j)] - u[static_cast<std::size_t>(j)]) *
              (p[static_cast<std::size_t>(j)] - u[static_cast<std::size_t>(j)]);
        exact.push_back(u[static_cast<std::size_t>(j)]);
      }
      err = std::sqrt(sq);
    }
    out += format_double(err) + "\n";
  }
  write_file_atomic(path, out);
  if (!has_exact) return std::numeric_limits<double>::quiet_NaN();
  if (problem.per_output_error) return mean_column_relative_error(pred, exact, n_out);
  return relative_error(pred, exact);
}

namespace {

std::vector<LearnableScalar> with_values(const Problem& p, std::span<const double> values) {
  std::vector<LearnableScalar> out = p.learnables;
  for (std::size_t j = 0; j < out.size(); ++j) out[j].value = values[j];
  return out;
}

nlohmann::json summary_json(const RunRecord& r) {
  nlohmann::json j;
  j["val_err"] = r.val_err;
  j["stage1_steps"] = r.stage1_steps;
  j["entropy_triggered"] = r.entropy_triggered;
  j["objective_at_hardening"] = r.objective_at_hardening;
  j["objective_after_refine"] = r.objective_after_refine;
  j["stage2_iterations"] = r.stage2_iterations;
  j["stage2_termination"] = r.stage2_reason;
  j["structure_hash"] = r.structure_hash;
  j["expressions"] = r.expressions;
  auto& lv = j["learnables"] = nlohmann::json::array();
  for (const auto& l : r.learnables) {
    nlohmann::json e{{"name", l.name}, {"value", l.value}};
    if (!std::isnan(l.truth)) {
      e["truth"] = l.truth;
      e["rel_err"] = l.truth != 0.0 ? std::abs(l.value - l.truth) / std::abs(l.truth) : std::abs(l.value);
    }
    lv.push_back(std::move(e));
  }
  return j;
}

}  // namespace

RunRecord train_pipeline(const RunConfig& cfg, const fs::path& run_dir, const PipelineOptions& opt) {
  cfg.validate();
  // Everything that can fail on bad input happens before the directory exists.
  const Problem problem = build_problem(cfg);
  const NetworkConfig ncfg = build_network_config(cfg, problem);
  const std::string config_text = dump_config(cfg);

  if (fs::exists(run_dir) && !fs::is_empty(run_dir)) {
    if (!opt.force) throw ConfigError("run directory " + run_dir.string() + " exists; pass --force to overwrite");
    fs::remove_all(run_dir);
  }
  fs::create_directories(run_dir);
  const fs::path marker = run_dir / "INCOMPLETE";
  write_file_atomic(marker, "training did not finish\n");
  write_file_atomic(run_dir / "config.toml", config_text);

  RunRecord record;
  record.run_dir = run_dir;
  record.checkpoint = run_dir / "checkpoint.bin";

  std::ofstream metrics(run_dir / "metrics.csv", std::ios::trunc);
  if (!metrics) throw Error("cannot write metrics.csv in " + run_dir.string());
  metrics << metrics_header(problem) << "\n";

  Network net = init_network(ncfg);
  std::vector<double> learnables = problem.learnable_values();

  TrainHooks hooks;
  hooks.on_row = [&](const MetricsRow& row) { metrics << metrics_line(row) << "\n" << std::flush; };
  hooks.on_checkpoint = [&](const Network& n, std::span<const double> lv, std::int64_t step) {
    checkpoint_save(record.checkpoint, n, with_values(problem, lv), step, config_text);
  };

  stage1_train(problem, net, learnables, cfg, record, hooks);
  stage2_refine(problem, net, learnables, cfg, record, hooks);
  metrics.close();

  record.learnables = with_values(problem, learnables);
  checkpoint_save(record.checkpoint, net, record.learnables, record.history.back().step, config_text);

  record.expressions = write_exports(net, run_dir);
  record.expression_txt = run_dir / "expression.txt";
  record.expression_json = run_dir / "expression.json";
  record.primitives_md = run_dir / "primitives.md";
  record.predictions = run_dir / "predictions.csv";
  write_predictions(net, problem, problem.validation, record.predictions);
  record.val_err = validation_error(net, problem, Mode::Hard);

  write_file_atomic(run_dir / "summary.json", summary_json(record).dump(2) + "\n");
  fs::remove(marker);
  return record;
}

SweepTable run_sweep(const RunConfig& base, const std::string& axis, std::vector<double> values,
                     const fs::path& out, bool force, std::ostream* log, int jobs) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (axis != "N_tr" && axis != "S_r" && axis != "L" && axis != "K") {
    throw ConfigError("sweep axis '" + axis + "' not recognized; expected N_tr, S_r, L or K");
  }
  for (double v : values) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("sweep values must be positive integers");
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  base.validate();
  if (fs::exists(out / "sweep.csv") && !force) {
    throw ConfigError("sweep output " + (out / "sweep.csv").string() + " exists; pass --force to overwrite");
  }
  fs::create_directories(out);

  SweepTable table;
  table.axis = axis;
  const Problem probe = build_problem(base);
  std::vector<double> truths;
  for (const auto& l : probe.learnables) {
    if (!l.trainable) continue;
    table.learnable_names.push_back(l.name);
    truths.push_back(l.truth);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  table.rows.resize(values.size());
  std::mutex log_mutex;
  auto run_one = [&](std::size_t i) {
    RunConfig cfg = base;
    const auto v = static_cast<int>(values[i]);
    if (axis == "N_tr") cfg.problem.n_data = static_cast<std::size_t>(v);
    if (axis == "S_r") cfg.problem.n_colloc = static_cast<std::size_t>(v);
    if (axis == "L") cfg.network.units.assign(static_cast<std::size_t>(v), cfg.network.units.front());
    if (axis == "K") std::fill(cfg.network.units.begin(), cfg.network.units.end(), v);
    SweepRow& row = table.rows[i];
    row.value = v;
    std::string line;
    try {
      const RunRecord r = train_pipeline(cfg, out / ("run_" + axis + "_" + std::to_string(v)), {true});
      row.err_traj = r.val_err;
      std::size_t j = 0;
      for (const auto& l : r.learnables) {
        if (!l.trainable) continue;
        row.err_learnables.push_back(std::abs(l.value - truths[j]) / std::abs(truths[j]));
        ++j;
      }
      row.ok = true;
      line = axis + "=" + std::to_string(v) + " val_err=" + format_double(r.val_err);
    } catch (const std::exception& e) {
      line = axis + "=" + std::to_string(v) + " failed: " + e.what();
      row.err_traj = nan;
      row.err_learnables.assign(truths.size(), nan);
    }
    if (log) {
      std::lock_guard lock(log_mutex);
      *log << line << "\n";
    }
  };
  if (jobs <= 1) {
    for (std::size_t i = 0; i < values.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(jobs), values.size());
    for (std::size_t w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < values.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::string text = "value,err_traj";
  for (const auto& n : table.learnable_names) text += ",err_" + n;
  text += "\n";
  for (const auto& r : table.rows) {
    text += std::to_string(r.value) + "," + format_double(r.err_traj);
    for (double e : r.err_learnables) text += "," + format_double(e);
    text += "\n";
  }
  write_file_atomic(out / "sweep.csv", text);
  return table;
}

}  // namespace symkan
