// symkan command-line driver. Exit codes: 0 success, 1 runtime error,
// 2 configuration/load error, 3 numerical abort.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "symkan/checkpoint.hpp"
#include "symkan/config.hpp"
#include "symkan/errors.hpp"
#include "symkan/export.hpp"
#include "symkan/io.hpp"
#include "symkan/training.hpp"

namespace fs = std::filesystem;
using namespace symkan;

namespace {

void apply_seed(RunConfig& cfg, std::int64_t flag_seed) {
  if (flag_seed >= 0) {
    cfg.train.seed = flag_seed;
  } else if (const char* env = std::getenv("SYMKAN_SEED"); env && *env) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (*end != '\0' || v < 0) throw ConfigError(std::string("SYMKAN_SEED must be a nonnegative integer, got '") + env + "'");
    cfg.train.seed = v;
  }
}

std::string learnable_summary(const std::vector<LearnableScalar>& lv) {
  std::string s;
  for (const auto& l : lv) {
    if (!s.empty()) s += " ";
    s += l.name + "=" + format_double(l.value);
  }
  return s;
}

// ---- datagen ---------------------------------------------------------------

int cmd_datagen(const std::string& problem_name, const std::string& config_path, const fs::path& out,
                std::int64_t seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  cfg.problem.name = problem_name;
  cfg.problem.data_file.clear();
  apply_seed(cfg, seed);
  cfg.validate();
  std::string text;
  if (problem_name == "vdp") {
    VdpOptions o;
    o.horizon = cfg.problem.horizon;
    o.truth = {cfg.problem.a, cfg.problem.mu, cfg.problem.c, cfg.problem.power,
               cfg.problem.power_variant == "signed" ? PowerVariant::Signed : PowerVariant::Abs};
    o.x0 = cfg.problem.x0;
    o.rk45.rtol = cfg.problem.rtol;
    o.rk45.atol = cfg.problem.atol;
    o.rk45.dt_out = cfg.problem.dt;
    const Trajectory tr = vdp_trajectory(o);
    text = "t,x,y\n";
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const auto s = tr.state(i);
      text += format_double(tr.times[i]) + "," + format_double(s[0]) + "," + format_double(s[1]) + "\n";
    }
  } else {
    const Problem p = build_problem(cfg);
    const PointSet& d = p.data.empty() ? p.colloc.boundary : p.data;
    for (const auto& n : p.input_names) text += n + ",";
    for (std::size_t j = 0; j < p.output_names.size(); ++j) {
      text += p.output_names[j] + (j + 1 < p.output_names.size() ? "," : "\n");
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (double v : d.point(i)) text += format_double(v) + ",";
      const auto y = d.target(i);
      for (std::size_t j = 0; j < y.size(); ++j) text += format_double(y[j]) + (j + 1 < y.size() ? "," : "\n");
    }
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, text);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const std::string& config_path, const fs::path& out, std::int64_t seed, bool force) {
  RunConfig cfg = load_config(config_path);
  apply_seed(cfg, seed);
  cfg.validate();
  const RunRecord r = train_pipeline(cfg, out, {force});
  std::cout << "val_err=" << format_double(r.val_err);
  if (!r.learnables.empty()) std::cout << " " << learnable_summary(r.learnables);
  std::cout << " expression=" << r.expression_txt.string() << "\n";
  return 0;
}

// ---- evaluate --------------------------------------------------------------

// "a:b:n" per coordinate, comma separated; tensor grid over all coordinates.
PointSet parse_grid(const std::string& spec, int dim) {
  std::vector<std::array<double, 3>> axes;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::array<double, 3> a{};
    char c1 = 0, c2 = 0;
    std::istringstream is(item);
    if (!(is >> a[0] >> c1 >> a[1] >> c2 >> a[2]) || c1 != ':' || c2 != ':' || !is.eof() || a[2] < 1 ||
        a[2] != std::floor(a[2])) {
      throw ConfigError("grid spec '" + item + "' must look like a:b:n");
    }
    axes.push_back(a);
  }
  if (static_cast<int>(axes.size()) != dim) {
    throw ConfigError("grid spec needs " + std::to_string(dim) + " comma-separated axes");
  }
  PointSet g;
  g.dim = dim;
  std::size_t total = 1;
  for (const auto& a : axes) total *= static_cast<std::size_t>(a[2]);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    std::vector<double> pt(static_cast<std::size_t>(dim));
    for (int d = dim - 1; d >= 0; --d) {
      const auto& a = axes[static_cast<std::size_t>(d)];
      const auto n = static_cast<std::size_t>(a[2]);
      const std::size_t i = rem % n;
      rem /= n;
      pt[static_cast<std::size_t>(d)] = n == 1 ? a[0] : a[0] + (a[1] - a[0]) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    g.x.insert(g.x.end(), pt.begin(), pt.end());
  }
  return g;
}

Problem problem_for(const CheckpointState& st) {
  if (st.config_text.empty()) throw LoadError("checkpoint carries no run configuration");
  return build_problem(parse_config(st.config_text, "checkpoint config"));
}

int cmd_evaluate(const fs::path& ckpt, const std::string& grid, const fs::path& out) {
  const CheckpointState st = checkpoint_load(ckpt);
  const Problem problem = problem_for(st);
  const PointSet pts = grid.empty() ? problem.validation : parse_grid(grid, st.net.config().n_inputs);
  const fs::path target = out.empty() ? ckpt.parent_path() / "predictions.csv" : out;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const double err = write_predictions(st.net, problem, pts, target);
  std::cout << "points=" << pts.size() << " rel_err=" << format_double(err) << " predictions=" << target.string()
            << "\n";
  return 0;
}

// ---- export / report -------------------------------------------------------

void require_hardened(const CheckpointState& st) {
  if (!st.net.is_hardened()) {
    throw StateError("checkpoint is not hardened; run training through stage 2 (hardening and refinement) first");
  }
}

int cmd_export(const fs::path& ckpt, const fs::path& out) {
  const CheckpointState st = checkpoint_load(ckpt);
  require_hardened(st);
  const fs::path dir = out.empty() ? ckpt.parent_path() : out;
  fs::create_directories(dir.empty() ? fs::path(".") : dir);
  for (const auto& t : write_exports(st.net, dir)) std::cout << t << "\n";
  return 0;
}

int cmd_report(const fs::path& ckpt, const fs::path& out) {
  const CheckpointState st = checkpoint_load(ckpt);
  require_hardened(st);
  const std::string md = render_report_markdown(report_selected_primitives(st.net));
  const fs::path dir = out.empty() ? ckpt.parent_path() : out;
  if (!dir.empty()) fs::create_directories(dir);
  write_file_atomic(dir / "primitives.md", md);
  std::cout << md;
  return 0;
}

// ---- sweep -----------------------------------------------------------------

int cmd_sweep(const std::string& config_path, const std::string& axis, const std::vector<double>& values,
              const fs::path& out, std::int64_t seed, bool force, int jobs) {
  RunConfig base = load_config(config_path);
  apply_seed(base, seed);
  const SweepTable t = run_sweep(base, axis, values, out, force, &std::cerr, jobs);
  std::cout << "wrote " << (out / "sweep.csv").string() << " (" << t.rows.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symbolic KAN training, export and evaluation"};
  app.require_subcommand(1);

  std::int64_t seed = -1;
  bool force = false;

  std::string dg_problem, dg_config, dg_out;
  auto* datagen = app.add_subcommand("datagen", "Write a problem's observation data as CSV");
  datagen->add_option("problem", dg_problem, "Problem name (vdp, rd, laplace, regression)")->required();
  datagen->add_option("--config", dg_config, "Run config supplying the problem constants");
  datagen->add_option("--out", dg_out, "Output CSV path")->required();
  datagen->add_option("--seed", seed, "Sampling seed");

  std::string tr_config, tr_out;
  auto* train = app.add_subcommand("train", "Run the two-stage training pipeline");
  train->add_option("config", tr_config, "Run config (TOML)")->required();
  train->add_option("--out", tr_out, "Run directory")->required();
  train->add_option("--seed", seed, "Overrides SYMKAN_SEED and the config seed");
  train->add_flag("--force", force, "Overwrite an existing run directory");

  std::string ev_ckpt, ev_grid, ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "Predict on a grid from a checkpoint");
  evaluate->add_option("checkpoint", ev_ckpt, "checkpoint.bin")->required();
  evaluate->add_option("--grid", ev_grid, "a:b:n per input, comma separated (default: validation grid)");
  evaluate->add_option("--out", ev_out, "Predictions CSV (default: next to the checkpoint)");

  std::string ex_ckpt, ex_out;
  auto* exp = app.add_subcommand("export", "Write closed-form expressions of a hardened checkpoint");
  exp->add_option("checkpoint", ex_ckpt, "checkpoint.bin")->required();
  exp->add_option("--out", ex_out, "Output directory (default: next to the checkpoint)");

  std::string rp_ckpt, rp_out;
  auto* report = app.add_subcommand("report", "Write the selected-primitive table of a hardened checkpoint");
  report->add_option("checkpoint", rp_ckpt, "checkpoint.bin")->required();
  report->add_option("--out", rp_out, "Output directory (default: next to the checkpoint)");

  std::string sw_config, sw_axis, sw_out;
  std::vector<double> sw_values;
  int sw_jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Train once per axis value and tabulate errors");
  sweep->add_option("config", sw_config, "Base run config")->required();
  sweep->add_option("--axis", sw_axis, "N_tr, S_r, L or K")->required();
  sweep->add_option("--values", sw_values, "Axis values")->delimiter(',');
  sweep->add_option("--out", sw_out, "Output directory")->required();
  sweep->add_option("--seed", seed, "Base seed");
  sweep->add_flag("--force", force, "Overwrite existing results");
  sweep->add_option("--jobs", sw_jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*datagen) return cmd_datagen(dg_problem, dg_config, dg_out, seed);
    if (*train) return cmd_train(tr_config, tr_out, seed, force);
    if (*evaluate) return cmd_evaluate(ev_ckpt, ev_grid, ev_out);
    if (*exp) return cmd_export(ex_ckpt, ex_out);
    if (*report) return cmd_report(rp_ckpt, rp_out);
    if (*sweep) return cmd_sweep(sw_config, sw_axis, sw_values, sw_out, seed, force, sw_jobs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
