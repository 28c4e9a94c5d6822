#pragma once

// Two-stage training: Stage I gated Adam optimization under the annealing
// schedules, hardening, Stage II L-BFGS refinement of the continuous
// parameters, then export and a run directory of artifacts.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "symkan/config.hpp"
#include "symkan/losses.hpp"
#include "symkan/network.hpp"
#include "symkan/problems.hpp"

namespace symkan {

struct MetricsRow {
  std::int64_t step = 0;
  LossReport loss;
  double tau = 0.0;
  double lambda_sel = 0.0;
  double val_err = 0.0;
  std::vector<double> learnables;
};

std::string metrics_header(const Problem& problem);
std::string metrics_line(const MetricsRow& row);

struct RunRecord {
  std::vector<MetricsRow> history;
  std::int64_t stage1_steps = 0;
  bool entropy_triggered = false;

  double objective_at_hardening = 0.0;
  double objective_after_refine = 0.0;
  int stage2_iterations = 0;
  std::string stage2_reason;
  std::uint64_t hash_at_hardening = 0;
  std::uint64_t structure_hash = 0;

  double val_err = 0.0;
  std::vector<LearnableScalar> learnables;
  std::vector<std::string> expressions;

  std::filesystem::path run_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path expression_txt;
  std::filesystem::path expression_json;
  std::filesystem::path primitives_md;
  std::filesystem::path predictions;
};

struct TrainHooks {
  // Called for every metrics row as it is produced.
  std::function<void(const MetricsRow&)> on_row;
  // Called after each logged Stage I step with the last finite state.
  std::function<void(const Network&, std::span<const double> learnables, std::int64_t step)> on_checkpoint;
};

// Relative validation error of the network on problem.validation. Soft mode
// evaluates noise-free at temperature tau.
double validation_error(const Network& net, const Problem& problem, Mode mode, double tau = 1.0);

// Objective used by Stage II: data and physics terms of the hardened network.
double refinement_objective(const Network& net, const Problem& problem,
                            std::span<const double> learnables, const LossWeights& w);

void stage1_train(const Problem& problem, Network& net, std::vector<double>& learnables,
                  const RunConfig& cfg, RunRecord& record, const TrainHooks& hooks = {});

// Hardens (unless already hardened) and refines. Gate logits and hardened
// selections are left untouched.
void stage2_refine(const Problem& problem, Network& net, std::vector<double>& learnables,
                   const RunConfig& cfg, RunRecord& record, const TrainHooks& hooks = {});

struct PipelineOptions {
  bool force = false;
};

// init -> stage1 -> harden -> stage2 -> export -> validation, written to
// run_dir. An INCOMPLETE marker file stays behind when a stage fails.
RunRecord train_pipeline(const RunConfig& cfg, const std::filesystem::path& run_dir,
                         const PipelineOptions& opt = {});

// Writes expression.txt, expression.json and primitives.md for a hardened net.
std::vector<std::string> write_exports(const Network& net, const std::filesystem::path& dir);

// Dense-grid predictions: columns inputs..., pred..., exact..., abs_err.
// Exact columns are omitted when the problem has no exact solution. Returns
// the relative error (NaN without an exact solution).
double write_predictions(const Network& net, const Problem& problem, const PointSet& grid,
                         const std::filesystem::path& path);

struct SweepRow {
  int value = 0;
  double err_traj = 0.0;
  std::vector<double> err_learnables;  // relative, trainable scalars only; NaN on failure
  bool ok = false;
};

struct SweepTable {
  std::string axis;
  std::vector<std::string> learnable_names;
  std::vector<SweepRow> rows;  // ascending value
};

// Trains once per value of `axis` (N_tr, S_r, L or K) into out/run_<axis>_<v>
// with the base seed, and writes out/sweep.csv. A failed run yields a row
// of NaN. `log` receives one line per run. jobs > 1 trains that many runs
// concurrently; results do not depend on it.
SweepTable run_sweep(const RunConfig& base, const std::string& axis, std::vector<double> values,
                     const std::filesystem::path& out, bool force, std::ostream* log = nullptr,
                     int jobs = 1);

}  // namespace symkan
