#pragma once

// Run configuration: TOML sections [problem], [network], [library], [losses],
// [schedules], [train] and [stage2]. Unknown keys are rejected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "symkan/losses.hpp"
#include "symkan/optimize.hpp"
#include "symkan/problems.hpp"

namespace symkan {

struct ProblemConfig {
  std::string name = "regression";  // regression | vdp | rd | laplace
  std::string sampling = "random";
  std::string data_file;            // optional observations CSV
  // Zero selects the problem's default size.
  std::size_t n_data = 0;
  std::size_t n_colloc = 0;
  std::size_t n_boundary = 400;
  std::size_t n_validation = 0;

  // regression
  std::string target = "square";
  double lo = 0.0;
  double hi = 5.0;

  // Van der Pol
  double horizon = 20.0;
  double a = 1.0;
  double mu = 0.01;
  double c = 1.0;
  double power = 2.15;
  std::string power_variant = "abs";
  std::array<double, 2> x0{-2.0, 0.0};
  std::array<double, 3> init{0.5, 0.1, 0.5};
  double rtol = 1e-10;
  double atol = 1e-10;
  double dt = 0.01;

  // reaction-diffusion
  double half_width = 2.0;
  double diffusion = 0.01;
  double kappa = 0.7;
  double kappa_init = 0.3;
};

struct NetworkSection {
  std::vector<int> units{2, 2};
  int edges = 3;
  bool unit_gates = true;
  std::string input_normalization = "unit_box";  // unit_box | none
};

struct TrainSection {
  int log_every = 100;
  std::int64_t seed = 0;
  double eps_kill = 0.5;
  std::string harden_trigger = "end";  // end | entropy
  double learnable_lr_mult = 1.0;
  std::size_t residual_batch = 0;      // 0 means full batch
  double gumbel_scale = 1.0;           // multiplies every Gumbel sample
  std::string edge_scoring = "sampled";  // sampled | noise_free
};

struct Stage2Section {
  bool enabled = true;
  LbfgsOptions lbfgs;
};

struct RunConfig {
  ProblemConfig problem;
  NetworkSection network;
  std::vector<std::string> library{"x", "x^2", "sin"};
  LossWeights losses;
  Schedules schedules;  // schedules.T1 is set from [train] T1
  TrainSection train;
  Stage2Section stage2;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

// Parses TOML text; throws ConfigError on syntax errors, unknown keys or
// invalid values. `origin` names the source in messages.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);

// Effective configuration with every default filled in, as TOML.
std::string dump_config(const RunConfig& cfg);

// Problem and network built from the configuration (problem seed = train.seed).
Problem build_problem(const RunConfig& cfg);
NetworkConfig build_network_config(const RunConfig& cfg, const Problem& problem);

}  // namespace symkan
