#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "support.hpp"
#include "symkan/checkpoint.hpp"
#include "symkan/config.hpp"
#include "symkan/errors.hpp"
#include "symkan/export.hpp"
#include "symkan/io.hpp"
#include "symkan/training.hpp"

using namespace symkan;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_regression(int steps) {
  RunConfig c = parse_config(R"(
[problem]
name = "regression"
target = "square"
n_data = 40
n_validation = 50

[network]
units = [2, 2]
edges = 2

[library]
names = ["x", "x^2", "sin"]

[train]
log_every = 5
seed = 3

[stage2]
max_iter = 20
)");
  c.schedules.T1 = steps;
  return c;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(f, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("metrics header lists learnables after the fixed columns") {
  const Problem p = test::toy_second_order_problem();
  CHECK(metrics_header(p) ==
        "step,loss_total,loss_data,loss_pde,loss_bc,loss_ic,loss_ent,loss_nms,loss_unit,loss_bias,tau,"
        "lambda_sel,val_err,kappa,D");
  MetricsRow r;
  r.step = 12;
  r.learnables = {0.5, 0.25};
  const std::string line = metrics_line(r);
  CHECK(line.rfind("12,", 0) == 0);
  CHECK(std::count(line.begin(), line.end(), ',') == 14);
}

TEST_CASE("stage 1 is deterministic and logs on schedule") {
  const RunConfig cfg = tiny_regression(20);
  const Problem p = build_problem(cfg);
  auto run = [&] {
    Network net = init_network(build_network_config(cfg, p));
    std::vector<double> lv = p.learnable_values();
    RunRecord rec;
    stage1_train(p, net, lv, cfg, rec);
    return std::make_pair(net.params(), rec.history);
  };
  const auto [theta1, h1] = run();
  const auto [theta2, h2] = run();
  CHECK(std::memcmp(theta1.data(), theta2.data(), theta1.size() * sizeof(double)) == 0);
  REQUIRE(h1.size() == h2.size());
  std::vector<std::int64_t> steps;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].loss.total == h2[i].loss.total);
    steps.push_back(h1[i].step);
  }
  CHECK(steps == std::vector<std::int64_t>{1, 5, 10, 15, 20});
  CHECK(h1.front().lambda_sel == 0.0);
  CHECK(h1.front().tau == cfg.schedules.tau_start);
  for (const auto& r : h1) CHECK(std::isfinite(r.loss.total));
}

TEST_CASE("stage 1 refuses a hardened network and non-finite parameters") {
  const RunConfig cfg = tiny_regression(5);
  const Problem p = build_problem(cfg);
  Network net = init_network(build_network_config(cfg, p));
  std::vector<double> lv;
  RunRecord rec;

  Network hard = net;
  harden(hard, 1.0, 0.5);
  CHECK_THROWS_AS(stage1_train(p, hard, lv, cfg, rec), StateError);

  net.edge(0, 0, 0).b = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(stage1_train(p, net, lv, cfg, rec), NumericalError);
}

TEST_CASE("stage 2 fits the known square structure without touching it") {
  RunConfig cfg = tiny_regression(1);
  cfg.network.units = {2, 2};
  cfg.network.unit_gates = true;
  cfg.stage2.lbfgs.max_iter = 300;
  const Problem p = build_problem(cfg);
  Network net = init_network(build_network_config(cfg, p));
  test::harden_square_structure(net);
  REQUIRE(net.is_hardened());

  std::vector<double> logits_before;
  for (int l = 0; l < 2; ++l) {
    for (int k = 0; k < 2; ++k) {
      const auto ed = net.edge(l, k, 0);
      logits_before.insert(logits_before.end(), ed.logits.begin(), ed.logits.end());
      logits_before.push_back(net.gate_logit(l, k));
    }
  }
  const auto hash = net.structure_hash();

  std::vector<double> lv;
  RunRecord rec;
  rec.stage1_steps = 1;
  stage2_refine(p, net, lv, cfg, rec);

  CHECK(rec.hash_at_hardening == hash);
  CHECK(rec.structure_hash == hash);
  CHECK(net.structure_hash() == hash);
  CHECK(rec.objective_after_refine <= rec.objective_at_hardening);
  CHECK(rec.objective_after_refine < 1e-8);
  CHECK(validation_error(net, p, Mode::Hard) < 1e-4);

  std::vector<double> logits_after;
  for (int l = 0; l < 2; ++l) {
    for (int k = 0; k < 2; ++k) {
      const auto ed = net.edge(l, k, 0);
      logits_after.insert(logits_after.end(), ed.logits.begin(), ed.logits.end());
      logits_after.push_back(net.gate_logit(l, k));
    }
  }
  CHECK(std::memcmp(logits_before.data(), logits_after.data(), logits_before.size() * sizeof(double)) == 0);

  const SymExpr e = simplify(extract(net)[0]);
  CHECK(count_primitive(e, "x^2") == 1);
  CHECK(count_primitive(e, "sin") == 0);
  for (double x : {0.5, 1.7, 4.2}) {
    const double v[] = {x};
    CHECK(eval_expr(e, v) == doctest::Approx(x * x).epsilon(1e-5));
  }
  REQUIRE_FALSE(rec.history.empty());
  CHECK(rec.history.back().step == 1 + rec.stage2_iterations + 1);
}

TEST_CASE("pipeline writes a complete run directory") {
  test::TempDir dir("pipe");
  const RunConfig cfg = tiny_regression(10);
  const fs::path run = dir / "run";
  const RunRecord rec = train_pipeline(cfg, run);

  for (const char* f : {"config.toml", "metrics.csv", "checkpoint.bin", "expression.txt", "expression.json",
                        "primitives.md", "predictions.csv", "summary.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(run / f));
  }
  CHECK_FALSE(fs::exists(run / "INCOMPLETE"));

  const auto metrics = lines_of(run / "metrics.csv");
  REQUIRE(metrics.size() == rec.history.size() + 1);
  std::int64_t prev = 0;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    const std::int64_t s = std::stoll(metrics[i].substr(0, metrics[i].find(',')));
    CHECK(s > prev);
    prev = s;
  }

  const RunConfig back = load_config(run / "config.toml");
  CHECK(dump_config(back) == dump_config(cfg));

  const CheckpointState ck = checkpoint_load(run / "checkpoint.bin");
  CHECK(ck.net.is_hardened());
  CHECK(ck.net.structure_hash() == rec.structure_hash);
  CHECK(validation_error(ck.net, build_problem(back), Mode::Hard) == doctest::Approx(rec.val_err));

  const auto pred = read_csv(run / "predictions.csv");
  CHECK(pred.column("pred_y") >= 0);
  CHECK(pred.column("exact_y") >= 0);
  CHECK(pred.rows.size() == 50);

  CHECK_THROWS_AS(train_pipeline(cfg, run), ConfigError);
  CHECK(fs::exists(run / "summary.json"));
  CHECK_NOTHROW(train_pipeline(cfg, run, {.force = true}));
}

TEST_CASE("invalid configuration leaves no run directory") {
  test::TempDir dir("pipe_bad");
  RunConfig cfg = tiny_regression(5);
  cfg.library = {"x", "bogus"};
  CHECK_THROWS(train_pipeline(cfg, dir / "run"));
  CHECK_FALSE(fs::exists(dir / "run"));
}

TEST_CASE("sweep sorts values and writes one row per run") {
  test::TempDir dir("sweep");
  const RunConfig cfg = tiny_regression(5);
  const SweepTable t = run_sweep(cfg, "N_tr", {30, 10, 30}, dir.path(), false);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].value == 10);
  CHECK(t.rows[1].value == 30);
  for (const auto& r : t.rows) {
    CHECK(r.ok);
    CHECK(std::isfinite(r.err_traj));
  }
  CHECK(fs::exists(dir / "run_N_tr_10" / "summary.json"));
  const auto csv = lines_of(dir / "sweep.csv");
  REQUIRE(csv.size() == 3);
  CHECK(csv[0] == "value,err_traj");
  CHECK(csv[1].rfind("10,", 0) == 0);

  CHECK_THROWS_AS(run_sweep(cfg, "N_tr", {10}, dir.path(), false), ConfigError);
  CHECK_THROWS_AS(run_sweep(cfg, "N_tr", {}, dir / "x", false), ConfigError);
  CHECK_THROWS_AS(run_sweep(cfg, "depth", {2}, dir / "x", false), ConfigError);
  CHECK_THROWS_AS(run_sweep(cfg, "K", {1.5}, dir / "x", false), ConfigError);
  CHECK_FALSE(fs::exists(dir / "x"));
}

}  // TEST_SUITE
