#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "symkan/config.hpp"
#include "symkan/errors.hpp"
#include "symkan/io.hpp"

using namespace symkan;
namespace fs = std::filesystem;

#ifndef SYMKAN_SOURCE_DIR
#define SYMKAN_SOURCE_DIR "."
#endif

TEST_SUITE("config") {

TEST_CASE("empty text gives defaults") {
  const RunConfig c = parse_config("");
  const RunConfig d;
  CHECK(c.problem.name == d.problem.name);
  CHECK(c.network.units == d.network.units);
  CHECK(c.library == std::vector<std::string>{"x", "x^2", "sin"});
  CHECK(c.train.gumbel_scale == 1.0);
  CHECK(c.train.edge_scoring == "sampled");
  CHECK(c.schedules.T1 == d.schedules.T1);
}

TEST_CASE("dump then parse is a fixed point") {
  const std::string text = R"(
[problem]
name = "rd"
n_data = 50
n_colloc = 700
kappa_init = 0.25

[network]
units = [3, 4]
edges = 2
unit_gates = false

[library]
names = ["identity", "square", "sin"]

[losses]
lambda_r = 0.1
lambda_ent = 0.02

[schedules]
tau_start = 3.0
lr0 = 5e-3

[train]
T1 = 123
seed = 9
residual_batch = 64

[stage2]
max_iter = 17
)";
  const RunConfig a = parse_config(text);
  const std::string d1 = dump_config(a);
  const RunConfig b = parse_config(d1);
  CHECK(dump_config(b) == d1);
  CHECK(b.problem.name == "rd");
  CHECK(b.problem.n_colloc == 700);
  CHECK(b.network.units == std::vector<int>{3, 4});
  CHECK(b.losses.lambda_r == doctest::Approx(0.1));
  CHECK(b.schedules.T1 == 123);
  CHECK(b.train.seed == 9);
  CHECK(b.train.residual_batch == 64);
  CHECK(b.stage2.lbfgs.max_iter == 17);
}

TEST_CASE("library aliases are canonicalized") {
  const RunConfig c = parse_config("[library]\nnames = [\"identity\", \"square\", \"sin\"]\n");
  const Problem p = build_problem(c);
  const NetworkConfig n = build_network_config(c, p);
  CHECK(n.library == std::vector<std::string>{"x", "x^2", "sin"});
}

TEST_CASE("malformed input raises ConfigError") {
  CHECK_THROWS_AS(parse_config("[network]\nunits = [2, 2]\nwidth = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("top_level = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[network]\nedges = \"three\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[network\nedges = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[network]\nedges = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nharden_trigger = \"sometimes\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nedge_scoring = \"greedy\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[library]\nnames = [\"sin\", \"nope\"]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[problem]\nname = \"heat\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[problem]\nlo = 2.0\nhi = 1.0\n"), ConfigError);
}

TEST_CASE("missing config file raises ConfigError") {
  CHECK_THROWS_AS(load_config("/nonexistent/run.toml"), ConfigError);
}

TEST_CASE("observations are read from a CSV file") {
  test::TempDir dir("cfg_csv");
  const fs::path csv = dir / "obs.csv";
  {
    std::ofstream f(csv);
    f << "y,x\n";
    for (int i = 0; i <= 10; ++i) f << format_double(i * i) << "," << format_double(i) << "\n";
  }
  RunConfig c = parse_config("[problem]\nname = \"regression\"\ndata_file = \"" + csv.string() + "\"\n");
  Problem p = build_problem(c);
  REQUIRE(p.data.size() == 11);
  CHECK(p.data.x[3] == 3.0);
  CHECK(p.data.y[3] == 9.0);

  c.problem.n_data = 3;
  p = build_problem(c);
  REQUIRE(p.data.size() == 3);
  CHECK(p.data.x == std::vector<double>{0.0, 5.0, 10.0});

  c.problem.data_file = (dir / "absent.csv").string();
  CHECK_THROWS_AS(build_problem(c), LoadError);

  {
    std::ofstream f(dir / "bad.csv");
    f << "x,z\n1,2\n";
  }
  c.problem.data_file = (dir / "bad.csv").string();
  CHECK_THROWS_AS(build_problem(c), LoadError);
}

TEST_CASE("unit_box maps the problem box onto [-1, 1]") {
  RunConfig c = parse_config("[problem]\nname = \"regression\"\nlo = 2.0\nhi = 6.0\n");
  const Problem p = build_problem(c);
  NetworkConfig n = build_network_config(c, p);
  REQUIRE(n.input_affine.size() == 1);
  CHECK(n.input_affine[0].scale * 2.0 + n.input_affine[0].shift == doctest::Approx(-1.0));
  CHECK(n.input_affine[0].scale * 6.0 + n.input_affine[0].shift == doctest::Approx(1.0));

  c.network.input_normalization = "none";
  n = build_network_config(c, p);
  CHECK(n.input_affine.empty());
}

TEST_CASE("shipped configs parse and build") {
  const fs::path dir = fs::path(SYMKAN_SOURCE_DIR) / "configs";
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".toml") continue;
    CAPTURE(entry.path().string());
    RunConfig c = load_config(entry.path());
    // Keep construction cheap; sizes do not affect validity.
    c.problem.n_colloc = std::min<std::size_t>(c.problem.n_colloc == 0 ? 64 : c.problem.n_colloc, 64);
    c.problem.n_validation = 0;
    const Problem p = build_problem(c);
    const NetworkConfig n = build_network_config(c, p);
    CHECK(n.n_inputs == p.n_inputs);
    CHECK(parse_config(dump_config(c)).schedules.T1 == c.schedules.T1);
    ++seen;
  }
  CHECK(seen >= 3);
}

}  // TEST_SUITE
