#include <doctest.h>

#include <cstring>

#include "support.hpp"
#include "symkan/checkpoint.hpp"
#include "symkan/errors.hpp"
#include "symkan/export.hpp"
#include "symkan/io.hpp"

using namespace symkan;
namespace fs = std::filesystem;

namespace {

Network sample_net() {
  NetworkConfig c = test::small_config(2, 1, {"x", "x^2", "sin", "exp"}, true);
  c.input_affine = {{0.5, -1.0}, {2.0, 0.25}};
  return test::random_net(c, 11);
}

std::vector<LearnableScalar> sample_learnables() {
  LearnableScalar a{"kappa", 0.3, true, 0.3, 0.7};
  a.value = 0.4123456789;
  LearnableScalar b{"D", 0.01, false, 0.01, 0.01};
  LearnableScalar c{"free", 1.0, true, 1.0, 0.0};
  c.truth = std::nan("");
  c.value = -2.5;
  return {a, b, c};
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round trip is bit exact") {
  test::TempDir dir("ck_rt");
  Network net = sample_net();
  net.hardening(0, 1) = {true, true, 1, 2};
  const auto lv = sample_learnables();
  checkpoint_save(dir / "a.bin", net, lv, 4321, "[train]\nT1 = 5\n");

  const CheckpointState st = checkpoint_load(dir / "a.bin");
  CHECK(st.step == 4321);
  CHECK(st.config_text == "[train]\nT1 = 5\n");
  REQUIRE(st.net.params().size() == net.params().size());
  CHECK(std::memcmp(st.net.params().data(), net.params().data(), net.params().size() * sizeof(double)) == 0);
  CHECK(st.net.hardening_states() == net.hardening_states());
  CHECK(st.net.config().library == net.config().library);
  CHECK(st.net.config().input_affine[1].scale == 2.0);
  REQUIRE(st.learnables.size() == 3);
  CHECK(st.learnables[0].value == lv[0].value);
  CHECK(st.learnables[0].truth == 0.7);
  CHECK_FALSE(st.learnables[1].trainable);
  CHECK(std::isnan(st.learnables[2].truth));
  CHECK(st.learnables[2].value == -2.5);

  const std::vector<double> x{0.3, -0.7};
  CHECK(forward(st.net, x, 0.8, {}, Mode::Soft) == forward(net, x, 0.8, {}, Mode::Soft));

  // Saving the loaded state reproduces the file byte for byte.
  checkpoint_save(dir / "b.bin", st.net, st.learnables, st.step, st.config_text);
  CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
}

TEST_CASE("hardened network exports identically after reload") {
  test::TempDir dir("ck_hard");
  Network net = sample_net();
  harden(net, 0.5, 0.5);
  checkpoint_save(dir / "h.bin", net, {}, 1);
  const CheckpointState st = checkpoint_load(dir / "h.bin");
  REQUIRE(st.net.is_hardened());
  CHECK(st.net.structure_hash() == net.structure_hash());
  const auto e1 = extract(net);
  const auto e2 = extract(st.net);
  REQUIRE(e1.size() == e2.size());
  CHECK(render_text(simplify(e1[0])) == render_text(simplify(e2[0])));
}

TEST_CASE("every truncated prefix is rejected") {
  test::TempDir dir("ck_trunc");
  checkpoint_save(dir / "full.bin", sample_net(), sample_learnables(), 3);
  const std::string bytes = read_file(dir / "full.bin");
  // A sweep of prefix lengths, denser near the header.
  for (std::size_t n = 0; n < bytes.size(); n += (n < 64 ? 1 : 37)) {
    CAPTURE(n);
    write_file_atomic(dir / "cut.bin", bytes.substr(0, n));
    CHECK_THROWS_AS(checkpoint_load(dir / "cut.bin"), LoadError);
  }
}

TEST_CASE("corruption, trailing bytes and foreign files are rejected") {
  test::TempDir dir("ck_bad");
  checkpoint_save(dir / "full.bin", sample_net(), sample_learnables(), 3);
  const std::string bytes = read_file(dir / "full.bin");

  std::string flipped = bytes;
  flipped[bytes.size() / 2] = static_cast<char>(flipped[bytes.size() / 2] ^ 0x10);
  write_file_atomic(dir / "flip.bin", flipped);
  CHECK_THROWS_AS(checkpoint_load(dir / "flip.bin"), LoadError);

  write_file_atomic(dir / "long.bin", bytes + "x");
  CHECK_THROWS_AS(checkpoint_load(dir / "long.bin"), LoadError);

  write_file_atomic(dir / "text.bin", "step,loss\n1,2\n");
  CHECK_THROWS_WITH_AS(checkpoint_load(dir / "text.bin"), doctest::Contains("not a checkpoint"), LoadError);

  CHECK_THROWS_AS(checkpoint_load(dir / "absent.bin"), LoadError);
}

TEST_CASE("unknown version is named in the error") {
  test::TempDir dir("ck_ver");
  checkpoint_save(dir / "full.bin", sample_net(), {}, 0);
  std::string bytes = read_file(dir / "full.bin");
  const std::uint32_t v = 7;
  std::memcpy(bytes.data() + 8, &v, sizeof v);
  write_file_atomic(dir / "v7.bin", bytes);
  CHECK_THROWS_WITH_AS(checkpoint_load(dir / "v7.bin"), doctest::Contains("version 7"), LoadError);
}

}  // TEST_SUITE
