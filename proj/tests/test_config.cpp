#include "doctest.h"

#include "tfcodit/config.hpp"
#include "tfcodit/errors.hpp"

#include <filesystem>

using namespace tfcodit;
using namespace tfcodit::config;
namespace fs = std::filesystem;

TEST_SUITE("config") {

TEST_CASE("toml subset parses sections, dotted keys and arrays") {
  const auto j = parse_toml(R"(
seed = 3          # comment
name = "a # not a comment"

[vae]
width = 64
encoder_heads = [16, 8, 4]
kl_weight = 1e-4

[train.vae]
adam.lr = 0.001
flag = true
regimes = [{ label = "up", drift = 0.1 }, { label = "down", drift = -0.1 }]
)");
  CHECK(j["seed"] == 3);
  CHECK(j["name"] == "a # not a comment");
  CHECK(j["vae"]["width"] == 64);
  CHECK(j["vae"]["encoder_heads"] == nlohmann::json::array({16, 8, 4}));
  CHECK(j["vae"]["kl_weight"].get<double>() == 1e-4);
  CHECK(j["train"]["vae"]["adam"]["lr"].get<double>() == 0.001);
  CHECK(j["train"]["vae"]["flag"] == true);
  CHECK(j["train"]["vae"]["regimes"][1]["label"] == "down");
  CHECK_THROWS_AS(parse_toml("x = [1, 2"), Error);
  CHECK_THROWS_AS(parse_toml("just words"), Error);
}

TEST_CASE("dump then parse is the identity on trees") {
  const auto tree = to_json(RunConfig{});
  CHECK(parse_toml(dump_toml(tree)) == tree);
}

TEST_CASE("config save/load round trip") {
  RunConfig c;
  c.seed = 99;
  c.train_vae.steps = 17;
  c.denoiser.layers = 3;
  c.paths.data_dir = "somewhere/data";
  c.synthetic.regimes[0].drift = 0.25;
  c.finalize();
  const auto path = fs::temp_directory_path() / "tfcodit_config_test.toml";
  save(path, c);
  const auto back = load(path);
  CHECK(to_json(back) == to_json(c));
  CHECK(back.seed == 99);
  CHECK(back.synthetic.regimes[0].drift == 0.25);
  fs::remove(path);
}

TEST_CASE("defaults follow the stated learning-rate recipes") {
  RunConfig c;
  CHECK(c.train_vae.adam.lr == 1e-3);
  CHECK(c.train_diffusion.adam.lr == 5e-4);
  CHECK(c.train_diffusion.warmup_fraction == 0.05);
  CHECK(c.train_diffusion.schedule == optim::Schedule::Cosine);
  CHECK(c.denoiser.latent_tokens() == c.vae.tokens());
}

TEST_CASE("overrides by dotted name") {
  RunConfig c;
  auto o = with_overrides(c, {"train.vae.steps=5", "vae.width=128", "sampler.method=ddim",
                              "horizon=64"});
  CHECK(o.train_vae.steps == 5);
  CHECK(o.vae.width == 128);
  CHECK(o.horizon == 64);
  CHECK(o.vae.horizon == 64);
  CHECK(o.denoiser.n_t == 16);
  CHECK(o.denoiser.latent_dim == 128 / 32);
  CHECK(o.sampling.method == sampler::Method::FirstOrderSolver);
}

TEST_CASE("cross-module shape checks") {
  RunConfig c;
  try {
    with_overrides(c, {"denoiser.latent_dim=8"});
    FAIL("expected ConfigShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigShapeMismatch);
  }
  try {
    with_overrides(c, {"horizon=48"});
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
  CHECK_THROWS_AS(with_overrides(c, {"vae.width=63"}), Error);
}

}  // TEST_SUITE
