#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fbrl/config.hpp"
#include "fbrl/errors.hpp"

using namespace fbrl;

TEST_CASE("defaults validate and FB mode forces lambda to zero") {
  RunConfig cfg;
  validate_config(cfg);
  CHECK(cfg.lambda_reg == 20.0);

  RunConfig fb;
  fb.mode = "FB";
  fb.lambda_reg = 20.0;
  validate_config(fb);
  CHECK(fb.lambda_reg == 0.0);
}

TEST_CASE("round trip: dump then parse reproduces every field") {
  RunConfig cfg;
  cfg.mode = "MEBE-abl";
  cfg.seed = 1234567;
  cfg.total_steps = 4321;
  cfg.beta = 1.75;
  cfg.epsilon = 0.025;
  cfg.f_hidden = {48, 32, 16};
  cfg.lr_f = 5e-5;
  cfg.run_dir = "runs/trip";
  const RunConfig back = parse_config_text(dump_config(cfg));
  CHECK(back.mode == cfg.mode);
  CHECK(back.seed == cfg.seed);
  CHECK(back.total_steps == cfg.total_steps);
  CHECK(back.beta == cfg.beta);
  CHECK(back.epsilon == cfg.epsilon);
  CHECK(back.f_hidden == cfg.f_hidden);
  CHECK(back.lr_f == cfg.lr_f);
  CHECK(back.run_dir == cfg.run_dir);
  // Second round trip is textually stable.
  CHECK(dump_config(back) == dump_config(cfg));
}

TEST_CASE("unknown keys are listed in the error") {
  try {
    parse_config_text("total_steps = 10\nbogus_key = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
  }
}

TEST_CASE("comments and blank lines are ignored") {
  const RunConfig cfg = parse_config_text(
      "# experiment\n\nseed = 9  # trailing comment\n  mode = FB-Critic \n");
  CHECK(cfg.seed == 9);
  CHECK(cfg.mode == "FB-Critic");
}

TEST_CASE("value parse failures name the key") {
  CHECK_THROWS_AS(parse_config_text("total_steps = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("beta = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("f_hidden = \n"), ConfigError);
}

TEST_CASE("overrides apply typed values") {
  RunConfig cfg;
  apply_override(cfg, "total_steps", "777");
  apply_override(cfg, "mode", "FB");
  apply_override(cfg, "goal_fraction", "0.5");
  apply_override(cfg, "b_hidden", "16,8");
  CHECK(cfg.total_steps == 777);
  CHECK(cfg.mode == "FB");
  CHECK(cfg.goal_fraction == 0.5);
  CHECK(cfg.b_hidden == std::vector<std::int64_t>{16, 8});
  CHECK_THROWS_AS(apply_override(cfg, "nope", "1"), ConfigError);
}

TEST_CASE("validation rejects out-of-range values") {
  RunConfig cfg;
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = RunConfig{};
  cfg.goal_fraction = 1.5;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = RunConfig{};
  cfg.mode = "???";
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = RunConfig{};
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("derived views expose env and exploration parameters") {
  RunConfig cfg;
  cfg.mode = "MEBE";
  cfg.beta = 3.0;
  const ExplorationConfig e = cfg.exploration_config();
  CHECK(e.beta == 3.0);
  CHECK(e.mode == Mode::kMEBE);
  const EnvParams p = cfg.env_params();
  CHECK(p.episode_len == 250);
  CHECK(p.v_max == 2.0f);
}
