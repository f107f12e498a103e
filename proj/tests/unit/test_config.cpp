#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "rlff/config.hpp"
#include "rlff/errors.hpp"

using namespace rlff;
namespace fs = std::filesystem;
using nlohmann::json;

TEST_CASE("default hyper-parameters")
{
  const auto cfg = parse_config(json::object());
  CHECK(cfg.reward_model.batch_size == 1);
  CHECK(cfg.reward_model.epochs == 2);
  CHECK(cfg.reward_model.learning_rate == 1e-4);
  CHECK(cfg.reward_model.max_seq_len == 2048);
  CHECK(cfg.reward_model.grad_accum_steps == 8);
  CHECK(cfg.rl.batch_size == 4);
  CHECK(cfg.rl.epochs == 2);
  CHECK(cfg.rl.learning_rate == 1e-6);
  CHECK(cfg.rl.lora_rank == 8);
  CHECK(cfg.rl.lora_alpha == 32);
  CHECK(cfg.rl.max_dialogue_turn == 8);
  CHECK(cfg.rl.num_generations == 4);
  CHECK(cfg.rl.temperature == 1.1);
  CHECK(cfg.rl.top_p == 1.0);
  CHECK(cfg.rl.top_k == 80);
  CHECK(cfg.reward.alpha == 0.5);
  CHECK(cfg.simulation_critic_samples == 1);
  CHECK(cfg.evaluation.critic_samples == 10);
  CHECK(cfg.evaluation.max_turns == 8);
  CHECK(cfg.grpo.clip_epsilon == 0.2);
  CHECK(cfg.grpo.kl_beta == 0.04);

  const auto g = cfg.grpo_config();
  CHECK(g.group_size == 4);
  CHECK(g.contexts_per_step == 4);
  CHECK(g.epochs == 2);
  const auto s = cfg.sampling();
  CHECK(s.temperature == 1.1);
  CHECK(s.top_k == 80);
}

TEST_CASE("default document parses back to the defaults")
{
  const auto cfg = parse_config(default_config_json());
  CHECK(cfg.rl.top_k == 80);
  CHECK(cfg.evaluation.sweep.size() == 4);
}

TEST_CASE("environment interpolation")
{
  ::setenv("RLFF_TEST_MODEL", "tiny-model", 1);
  const json j = {{"a", "${RLFF_TEST_MODEL}/v1"}, {"b", {1, "x${RLFF_TEST_MODEL}"}}, {"c", 3}};
  const auto out = interpolate_env(j);
  CHECK(out["a"] == "tiny-model/v1");
  CHECK(out["b"][1] == "xtiny-model");
  CHECK(out["c"] == 3);
  ::unsetenv("RLFF_TEST_UNSET_VAR");
  CHECK_THROWS_AS(interpolate_env(json{{"a", "${RLFF_TEST_UNSET_VAR}"}}), ConfigError);
  CHECK_THROWS_AS(interpolate_env(json{{"a", "${OPEN"}}), ConfigError);
}

TEST_CASE("unknown keys and bad values are rejected")
{
  CHECK_THROWS_AS(parse_config(json{{"sed", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"rl", {{"learning_rte", 1.0}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"rl", {{"learning_rate", "fast"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"workers", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"reward", {{"future_signal", "maybe"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"backends", {{"system", {{"kind", "magic"}}}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"data", {{"format", "csv"}}}}), ConfigError);
}

TEST_CASE("relative paths resolve against the config directory")
{
  const auto cfg = parse_config(json{{"out", "../runs/x"}, {"data", {{"format", "esconv"}, {"train", "d/t.json"}}}},
                                "/base/configs");
  CHECK(cfg.out == fs::path("/base/runs/x"));
  CHECK(cfg.data.train == fs::path("/base/configs/d/t.json"));
}

TEST_CASE("missing inputs are reported before any backend is built")
{
  auto cfg = parse_config(json{{"data", {{"format", "esconv"}, {"train", "/nonexistent/train.json"}}}});
  CHECK_THROWS_AS(validate_paths(cfg, {Need::TrainData}), ConfigError);
  CHECK_THROWS_AS(validate_paths(parse_config(json::object()), {Need::TrainData}), ConfigError);
  CHECK_NOTHROW(validate_paths(parse_config(json::object()), {}));
}

TEST_CASE("smoke config loads")
{
  const auto cfg = load_config(fs::path(RLFF_SOURCE_DIR) / "configs" / "smoke.json");
  CHECK(cfg.data.format == DatasetFormat::Esconv);
  CHECK(cfg.system.kind == "rules");
  CHECK(cfg.critic_eval.choices.size() == 5);
  CHECK_NOTHROW(validate_paths(cfg, {Need::TrainData, Need::TestData}));
  const auto agents = make_agents(cfg, true);
  (void)agents;
}

TEST_CASE("remote backend keys")
{
  const json j = {{"backends",
                   {{"system",
                     {{"kind", "remote"},
                      {"base_url", "http://127.0.0.1:9"},
                      {"model", "m"},
                      {"token_env", "RLFF_TOKEN"},
                      {"max_retries", 2}}}}}};
  const auto cfg = parse_config(j);
  CHECK(cfg.system.remote.model == "m");
  CHECK(cfg.system.remote.token_env == "RLFF_TOKEN");
  CHECK(cfg.system.remote.max_retries == 2);
  CHECK_THROWS_AS(parse_config(json{{"backends", {{"system", {{"kind", "remote"}, {"token", "abc"}}}}}}),
                  ConfigError);
}
