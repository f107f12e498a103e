#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlff/agents.hpp"
#include "rlff/evaluation.hpp"
#include "rlff/grpo.hpp"
#include "rlff/llm_backend.hpp"
#include "rlff/prompts.hpp"
#include "rlff/reward.hpp"
#include "rlff/simulator.hpp"

namespace rlff {

enum class DatasetFormat
{
  None,
  Esconv,
  Extes,
};

struct DataConfig
{
  DatasetFormat format = DatasetFormat::None;
  std::filesystem::path train; // ESConv train split, or the whole ExTES file
  std::filesystem::path test;  // ESConv test split
  std::uint64_t split_seed = 7;
  int contexts_per_dialogue = 1;
  std::size_t max_dialogues = 0; // 0 = all
};

/// How one agent role reaches a model.
struct BackendBinding
{
  std::string kind = "rules"; // rules | scripted | remote
  std::vector<RuleBackend::Rule> rules;
  std::vector<std::string> choices;
  std::vector<std::string> script;
  RemoteBackendConfig remote;
  std::string name;

  nlohmann::json describe() const;
};

struct ScorerBinding
{
  std::string kind = "featurized"; // featurized | scripted | remote
  std::filesystem::path path;      // featurized
  ScriptedScorer::Table table;     // scripted
  RemoteBackendConfig remote;      // remote
};

/// Reward-model hyper-parameters plus feature size.
struct RewardModelConfig
{
  int batch_size = 1;
  int epochs = 2;
  double learning_rate = 1e-4;
  int max_seq_len = 2048;
  int grad_accum_steps = 8;
  int hash_bits = 16;
  double init_scale = 0.0;
};

/// RL-phase hyper-parameters. LoRA values are recorded but unused by the toy
/// policy.
struct RlConfig
{
  int batch_size = 4;
  int epochs = 2;
  double learning_rate = 1e-6;
  int lora_rank = 8;
  int lora_alpha = 32;
  int max_dialogue_turn = 8;
  int num_generations = 4;
  double temperature = 1.1;
  double top_p = 1.0;
  int top_k = 80;
};

struct ToyGrpoConfig
{
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double std_floor = 1e-8;
  int steps = 200;
  int horizon = 16;
  double prior_strength = 0.0;
  std::size_t max_contexts = 8;
  std::string reward = "rlff"; // rlff | format
  int adherence_every = 10;    // 0 disables the adherence curve
  int adherence_samples = 256;
};

struct RewardConfig
{
  double alpha = 0.5;
  double fut_weight = 1.0;
  double delta = 0.5;
  FutureSignal future_signal = FutureSignal::Probability;
};

struct EvalConfig
{
  int max_turns = 8;
  int critic_samples = 10;
  double success_threshold = 0.5;
  SuccessMode mode = SuccessMode::Strict;
  std::size_t max_episodes = 0; // 0 = all
  std::string model_name = "RLFF-ESC";
  std::vector<SweepPoint> sweep = {
    {0.25, SuccessMode::Strict}, {0.5, SuccessMode::Strict}, {0.5, SuccessMode::Lenient}, {0.75, SuccessMode::Strict}};
};

struct RunConfig
{
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::filesystem::path out = "runs/latest";
  std::optional<std::filesystem::path> prompts_dir;
  DataConfig data;
  BackendBinding system;
  BackendBinding user;
  BackendBinding critic_train;
  BackendBinding critic_eval;
  ScorerBinding scorer;
  RewardModelConfig reward_model;
  RlConfig rl;
  int simulation_m = 4;
  double stop_threshold = 0.5;
  int simulation_critic_samples = 1;
  RewardConfig reward;
  ToyGrpoConfig grpo;
  EvalConfig evaluation;

  nlohmann::json source; // interpolated file contents, echoed into manifests

  SamplingParams sampling() const;
  SimulationConfig simulation_config() const;
  GrpoConfig grpo_config() const;
  EpisodeConfig episode_config() const;
  TrainerHyper trainer_hyper() const;
  FeatureSpec feature_spec() const;
  RewardWeights reward_weights() const;
  PromptSet prompts() const;
};

/// Replaces ${NAME} in every string value with the environment variable;
/// throws ConfigError when a referenced variable is unset.
nlohmann::json interpolate_env(const nlohmann::json& j);

/// Parses a config document. Relative paths resolve against `base_dir`.
/// Unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its default value.
nlohmann::json default_config_json();

enum class Need
{
  TrainData,
  TestData,
  Scorer,
};

/// Checks that the paths a command depends on exist. Runs before any
/// backend is contacted.
void validate_paths(const RunConfig& cfg, std::initializer_list<Need> needs);

std::shared_ptr<ChatBackend> make_backend(const BackendBinding& b);
std::shared_ptr<const Scorer> make_scorer(const ScorerBinding& b, const PromptSet& prompts);

/// Agents for simulation (training-time critic) or evaluation.
AgentSet make_agents(const RunConfig& cfg, bool evaluation);

} // namespace rlff
