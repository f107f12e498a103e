#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rlff/agents.hpp"
#include "rlff/dialogue.hpp"

namespace rlff {

enum class SuccessMode
{
  Strict,  // reward >  threshold
  Lenient, // reward >= threshold
};

bool is_success(double reward, double threshold, SuccessMode mode);
const char* to_string(SuccessMode mode);
SuccessMode success_mode_from_string(const std::string& s);

struct EpisodeConfig
{
  int max_turns = 8; // T
  double success_threshold = 0.5;
  SuccessMode mode = SuccessMode::Strict;
  SamplingParams system_sampling;
  SamplingParams user_sampling;
  CriticConfig critic = CriticConfig::evaluation_default();
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpisodeResult
{
  std::string scenario_id;
  ScenarioDescription scenario;
  bool success = false;
  int turns = 0;
  double final_reward = 0.0;
  std::vector<double> turn_rewards; // critic aggregate after each exchange
  ConversationContext transcript;

  /// Largest per-turn reward (final_reward when none were stored).
  double peak_reward() const;
};

/// Opens with the scenario's situation as the user's first turn, then
/// alternates system/user turns; the critic judges after every exchange and
/// the episode ends at the first success or at turn T.
EpisodeResult run_episode(const AgentSet& agents, const ScenarioDescription& scenario, const EpisodeConfig& cfg);

struct CategoryStat
{
  double weighted_sr = 0.0; // SR(c) * count(c) / n, percent
  double sr = 0.0;          // within-category SR, percent
  std::size_t count = 0;
};

struct EvalReport
{
  double success_rate = 0.0; // percent
  double average_turns = 0.0;
  std::size_t n_episodes = 0;
  std::size_t invalid_episodes = 0;
  std::map<std::string, std::map<std::string, CategoryStat>> per_category; // key -> category -> stat
};

/// SR = 100 * successes / n; AT = mean turns with failures counted at T.
/// Throws EmptyResults for no episodes.
EvalReport compute_metrics(std::span<const EpisodeResult> results, int max_turns);

enum class CategoryKey
{
  EmotionType,
  ProblemType,
};

const char* to_string(CategoryKey key);
inline constexpr std::string_view kUnlabeled = "unlabeled";

/// Weighted SR per category value; scenarios without the field land in the
/// "unlabeled" bucket.
std::map<std::string, CategoryStat> category_breakdown(std::span<const EpisodeResult> results, CategoryKey key);

struct SweepRow
{
  double threshold = 0.0;
  SuccessMode mode = SuccessMode::Strict;
  double success_rate = 0.0;
};

struct SweepPoint
{
  double threshold;
  SuccessMode mode;
};

/// SR recomputed from per-episode peak rewards at each threshold.
std::vector<SweepRow> threshold_sweep(std::span<const double> episode_rewards, std::span<const SweepPoint> points);
std::vector<SweepRow> threshold_sweep(std::span<const EpisodeResult> results, std::span<const SweepPoint> points);

/// Two-column SR / AT table.
std::string render_table(const EvalReport& report, const std::string& model_name);
std::string render_sweep_table(std::span<const SweepRow> rows);
/// category,count,sr,weighted_sr
std::string render_category_csv(const std::map<std::string, CategoryStat>& stats);

} // namespace rlff
