#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlff/agents.hpp"
#include "rlff/dialogue.hpp"

namespace rlff {

struct SimulationConfig
{
  int m = 4;                    // candidates per context
  int max_turns = 8;            // T
  double stop_threshold = 0.5;  // rollout stops once the critic exceeds this
  SamplingParams sampling;      // system agent
  SamplingParams user_sampling; // user simulator
  CriticConfig critic = CriticConfig::simulation_default();
  std::uint64_t base_seed = 0;

  void validate() const;
};

/// One row of D_r.
struct RewardRecord
{
  std::string context_id;
  int candidate_index = 0;
  std::uint64_t seed = 0;
  ConversationContext context; // c_{1:t-1}, before the candidate
  TaggedOutput candidate;
  Trajectory trajectory;
  double terminal_reward = 0.0;
  int turns_used = 0;
  double future_reward = 0.0;
};

struct ContextEntry
{
  std::string id;
  ConversationContext context;
};

struct RolloutFailure
{
  std::string context_id;
  int candidate_index = 0;
  std::string reason;
};

struct SimulationResult
{
  std::vector<RewardRecord> records; // ordered by (context, candidate)
  std::vector<RolloutFailure> failures;
};

/// (terminal + 1/turns_used) / 2
double future_oriented_reward(double terminal_reward, int turns_used);

/// Seed of candidate j's system call and rollout.
std::uint64_t candidate_seed(std::uint64_t base_seed, int candidate_index);

/// m draws from the system agent; candidate j uses candidate_seed(base, j).
std::vector<TaggedOutput> sample_candidates(const AgentSet& agents, const ConversationContext& ctx,
                                            const SimulationConfig& cfg);

/// Rolls the dialogue forward from [ctx, candidate]: the user answers the
/// candidate, then for k = 1..T the system and user alternate and the critic
/// scores the whole conversation; stops at the first reward above the
/// threshold or at k = T, with turns_used = k + 1.
Trajectory rollout(const AgentSet& agents, const ConversationContext& ctx, const TaggedOutput& candidate,
                   const SimulationConfig& cfg, std::uint64_t seed);

/// Full D_r construction. Rollouts run on up to `workers` threads; failed
/// rollouts are logged and excluded. Progress lines go to the log sink.
SimulationResult build_reward_dataset(const AgentSet& agents, const std::vector<ContextEntry>& contexts,
                                      const SimulationConfig& cfg, std::size_t workers = 1);

} // namespace rlff
