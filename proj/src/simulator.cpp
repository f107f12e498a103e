#include "rlff/simulator.hpp"

#include <optional>

#include <json.hpp>

#include "rlff/errors.hpp"
#include "rlff/log.hpp"
#include "rlff/parallel.hpp"
#include "rlff/random.hpp"

namespace rlff {

namespace {

enum Stream : std::uint64_t
{
  kSystemStream = 1,
  kUserStream = 2,
  kCriticStream = 3,
};

SamplingParams seeded(SamplingParams p, std::uint64_t seed, Stream stream, int step)
{
  p.seed = derive_seed(seed, stream, static_cast<std::uint64_t>(step));
  return p;
}

CriticConfig seeded(CriticConfig c, std::uint64_t seed, int step)
{
  c.sampling = seeded(c.sampling, seed, kCriticStream, step);
  return c;
}

} // namespace

void SimulationConfig::validate() const
{
  if (m < 1) {
    throw InvalidValue("m must be >= 1");
  }
  if (max_turns < 1) {
    throw InvalidValue("max_turns must be >= 1");
  }
  if (!(stop_threshold > -1.0 && stop_threshold <= 1.0)) {
    throw InvalidValue("stop_threshold must lie in (-1, 1]");
  }
  if (critic.samples < 1) {
    throw InvalidValue("critic samples must be >= 1");
  }
  sampling.validate();
  user_sampling.validate();
  critic.sampling.validate();
}

double future_oriented_reward(double terminal_reward, int turns_used)
{
  if (turns_used < 1) {
    throw InvalidValue("turns_used must be >= 1");
  }
  return (terminal_reward + 1.0 / static_cast<double>(turns_used)) / 2.0;
}

std::uint64_t candidate_seed(std::uint64_t base_seed, int candidate_index)
{
  return base_seed + static_cast<std::uint64_t>(candidate_index);
}

std::vector<TaggedOutput> sample_candidates(const AgentSet& agents, const ConversationContext& ctx,
                                            const SimulationConfig& cfg)
{
  cfg.validate();
  std::vector<TaggedOutput> out;
  out.reserve(static_cast<std::size_t>(cfg.m));
  for (int j = 0; j < cfg.m; ++j) {
    auto sampling = cfg.sampling;
    sampling.seed = candidate_seed(cfg.base_seed, j);
    out.push_back(agents.system.respond(ctx, sampling));
  }
  return out;
}

Trajectory rollout(const AgentSet& agents, const ConversationContext& ctx, const TaggedOutput& candidate,
                   const SimulationConfig& cfg, std::uint64_t seed)
{
  if (is_blank(candidate.response)) {
    throw InvalidValue("candidate has an empty response");
  }
  Trajectory traj;
  traj.base = ctx;
  traj.seed_response = candidate;

  // The candidate stays in every later prompt.
  auto live = append_turn(ctx, system_turn(candidate));
  auto first_user = agents.user.reply(live, seeded(cfg.user_sampling, seed, kUserStream, 0));
  live = append_turn(live, first_user);
  traj.continuation.push_back(live.back());

  for (int k = 1; k <= cfg.max_turns; ++k) {
    auto sys = agents.system.respond(live, seeded(cfg.sampling, seed, kSystemStream, k));
    live = append_turn(live, system_turn(sys));
    traj.continuation.push_back(live.back());

    auto usr = agents.user.reply(live, seeded(cfg.user_sampling, seed, kUserStream, k));
    live = append_turn(live, usr);
    traj.continuation.push_back(live.back());

    const auto verdict = agents.critic.judge(live, seeded(cfg.critic, seed, k));
    traj.step_rewards.push_back({k, verdict.reward});
    if (verdict.reward > cfg.stop_threshold || k == cfg.max_turns) {
      traj.terminal_reward = verdict.reward;
      traj.turns_used = k + 1;
      break;
    }
  }
  return traj;
}

SimulationResult build_reward_dataset(const AgentSet& agents, const std::vector<ContextEntry>& contexts,
                                      const SimulationConfig& cfg, std::size_t workers)
{
  cfg.validate();
  if (contexts.empty()) {
    throw InvalidValue("no contexts to simulate");
  }

  SimulationResult result;
  const auto m = static_cast<std::size_t>(cfg.m);
  for (const auto& entry : contexts) {
    std::vector<std::optional<RewardRecord>> slots(m);
    std::vector<std::optional<RolloutFailure>> failed(m);

    parallel_for(m, workers, [&](std::size_t j) {
      const int index = static_cast<int>(j);
      const auto seed = candidate_seed(cfg.base_seed, index);
      nlohmann::json progress = {{"event", "rollout"}, {"context_id", entry.id}, {"candidate", index}};
      try {
        auto sampling = cfg.sampling;
        sampling.seed = seed;
        auto candidate = agents.system.respond(entry.context, sampling);
        auto traj = rollout(agents, entry.context, candidate, cfg, seed);

        RewardRecord rec;
        rec.context_id = entry.id;
        rec.candidate_index = index;
        rec.seed = seed;
        rec.context = entry.context;
        rec.candidate = std::move(candidate);
        rec.terminal_reward = traj.terminal_reward;
        rec.turns_used = traj.turns_used;
        rec.future_reward = future_oriented_reward(traj.terminal_reward, traj.turns_used);
        rec.trajectory = std::move(traj);
        progress["status"] = "ok";
        progress["turns_used"] = rec.turns_used;
        progress["terminal_reward"] = rec.terminal_reward;
        progress["future_reward"] = rec.future_reward;
        slots[j] = std::move(rec);
      } catch (const BackendError& e) {
        failed[j] = RolloutFailure{entry.id, index, e.what()};
      } catch (const UnparsableVerdict& e) {
        failed[j] = RolloutFailure{entry.id, index, e.what()};
      }
      if (failed[j]) {
        progress["status"] = "failed";
        progress["reason"] = failed[j]->reason;
      }
      log::json_line(progress.dump());
    });

    for (std::size_t j = 0; j < m; ++j) {
      if (slots[j]) {
        result.records.push_back(std::move(*slots[j]));
      } else if (failed[j]) {
        result.failures.push_back(std::move(*failed[j]));
      }
    }
  }
  return result;
}

} // namespace rlff
