#include <doctest.h>

#include "rlff/errors.hpp"
#include "rlff/log.hpp"
#include "rlff/simulator.hpp"
#include "support.hpp"

using namespace rlff;
using namespace rlff::test;

namespace {

std::vector<std::string> repeat(const std::string& s, int n) { return std::vector<std::string>(n, s); }

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts)
{
  std::vector<std::string> out;
  for (const auto& p : parts) {
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

SimulationConfig config(int m, int T, int l)
{
  SimulationConfig c;
  c.m = m;
  c.max_turns = T;
  c.critic.samples = l;
  c.base_seed = 100;
  return c;
}

} // namespace

TEST_CASE("future-oriented reward arithmetic")
{
  CHECK(future_oriented_reward(0.8, 3) == doctest::Approx(0.5 * (0.8 + 1.0 / 3.0)).epsilon(1e-15));
  CHECK(future_oriented_reward(1.0, 2) == 0.75);
  CHECK(future_oriented_reward(0.0, 4) == 0.125);
  CHECK(future_oriented_reward(-1.0, 9) == doctest::Approx((-1.0 + 1.0 / 9.0) / 2.0));
  CHECK_THROWS_AS(future_oriented_reward(0.5, 0), InvalidValue);
}

TEST_CASE("rollout stops once the critic exceeds the threshold")
{
  // k=1: five "Same" -> 0; k=2: four "Significantly Better" + one "Same" -> 0.8
  auto a = scripted_agents({tagged("a", "s1"), tagged("b", "s2")}, {"u0", "u1", "u2"},
                           concat({repeat("Same", 5), repeat("Significantly Better", 4), {"Same"}}));
  const auto cand = TaggedOutput{"why", "candidate reply", "", true};
  const auto traj = rollout(a.agents, short_context(), cand, config(1, 8, 5), 7);
  CHECK(traj.step_rewards.size() == 2);
  CHECK(traj.step_rewards[0].reward == 0.0);
  CHECK(traj.terminal_reward == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(traj.turns_used == 3);
  CHECK(future_oriented_reward(traj.terminal_reward, traj.turns_used) == doctest::Approx(0.5666666666666667));
  REQUIRE(traj.continuation.size() == 5);
  CHECK(traj.continuation[0].text == "u0");
  CHECK(traj.continuation[1].text == "s1");
  CHECK(traj.continuation[4].text == "u2");
  CHECK(a.system->remaining() == 0);
  CHECK(a.critic->remaining() == 0);

  // The candidate is visible to every later call.
  for (const auto& req : a.system->requests()) {
    CHECK(req.messages[3] == ChatMessage{"assistant", "candidate reply"});
  }
  CHECK(a.critic->requests()[1].messages[0].content.find("Therapist: candidate reply") != std::string::npos);
}

TEST_CASE("rollout that never succeeds runs to T")
{
  auto a = scripted_agents(repeat(tagged("t", "s"), 3), repeat("u", 4), repeat("Same", 3));
  const auto traj = rollout(a.agents, short_context(), {"t", "c", "", true}, config(1, 3, 1), 1);
  CHECK(traj.turns_used == 4);
  CHECK(traj.terminal_reward == 0.0);
  CHECK(future_oriented_reward(traj.terminal_reward, traj.turns_used) == 0.125);
}

TEST_CASE("earliest stop and the exact-threshold case")
{
  auto a = scripted_agents({tagged("t", "s")}, {"u0", "u1"}, {"Significantly Better"});
  auto traj = rollout(a.agents, short_context(), {"t", "c", "", true}, config(1, 8, 1), 1);
  CHECK(traj.turns_used == 2);
  CHECK(future_oriented_reward(traj.terminal_reward, traj.turns_used) == 0.75);

  // 0.5 does not exceed 0.5: the rollout continues.
  auto b = scripted_agents(repeat(tagged("t", "s"), 2), repeat("u", 3), {"Moderately Better", "Significantly Better"});
  traj = rollout(b.agents, short_context(), {"t", "c", "", true}, config(1, 8, 1), 1);
  CHECK(traj.turns_used == 3);
  CHECK(traj.terminal_reward == 1.0);
}

TEST_CASE("candidates use base_seed + j")
{
  auto a = scripted_agents({tagged("a", "0"), tagged("b", "1"), tagged("c", "2")}, {}, {});
  const auto out = sample_candidates(a.agents, short_context(), config(3, 8, 1));
  REQUIRE(out.size() == 3);
  CHECK(out[2].response == "2");
  const auto reqs = a.system->requests();
  for (int j = 0; j < 3; ++j) {
    CHECK(reqs[j].sampling.seed == 100u + j);
  }
}

TEST_CASE("dataset construction records every candidate in order")
{
  log::set_sink(nullptr);
  // m = 2, T = 2, l = 1. Candidate 0: stops at k=1 with 1.0. Candidate 1:
  // 0 then 0.25 at T.
  auto a = scripted_agents({tagged("t", "c0"), tagged("t", "x"), tagged("t", "c1"), tagged("t", "y"), tagged("t", "z")},
                           {"u", "u", "u", "u", "u"}, {"Significantly Better", "Same", "Slightly Better"});
  const std::vector<ContextEntry> ctxs = {{"ctx-a", short_context()}};
  const auto res = build_reward_dataset(a.agents, ctxs, config(2, 2, 1), 1);
  REQUIRE(res.records.size() == 2);
  CHECK(res.failures.empty());
  CHECK(res.records[0].candidate.response == "c0");
  CHECK(res.records[0].future_reward == 0.75);
  CHECK(res.records[1].candidate.response == "c1");
  CHECK(res.records[1].turns_used == 3);
  CHECK(res.records[1].future_reward == doctest::Approx((0.25 + 1.0 / 3.0) / 2.0));
  CHECK(res.records[1].seed == 101);
}

TEST_CASE("backend failures are excluded, not fatal")
{
  log::set_sink(nullptr);
  auto a = scripted_agents({tagged("t", "c0"), tagged("t", "x")}, {"u", "u"}, {"Significantly Better"});
  const std::vector<ContextEntry> ctxs = {{"ctx-a", short_context()}};
  const auto res = build_reward_dataset(a.agents, ctxs, config(2, 2, 1), 1);
  CHECK(res.records.size() == 1);
  REQUIRE(res.failures.size() == 1);
  CHECK(res.failures[0].candidate_index == 1);
}

TEST_CASE("rule backends give identical datasets for any worker count")
{
  log::set_sink(nullptr);
  const auto prompts = PromptSet::defaults();
  auto sys = std::make_shared<RuleBackend>(std::vector<RuleBackend::Rule>{},
                                           std::vector<std::string>{tagged("a", "one"), tagged("b", "two"), "untagged"});
  auto usr = std::make_shared<RuleBackend>(std::vector<RuleBackend::Rule>{}, std::vector<std::string>{"ok", "hmm"});
  auto crt = std::make_shared<RuleBackend>(
    std::vector<RuleBackend::Rule>{},
    std::vector<std::string>{"Same", "Slightly Better", "Moderately Better", "Significantly Better", "Slightly Worse"});
  const AgentSet agents{SystemAgent(sys, prompts), UserSimulator(usr, prompts), CriticAgent(crt, prompts)};
  const std::vector<ContextEntry> ctxs = {{"a", short_context()}, {"b", short_context()}};
  auto cfg = config(4, 8, 3);

  const auto one = build_reward_dataset(agents, ctxs, cfg, 1);
  const auto four = build_reward_dataset(agents, ctxs, cfg, 4);
  REQUIRE(one.records.size() == 8);
  REQUIRE(four.records.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(one.records[i].future_reward == four.records[i].future_reward);
    CHECK(one.records[i].candidate == four.records[i].candidate);
    CHECK(one.records[i].trajectory.full_context() == four.records[i].trajectory.full_context());
  }
}

TEST_CASE("configuration validation")
{
  auto c = config(0, 8, 1);
  CHECK_THROWS_AS(c.validate(), InvalidValue);
  c = config(1, 0, 1);
  CHECK_THROWS_AS(c.validate(), InvalidValue);
  c = config(1, 8, 0);
  CHECK_THROWS_AS(c.validate(), InvalidValue);
}
