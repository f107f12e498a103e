#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rlff/agents.hpp"
#include "rlff/dialogue.hpp"
#include "rlff/llm_backend.hpp"
#include "rlff/prompts.hpp"

namespace rlff::test {

inline ScenarioDescription scenario(bool with_emotion = true)
{
  ScenarioDescription s;
  if (with_emotion) {
    s.emotion_type = "anxiety";
  }
  s.problem_type = "job crisis";
  s.situation = "I was laid off last week.";
  return s;
}

/// user, system, user
inline ConversationContext short_context()
{
  auto c = append_turn(ConversationContext(scenario()), user_turn("I lost my job."));
  c = append_turn(c, system_turn("I am sorry. How are you holding up?"));
  return append_turn(c, user_turn("Not great, I cannot sleep."));
}

inline std::string tagged(const std::string& think, const std::string& response)
{
  return "<think>" + think + "</think> <response>" + response + "</response>";
}

struct ScriptedAgents
{
  std::shared_ptr<ScriptedBackend> system;
  std::shared_ptr<ScriptedBackend> user;
  std::shared_ptr<ScriptedBackend> critic;
  AgentSet agents;
};

inline ScriptedAgents scripted_agents(std::vector<std::string> sys, std::vector<std::string> usr,
                                      std::vector<std::string> crt)
{
  auto s = std::make_shared<ScriptedBackend>(std::move(sys), "sys");
  auto u = std::make_shared<ScriptedBackend>(std::move(usr), "user");
  auto c = std::make_shared<ScriptedBackend>(std::move(crt), "critic");
  const auto prompts = PromptSet::defaults();
  return {s, u, c, AgentSet{SystemAgent(s, prompts), UserSimulator(u, prompts), CriticAgent(c, prompts)}};
}

} // namespace rlff::test
