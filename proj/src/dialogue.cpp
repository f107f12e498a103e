#include "rlff/dialogue.hpp"

#include "rlff/errors.hpp"

namespace rlff {

const char* to_string(Speaker s) { return s == Speaker::System ? "system" : "user"; }

Speaker speaker_from_string(const std::string& s)
{
  if (s == "system") {
    return Speaker::System;
  }
  if (s == "user") {
    return Speaker::User;
  }
  throw InvalidValue("unknown speaker '" + s + "'");
}

void ScenarioDescription::validate() const
{
  if (is_blank(problem_type)) {
    throw InvalidValue("scenario problem_type is empty");
  }
  if (is_blank(situation)) {
    throw InvalidValue("scenario situation is empty");
  }
}

Utterance system_turn(std::string text)
{
  Utterance u;
  u.speaker = Speaker::System;
  u.text = std::move(text);
  return u;
}

Utterance system_turn(const TaggedOutput& out)
{
  Utterance u;
  u.speaker = Speaker::System;
  u.text = out.response;
  u.tagged = out;
  return u;
}

Utterance user_turn(std::string text)
{
  Utterance u;
  u.speaker = Speaker::User;
  u.text = std::move(text);
  return u;
}

ConversationContext::ConversationContext(ScenarioDescription scenario) : scenario_(std::move(scenario)) {}

ConversationContext::ConversationContext(ScenarioDescription scenario, std::vector<Utterance> turns)
  : scenario_(std::move(scenario))
{
  turns_.reserve(turns.size());
  for (std::size_t i = 0; i < turns.size(); ++i) {
    auto& u = turns[i];
    if (u.turn_index != i) {
      throw InvalidValue("turn_index " + std::to_string(u.turn_index) + " at position " + std::to_string(i));
    }
    if (is_blank(u.text)) {
      throw InvalidValue("blank utterance at turn " + std::to_string(i));
    }
    if (i > 0 && turns_.back().speaker == u.speaker) {
      throw AlternationViolation("consecutive " + std::string(to_string(u.speaker)) + " turns at " +
                                 std::to_string(i));
    }
    turns_.push_back(std::move(u));
  }
}

ConversationContext append_turn(const ConversationContext& ctx, Utterance u)
{
  if (!ctx.turns_.empty() && ctx.turns_.back().speaker == u.speaker) {
    throw AlternationViolation("cannot append a " + std::string(to_string(u.speaker)) + " turn after another");
  }
  if (is_blank(u.text)) {
    throw InvalidValue("blank utterance");
  }
  ConversationContext out = ctx;
  u.turn_index = out.turns_.size();
  out.turns_.push_back(std::move(u));
  return out;
}

std::vector<ChatMessage> render_history(const ConversationContext& ctx)
{
  std::vector<ChatMessage> out;
  out.reserve(ctx.size());
  for (const auto& u : ctx.turns()) {
    out.push_back({u.speaker == Speaker::System ? "assistant" : "user", u.text});
  }
  return out;
}

ConversationContext Trajectory::full_context() const
{
  auto ctx = append_turn(base, system_turn(seed_response));
  for (const auto& u : continuation) {
    ctx = append_turn(ctx, u);
  }
  return ctx;
}

} // namespace rlff
