#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "rlff/tagged_output.hpp"

namespace rlff {

enum class Speaker
{
  System,
  User,
};

const char* to_string(Speaker s);
Speaker speaker_from_string(const std::string& s);

struct ScenarioDescription
{
  std::optional<std::string> emotion_type; // absent for ExTES
  std::string problem_type;
  std::string situation;

  /// Throws InvalidValue when problem_type or situation is blank.
  void validate() const;

  bool operator==(const ScenarioDescription&) const = default;
};

struct Utterance
{
  Speaker speaker = Speaker::System;
  std::string text;
  std::size_t turn_index = 0;
  // Only System turns carry this; the reasoning part never leaves the turn.
  std::optional<TaggedOutput> tagged;

  bool operator==(const Utterance&) const = default;
};

Utterance system_turn(std::string text);
Utterance system_turn(const TaggedOutput& out);
Utterance user_turn(std::string text);

/// Scenario metadata plus strictly alternating turns. Immutable: extending a
/// context returns a new value, so concurrent rollouts can share a base.
class ConversationContext
{
public:
  ConversationContext() = default;
  explicit ConversationContext(ScenarioDescription scenario);

  /// Validates alternation, non-blank text and consecutive turn indices.
  ConversationContext(ScenarioDescription scenario, std::vector<Utterance> turns);

  const ScenarioDescription& scenario() const { return scenario_; }
  const std::vector<Utterance>& turns() const { return turns_; }
  std::size_t size() const { return turns_.size(); }
  bool empty() const { return turns_.empty(); }
  const Utterance& back() const { return turns_.back(); }

  bool operator==(const ConversationContext&) const = default;

private:
  friend ConversationContext append_turn(const ConversationContext&, Utterance);

  ScenarioDescription scenario_;
  std::vector<Utterance> turns_;
};

/// Returns a copy with `u` appended; `u.turn_index` is reassigned to the new
/// position. Throws AlternationViolation if the speaker repeats.
ConversationContext append_turn(const ConversationContext& ctx, Utterance u);

struct ChatMessage
{
  std::string role; // "system", "user" or "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

/// One message per turn: System -> "assistant", User -> "user". System turns
/// contribute only their response text.
std::vector<ChatMessage> render_history(const ConversationContext& ctx);

struct StepReward
{
  int step = 0;
  double reward = 0.0;

  bool operator==(const StepReward&) const = default;
};

/// Simulated continuation C^f of a base context after a seed response.
struct Trajectory
{
  ConversationContext base;
  TaggedOutput seed_response;
  std::vector<Utterance> continuation;
  std::vector<StepReward> step_rewards;
  double terminal_reward = 0.0;
  int turns_used = 0;

  /// base + seed response + continuation as one context.
  ConversationContext full_context() const;
};

} // namespace rlff
