#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "rlff/dialogue.hpp"

namespace rlff {

/// Prompt templates for the three simulation roles and the reward-model
/// input. Defaults are compiled in from assets/prompts/*.txt.
struct PromptSet
{
  std::string system_agent;
  std::string user_simulator_system;
  std::string user_simulator_user;
  std::string user_simulator_opener;
  std::string critic_system;
  std::string critic_user;
  std::string reward_model_input;

  static PromptSet defaults();

  /// Defaults overridden by any `<name>.txt` present in `dir`.
  static PromptSet load(const std::filesystem::path& dir);

  /// Asset name -> template text, in a fixed order.
  std::map<std::string, std::string> named() const;

  /// SHA-1 over the git blob ids of every asset; identifies a prompt set in
  /// run manifests.
  std::string content_hash() const;
};

/// How an absent emotion_type enters a template.
enum class MissingEmotion
{
  Omit,        // drop the slot and the word before it ("about [emotion_type]")
  LiteralNone, // substitute "None"
};

std::string fill_scenario_slots(std::string tmpl, const ScenarioDescription& scenario, MissingEmotion missing);

/// Replaces every occurrence of `slot` with `value`.
std::string replace_all(std::string s, std::string_view slot, std::string_view value);

/// "Therapist: ..." / "Patient: ..." lines, response text only.
std::string render_transcript(const ConversationContext& ctx);

/// Table-3 style reward-model input for (context, candidate response).
std::string render_reward_input(const PromptSet& prompts, const ConversationContext& ctx,
                                std::string_view response);

/// git blob id: sha1("blob <len>\0" + content), lowercase hex.
std::string git_blob_sha1(std::string_view content);
std::string sha1_hex(std::string_view data);

} // namespace rlff
