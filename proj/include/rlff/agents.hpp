#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlff/dialogue.hpp"
#include "rlff/llm_backend.hpp"
#include "rlff/prompts.hpp"

namespace rlff {

enum class CriticLevel
{
  SignificantlyWorse,
  ModeratelyWorse,
  SlightlyWorse,
  Same,
  SlightlyBetter,
  ModeratelyBetter,
  SignificantlyBetter,
};

inline constexpr std::array<CriticLevel, 7> kCriticLevels = {
  CriticLevel::SignificantlyWorse, CriticLevel::ModeratelyWorse,  CriticLevel::SlightlyWorse,
  CriticLevel::Same,               CriticLevel::SlightlyBetter,   CriticLevel::ModeratelyBetter,
  CriticLevel::SignificantlyBetter,
};

/// -1.0, -0.5, -0.25, 0, 0.25, 0.5, 1.0 in enum order.
double level_to_scalar(CriticLevel level);
/// Inverse of level_to_scalar; nullopt for any other value.
std::optional<CriticLevel> scalar_to_level(double value);
/// Display name as written in the critic prompt, e.g. "Moderately Better".
const char* level_name(CriticLevel level);

/// Lower-cases the first line, maps punctuation to spaces and returns the
/// level phrase occurring earliest (longest on ties). nullopt if none occurs.
std::optional<CriticLevel> parse_critic_level(std::string_view reply);

struct CriticConfig
{
  int samples = 1; // l
  SamplingParams sampling;

  static CriticConfig simulation_default() { return {1, {}}; }
  static CriticConfig evaluation_default() { return {10, {}}; }
};

struct CriticJudgement
{
  double reward = 0.0; // mean of the parsed levels' scalars
  std::vector<CriticLevel> levels;
  int dropped = 0; // samples unparsable even after one redraw
};

/// M_sys: therapist prompt plus history, output parsed as tagged text.
class SystemAgent
{
public:
  SystemAgent(std::shared_ptr<ChatBackend> backend, PromptSet prompts, int format_retries = 2);

  ChatRequest build_request(const ConversationContext& ctx, const SamplingParams& sampling) const;

  /// Requires the context to be empty or end with a User turn. After
  /// `format_retries` failed re-draws returns an untagged fallback
  /// (format_ok == false) so rollouts can continue.
  TaggedOutput respond(const ConversationContext& ctx, const SamplingParams& sampling) const;

  ChatBackend& backend() const { return *backend_; }

private:
  std::shared_ptr<ChatBackend> backend_;
  PromptSet prompts_;
  int format_retries_;
};

/// U: patient role-play. The simulator sees therapist turns as "user" and its
/// own turns as "assistant", preceded by the scenario opener.
class UserSimulator
{
public:
  UserSimulator(std::shared_ptr<ChatBackend> backend, PromptSet prompts);

  ChatRequest build_request(const ConversationContext& ctx, const SamplingParams& sampling) const;

  /// Requires the last turn to be a System turn. Protocol tags are stripped
  /// from the reply.
  Utterance reply(const ConversationContext& ctx, const SamplingParams& sampling) const;

private:
  std::shared_ptr<ChatBackend> backend_;
  PromptSet prompts_;
};

/// M_crt: seven-level judgement of whether the patient's issue is solved.
class CriticAgent
{
public:
  CriticAgent(std::shared_ptr<ChatBackend> backend, PromptSet prompts);

  ChatRequest build_request(const ConversationContext& ctx, const SamplingParams& sampling, int n) const;

  /// Draws cfg.samples verdicts and averages their scalar values. An
  /// unparsable reply is redrawn once and then dropped; throws
  /// UnparsableVerdict if nothing parses.
  CriticJudgement judge(const ConversationContext& ctx, const CriticConfig& cfg) const;

private:
  std::shared_ptr<ChatBackend> backend_;
  PromptSet prompts_;
};

struct AgentSet
{
  SystemAgent system;
  UserSimulator user;
  CriticAgent critic;
};

/// Reply normalizer used for the user simulator: strips the four protocol
/// tags and surrounding whitespace.
std::string strip_protocol_tags(std::string_view text);

} // namespace rlff
