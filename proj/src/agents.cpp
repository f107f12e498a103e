#include "rlff/agents.hpp"

#include <cctype>

#include "rlff/errors.hpp"
#include "rlff/log.hpp"
#include "rlff/random.hpp"

namespace rlff {

// ---------------------------------------------------------------------------
// Critic levels

double level_to_scalar(CriticLevel level)
{
  switch (level) {
    case CriticLevel::SignificantlyWorse: return -1.0;
    case CriticLevel::ModeratelyWorse: return -0.5;
    case CriticLevel::SlightlyWorse: return -0.25;
    case CriticLevel::Same: return 0.0;
    case CriticLevel::SlightlyBetter: return 0.25;
    case CriticLevel::ModeratelyBetter: return 0.5;
    case CriticLevel::SignificantlyBetter: return 1.0;
  }
  return 0.0;
}

std::optional<CriticLevel> scalar_to_level(double value)
{
  for (auto level : kCriticLevels) {
    if (level_to_scalar(level) == value) {
      return level;
    }
  }
  return std::nullopt;
}

const char* level_name(CriticLevel level)
{
  switch (level) {
    case CriticLevel::SignificantlyWorse: return "Significantly Worse";
    case CriticLevel::ModeratelyWorse: return "Moderately Worse";
    case CriticLevel::SlightlyWorse: return "Slightly Worse";
    case CriticLevel::Same: return "Same";
    case CriticLevel::SlightlyBetter: return "Slightly Better";
    case CriticLevel::ModeratelyBetter: return "Moderately Better";
    case CriticLevel::SignificantlyBetter: return "Significantly Better";
  }
  return "?";
}

std::optional<CriticLevel> parse_critic_level(std::string_view reply)
{
  auto line = reply.substr(0, reply.find('\n'));
  // Normalize to " word word ... " so phrase matches respect word boundaries.
  std::string norm = " ";
  for (char c : line) {
    const auto uc = static_cast<unsigned char>(c);
    const bool word = std::isalnum(uc) != 0;
    if (word) {
      norm += static_cast<char>(std::tolower(uc));
    } else if (norm.back() != ' ') {
      norm += ' ';
    }
  }
  if (norm.back() != ' ') {
    norm += ' ';
  }

  std::optional<CriticLevel> best;
  std::size_t best_pos = std::string::npos;
  std::size_t best_len = 0;
  for (auto level : kCriticLevels) {
    std::string phrase = " ";
    for (const char* p = level_name(level); *p != '\0'; ++p) {
      phrase += static_cast<char>(std::tolower(static_cast<unsigned char>(*p)));
    }
    phrase += ' ';
    const auto pos = norm.find(phrase);
    if (pos == std::string::npos) {
      continue;
    }
    if (pos < best_pos || (pos == best_pos && phrase.size() > best_len)) {
      best = level;
      best_pos = pos;
      best_len = phrase.size();
    }
  }
  return best;
}

std::string strip_protocol_tags(std::string_view text)
{
  std::string s(text);
  for (std::string_view tag : {"<think>", "</think>", "<response>", "</response>"}) {
    s = replace_all(std::move(s), tag, "");
  }
  return trim(s);
}

// ---------------------------------------------------------------------------
// SystemAgent

SystemAgent::SystemAgent(std::shared_ptr<ChatBackend> backend, PromptSet prompts, int format_retries)
  : backend_(std::move(backend)), prompts_(std::move(prompts)), format_retries_(format_retries)
{
  if (!backend_) {
    throw InvalidValue("system agent needs a backend");
  }
  if (format_retries_ < 0) {
    throw InvalidValue("format_retries must be >= 0");
  }
}

ChatRequest SystemAgent::build_request(const ConversationContext& ctx, const SamplingParams& sampling) const
{
  ChatRequest req;
  req.system_prompt = prompts_.system_agent;
  req.messages = render_history(ctx);
  req.sampling = sampling;
  req.n_samples = 1;
  return req;
}

TaggedOutput SystemAgent::respond(const ConversationContext& ctx, const SamplingParams& sampling) const
{
  if (!ctx.empty() && ctx.back().speaker != Speaker::User) {
    throw AlternationViolation("system agent called after a System turn");
  }
  auto req = build_request(ctx, sampling);
  std::string raw;
  for (int attempt = 0; attempt <= format_retries_; ++attempt) {
    if (attempt > 0 && sampling.seed) {
      req.sampling.seed = derive_seed(*sampling.seed, 0xf0, static_cast<std::uint64_t>(attempt));
    }
    raw = backend_->chat_complete(req).front();
    auto parsed = parse_tagged_output(raw);
    if (auto* out = std::get_if<TaggedOutput>(&parsed)) {
      return std::move(*out);
    }
    log::debug("system agent format error: " + std::get<FormatError>(parsed).message);
  }
  if (is_blank(raw)) {
    throw BackendUnavailable(backend_->id() + ": empty system completion");
  }
  return untagged_fallback(raw);
}

// ---------------------------------------------------------------------------
// UserSimulator

UserSimulator::UserSimulator(std::shared_ptr<ChatBackend> backend, PromptSet prompts)
  : backend_(std::move(backend)), prompts_(std::move(prompts))
{
  if (!backend_) {
    throw InvalidValue("user simulator needs a backend");
  }
}

ChatRequest UserSimulator::build_request(const ConversationContext& ctx, const SamplingParams& sampling) const
{
  const auto& scenario = ctx.scenario();
  ChatRequest req;
  req.system_prompt = prompts_.user_simulator_system;
  req.messages.push_back({"user", fill_scenario_slots(prompts_.user_simulator_user, scenario, MissingEmotion::Omit)});
  const auto opener = fill_scenario_slots(prompts_.user_simulator_opener, scenario, MissingEmotion::Omit);
  req.messages.push_back({"assistant", opener});
  // Roles are mirrored: the simulator speaks as "assistant".
  for (const auto& u : ctx.turns()) {
    if (u.turn_index == 0 && u.speaker == Speaker::User && u.text == opener) {
      continue; // an episode opener is already the seeded assistant turn
    }
    req.messages.push_back({u.speaker == Speaker::System ? "user" : "assistant", u.text});
  }
  req.sampling = sampling;
  req.n_samples = 1;
  return req;
}

Utterance UserSimulator::reply(const ConversationContext& ctx, const SamplingParams& sampling) const
{
  if (ctx.empty() || ctx.back().speaker != Speaker::System) {
    throw AlternationViolation("user simulator called without a preceding System turn");
  }
  auto text = strip_protocol_tags(backend_->chat_complete(build_request(ctx, sampling)).front());
  if (text.empty()) {
    throw BackendUnavailable(backend_->id() + ": empty user-simulator completion");
  }
  return user_turn(std::move(text));
}

// ---------------------------------------------------------------------------
// CriticAgent

CriticAgent::CriticAgent(std::shared_ptr<ChatBackend> backend, PromptSet prompts)
  : backend_(std::move(backend)), prompts_(std::move(prompts))
{
  if (!backend_) {
    throw InvalidValue("critic needs a backend");
  }
}

ChatRequest CriticAgent::build_request(const ConversationContext& ctx, const SamplingParams& sampling, int n) const
{
  ChatRequest req;
  req.system_prompt = prompts_.critic_system;
  auto user = fill_scenario_slots(prompts_.critic_user, ctx.scenario(), MissingEmotion::LiteralNone);
  req.messages.push_back({"user", replace_all(std::move(user), "[conversation]", render_transcript(ctx))});
  req.sampling = sampling;
  req.n_samples = n;
  return req;
}

CriticJudgement CriticAgent::judge(const ConversationContext& ctx, const CriticConfig& cfg) const
{
  if (cfg.samples < 1) {
    throw InvalidValue("critic sample count must be >= 1");
  }
  if (ctx.size() < 2) {
    throw InvalidValue("critic needs at least one full exchange");
  }
  const auto replies = backend_->chat_complete(build_request(ctx, cfg.sampling, cfg.samples));

  CriticJudgement out;
  double sum = 0.0;
  for (std::size_t i = 0; i < replies.size(); ++i) {
    auto level = parse_critic_level(replies[i]);
    if (!level) {
      log::warn("unparsable critic verdict, redrawing: \"" + replies[i].substr(0, 80) + "\"");
      auto sampling = cfg.sampling;
      sampling.seed = derive_seed(cfg.sampling.seed.value_or(0), 0xc7, i);
      level = parse_critic_level(backend_->chat_complete(build_request(ctx, sampling, 1)).front());
    }
    if (!level) {
      log::warn("critic verdict dropped after redraw");
      ++out.dropped;
      continue;
    }
    out.levels.push_back(*level);
    sum += level_to_scalar(*level);
  }
  if (out.levels.empty()) {
    throw UnparsableVerdict("no parsable critic verdict among " + std::to_string(replies.size()) + " samples");
  }
  out.reward = sum / static_cast<double>(out.levels.size());
  return out;
}

} // namespace rlff
