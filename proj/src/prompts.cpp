#include "rlff/prompts.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "rlff/errors.hpp"

namespace rlff {

namespace fs = std::filesystem;

namespace {

std::string read_template(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw IoError("cannot read prompt template " + p.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  auto s = ss.str();
  // Editors append a final newline; templates never end with one.
  if (!s.empty() && s.back() == '\n') {
    s.pop_back();
  }
  return s;
}

} // namespace

PromptSet PromptSet::load(const fs::path& dir)
{
  if (!fs::is_directory(dir)) {
    throw ConfigError("prompt directory not found: " + dir.string());
  }
  auto p = defaults();
  auto maybe = [&](const char* name, std::string& slot) {
    const auto file = dir / (std::string(name) + ".txt");
    if (fs::exists(file)) {
      slot = read_template(file);
    }
  };
  maybe("system_agent", p.system_agent);
  maybe("user_simulator_system", p.user_simulator_system);
  maybe("user_simulator_user", p.user_simulator_user);
  maybe("user_simulator_opener", p.user_simulator_opener);
  maybe("critic_system", p.critic_system);
  maybe("critic_user", p.critic_user);
  maybe("reward_model_input", p.reward_model_input);
  return p;
}

std::map<std::string, std::string> PromptSet::named() const
{
  return {
    {"critic_system", critic_system},
    {"critic_user", critic_user},
    {"reward_model_input", reward_model_input},
    {"system_agent", system_agent},
    {"user_simulator_opener", user_simulator_opener},
    {"user_simulator_system", user_simulator_system},
    {"user_simulator_user", user_simulator_user},
  };
}

std::string PromptSet::content_hash() const
{
  std::string manifest;
  for (const auto& [name, text] : named()) {
    manifest += name;
    manifest += '\0';
    manifest += git_blob_sha1(text);
    manifest += '\n';
  }
  return sha1_hex(manifest);
}

std::string replace_all(std::string s, std::string_view slot, std::string_view value)
{
  if (slot.empty()) {
    return s;
  }
  for (auto pos = s.find(slot); pos != std::string::npos; pos = s.find(slot, pos + value.size())) {
    s.replace(pos, slot.size(), value);
  }
  return s;
}

std::string fill_scenario_slots(std::string tmpl, const ScenarioDescription& scenario, MissingEmotion missing)
{
  constexpr std::string_view kEmotion = "[emotion_type]";
  if (scenario.emotion_type) {
    tmpl = replace_all(std::move(tmpl), kEmotion, *scenario.emotion_type);
  } else if (missing == MissingEmotion::LiteralNone) {
    tmpl = replace_all(std::move(tmpl), kEmotion, "None");
  } else {
    for (auto pos = tmpl.find(kEmotion); pos != std::string::npos; pos = tmpl.find(kEmotion)) {
      // Erase the slot, the whitespace before it and the preceding word.
      auto begin = pos;
      while (begin > 0 && std::isspace(static_cast<unsigned char>(tmpl[begin - 1]))) {
        --begin;
      }
      while (begin > 0 && !std::isspace(static_cast<unsigned char>(tmpl[begin - 1]))) {
        --begin;
      }
      auto end = pos + kEmotion.size();
      while (end < tmpl.size() && tmpl[end] == ' ') {
        ++end;
      }
      tmpl.erase(begin, end - begin);
    }
  }
  tmpl = replace_all(std::move(tmpl), "[problem_type]", scenario.problem_type);
  return replace_all(std::move(tmpl), "[situation]", scenario.situation);
}

std::string render_transcript(const ConversationContext& ctx)
{
  std::string out;
  for (const auto& u : ctx.turns()) {
    if (!out.empty()) {
      out += '\n';
    }
    out += u.speaker == Speaker::System ? "Therapist: " : "Patient: ";
    out += u.text;
  }
  return out;
}

std::string render_reward_input(const PromptSet& prompts, const ConversationContext& ctx, std::string_view response)
{
  auto text = replace_all(prompts.reward_model_input, "{conversation context}", render_transcript(ctx));
  return replace_all(std::move(text), "{system response}", response);
}

std::string sha1_hex(std::string_view data)
{
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha1(), nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 0xf];
  }
  return hex;
}

std::string git_blob_sha1(std::string_view content)
{
  std::string blob = "blob " + std::to_string(content.size());
  blob += '\0';
  blob.append(content);
  return sha1_hex(blob);
}

} // namespace rlff
