#include "rlff/tagged_output.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace rlff {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kResponseOpen = "<response>";
constexpr std::string_view kResponseClose = "</response>";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

struct TagScan
{
  std::size_t count = 0;
  std::size_t first = std::string_view::npos;
};

TagScan scan(std::string_view text, std::string_view tag)
{
  TagScan s;
  for (auto pos = text.find(tag); pos != std::string_view::npos; pos = text.find(tag, pos + tag.size())) {
    if (s.count++ == 0) {
      s.first = pos;
    }
  }
  return s;
}

FormatError fail(FormatRule rule) { return FormatError{rule, to_string(rule)}; }

} // namespace

std::string trim(std::string_view s)
{
  auto b = std::find_if_not(s.begin(), s.end(), is_space);
  auto e = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
  return b < e ? std::string(b, e) : std::string{};
}

bool is_blank(std::string_view s) { return std::all_of(s.begin(), s.end(), is_space); }

const char* to_string(FormatRule rule)
{
  switch (rule) {
    case FormatRule::MissingThink: return "missing think block";
    case FormatRule::MissingResponse: return "missing response block";
    case FormatRule::DuplicateTag: return "duplicate tag";
    case FormatRule::WrongOrder: return "tags out of order";
    case FormatRule::TextOutsideTags: return "non-whitespace text outside tags";
    case FormatRule::EmptyThink: return "empty think block";
    case FormatRule::EmptyResponse: return "empty response block";
  }
  return "unknown";
}

ParseResult parse_tagged_output(std::string_view text)
{
  const std::array<TagScan, 4> tags = {
    scan(text, kThinkOpen), scan(text, kThinkClose), scan(text, kResponseOpen), scan(text, kResponseClose)};

  if (tags[0].count == 0 || tags[1].count == 0) {
    return fail(FormatRule::MissingThink);
  }
  if (tags[2].count == 0 || tags[3].count == 0) {
    return fail(FormatRule::MissingResponse);
  }
  for (const auto& t : tags) {
    if (t.count > 1) {
      return fail(FormatRule::DuplicateTag);
    }
  }
  const auto think_open = tags[0].first;
  const auto think_close = tags[1].first;
  const auto resp_open = tags[2].first;
  const auto resp_close = tags[3].first;
  // Each tag starts only after the previous one has fully ended.
  if (!(think_open + kThinkOpen.size() <= think_close && think_close + kThinkClose.size() <= resp_open &&
        resp_open + kResponseOpen.size() <= resp_close)) {
    return fail(FormatRule::WrongOrder);
  }

  const auto prefix = text.substr(0, think_open);
  const auto gap = text.substr(think_close + kThinkClose.size(), resp_open - think_close - kThinkClose.size());
  const auto suffix = text.substr(resp_close + kResponseClose.size());
  if (!is_blank(prefix) || !is_blank(gap) || !is_blank(suffix)) {
    return fail(FormatRule::TextOutsideTags);
  }

  const auto think_begin = think_open + kThinkOpen.size();
  const auto resp_begin = resp_open + kResponseOpen.size();
  TaggedOutput out;
  out.think = trim(text.substr(think_begin, think_close - think_begin));
  out.response = trim(text.substr(resp_begin, resp_close - resp_begin));
  out.raw = std::string(text);
  out.format_ok = true;
  if (out.think.empty()) {
    return fail(FormatRule::EmptyThink);
  }
  if (out.response.empty()) {
    return fail(FormatRule::EmptyResponse);
  }
  return out;
}

TaggedOutput untagged_fallback(std::string_view raw)
{
  TaggedOutput out;
  out.response = trim(raw);
  out.raw = std::string(raw);
  out.format_ok = false;
  return out;
}

std::string render_tagged(const TaggedOutput& out)
{
  if (!out.format_ok) {
    return out.raw;
  }
  std::string s;
  s.reserve(out.think.size() + out.response.size() + 40);
  s.append(kThinkOpen).append(out.think).append(kThinkClose);
  s.append(" ");
  s.append(kResponseOpen).append(out.response).append(kResponseClose);
  return s;
}

} // namespace rlff
