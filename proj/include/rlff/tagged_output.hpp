#pragma once

#include <string>
#include <string_view>
#include <variant>

namespace rlff {

/// A system turn split according to the <think>/<response> protocol.
///
/// `format_ok` is false only for fallback outputs built by the system agent
/// after exhausting its format retries; in that case `think` is empty and
/// `response` holds the trimmed raw text.
struct TaggedOutput
{
  std::string think;
  std::string response;
  std::string raw;
  bool format_ok = true;

  bool operator==(const TaggedOutput&) const = default;
};

enum class FormatRule
{
  MissingThink,
  MissingResponse,
  DuplicateTag,
  WrongOrder,
  TextOutsideTags,
  EmptyThink,
  EmptyResponse,
};

struct FormatError
{
  FormatRule rule;
  std::string message;
};

using ParseResult = std::variant<TaggedOutput, FormatError>;

/// Strict grammar: ws* <think>T</think> ws* <response>R</response> ws*,
/// where T and R contain none of the four tags and are non-blank.
ParseResult parse_tagged_output(std::string_view text);

inline bool is_format_ok(const ParseResult& r) { return std::holds_alternative<TaggedOutput>(r); }

/// Fallback wrapper for text that failed the grammar.
TaggedOutput untagged_fallback(std::string_view raw);

/// Re-serializes a well-formed output in canonical form.
std::string render_tagged(const TaggedOutput& out);

const char* to_string(FormatRule rule);

std::string trim(std::string_view s);
bool is_blank(std::string_view s);

} // namespace rlff
