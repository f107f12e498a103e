#include <doctest.h>

#include <random>
#include <regex>

#include "rlff/reward.hpp"
#include "rlff/tagged_output.hpp"

using namespace rlff;

namespace {

FormatRule rule_of(std::string_view text)
{
  auto r = parse_tagged_output(text);
  REQUIRE_FALSE(is_format_ok(r));
  return std::get<FormatError>(r).rule;
}

std::size_t occurrences(const std::string& s, const std::string& needle)
{
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) {
    ++n;
  }
  return n;
}

// Independent reference: one of each tag, a whole-string regex for the
// layout, and some non-space text in each block.
bool reference_ok(const std::string& s)
{
  for (const char* tag : {"<think>", "</think>", "<response>", "</response>"}) {
    if (occurrences(s, tag) != 1) {
      return false;
    }
  }
  static const std::regex layout(R"(^\s*<think>([\s\S]*)</think>\s*<response>([\s\S]*)</response>\s*$)");
  static const std::regex nonblank(R"(\S)");
  std::smatch m;
  if (!std::regex_match(s, m, layout)) {
    return false;
  }
  return std::regex_search(m[1].first, m[1].second, nonblank) && std::regex_search(m[2].first, m[2].second, nonblank);
}

} // namespace

TEST_CASE("canonical layout parses")
{
  auto r = parse_tagged_output("<think>T</think> <response>R</response>");
  REQUIRE(is_format_ok(r));
  const auto& out = std::get<TaggedOutput>(r);
  CHECK(out.think == "T");
  CHECK(out.response == "R");
  CHECK(out.format_ok);
}

TEST_CASE("surrounding and inner whitespace is allowed")
{
  auto r = parse_tagged_output("\n  <think>\n plan \n</think>\n\n<response>  hello there </response>\n");
  REQUIRE(is_format_ok(r));
  CHECK(std::get<TaggedOutput>(r).think == "plan");
  CHECK(std::get<TaggedOutput>(r).response == "hello there");
}

TEST_CASE("violations map to rules")
{
  CHECK(rule_of("<response>R</response>") == FormatRule::MissingThink);
  CHECK(rule_of("<think>T</think>") == FormatRule::MissingResponse);
  CHECK(rule_of("<think>T</think><think>U</think><response>R</response>") == FormatRule::DuplicateTag);
  CHECK(rule_of("<response>R</response><think>T</think>") == FormatRule::WrongOrder);
  CHECK(rule_of("hi <think>T</think><response>R</response>") == FormatRule::TextOutsideTags);
  CHECK(rule_of("<think>T</think> and <response>R</response>") == FormatRule::TextOutsideTags);
  CHECK(rule_of("<think>T</think><response>R</response>.") == FormatRule::TextOutsideTags);
  CHECK(rule_of("<think> </think><response>R</response>") == FormatRule::EmptyThink);
  CHECK(rule_of("<think>T</think><response>\n</response>") == FormatRule::EmptyResponse);
  CHECK(rule_of("") == FormatRule::MissingThink);
}

TEST_CASE("render round-trips through the parser")
{
  const TaggedOutput t{"why", "what", "", true};
  auto r = parse_tagged_output(render_tagged(t));
  REQUIRE(is_format_ok(r));
  CHECK(std::get<TaggedOutput>(r).think == "why");
  CHECK(std::get<TaggedOutput>(r).response == "what");

  const auto fb = untagged_fallback("  plain words \n");
  CHECK_FALSE(fb.format_ok);
  CHECK(fb.response == "plain words");
  CHECK(render_tagged(fb) == "  plain words \n");
}

TEST_CASE("format_reward agrees with the reference checker on random strings")
{
  const std::vector<std::string> pieces = {"<think>", "</think>", "<response>", "</response>", "a", "ok then",
                                           " ", "\n", "<", ">", "think", "/", "\t"};
  std::mt19937_64 rng(11);
  int positives = 0;
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    if (i % 3 == 0) {
      s = std::string(rng() % 2 ? " " : "") + "<think>" + pieces[4 + rng() % 9] + "</think>" +
          pieces[6 + rng() % 2] + "<response>" + pieces[4 + rng() % 9] + "</response>";
    } else {
      const int n = static_cast<int>(rng() % 9);
      for (int k = 0; k < n; ++k) {
        s += pieces[rng() % pieces.size()];
      }
    }
    const bool want = reference_ok(s);
    positives += want;
    CHECK_MESSAGE(format_reward(s) == static_cast<int>(want), s);
  }
  CHECK(positives > 100);
}

TEST_CASE("trim and blank helpers")
{
  CHECK(trim("  a b\t\n") == "a b");
  CHECK(trim(" \n ") == "");
  CHECK(is_blank(" \t\n"));
  CHECK_FALSE(is_blank(" x "));
}
