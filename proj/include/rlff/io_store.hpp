#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlff/dialogue.hpp"
#include "rlff/errors.hpp"
#include "rlff/evaluation.hpp"
#include "rlff/reward.hpp"
#include "rlff/simulator.hpp"

namespace rlff {

inline constexpr int kSchemaVersion = 1;

enum class SplitName
{
  Train,
  Dev,
  Test,
};

const char* to_string(SplitName s);

struct Dialogue
{
  std::string id;
  ConversationContext context; // full dialogue, scenario included
};

struct DatasetSplit
{
  SplitName name = SplitName::Test;
  std::vector<Dialogue> dialogues;
};

struct ExtesSplits
{
  DatasetSplit train;
  DatasetSplit dev;
  DatasetSplit test;
};

/// Public ESConv JSON: a list of {emotion_type, problem_type, situation,
/// dialog: [{speaker: seeker|supporter, content, annotation?}]}. Strategy
/// annotations are ignored; consecutive same-speaker messages are merged with
/// newlines.
DatasetSplit load_esconv(const std::filesystem::path& path, SplitName name = SplitName::Test);

/// ExTES JSON: a list of {scene, description, content: [{User: ...} |
/// {AI: ..., "AI Strategy": ...}]}. Split 8:1:1 by seeded shuffle: train =
/// floor(0.8 n), the remainder halved with dev = floor, test = rest.
ExtesSplits load_extes(const std::filesystem::path& path, std::uint64_t split_seed);

struct SplitSizes
{
  std::size_t train;
  std::size_t dev;
  std::size_t test;
};
SplitSizes extes_split_sizes(std::size_t n);

/// Simulation contexts from one dialogue: prefixes that end in a User turn
/// right before a System turn and hold at least one exchange. The last
/// `per_dialogue` such boundaries are kept, earliest first.
std::vector<ContextEntry> extract_contexts(const Dialogue& dialogue, int per_dialogue = 1);

// ---------------------------------------------------------------------------
// Persisted rows

/// One D_r line.
struct DrRow
{
  std::string context_id;
  ScenarioDescription scenario;
  std::vector<Utterance> turns;
  std::string candidate_think;
  std::string candidate_response;
  double terminal_reward = 0.0;
  int turns_used = 0;
  double future_reward = 0.0;
  std::uint64_t seed = 0;

  static DrRow from_record(const RewardRecord& rec);
  ConversationContext context() const;
  /// Candidate as the scorer sees it (tagged form when think is present).
  std::string candidate_text() const;

  bool operator==(const DrRow&) const = default;
};

void to_json(nlohmann::json& j, const ScenarioDescription& s);
void from_json(const nlohmann::json& j, ScenarioDescription& s);
void to_json(nlohmann::json& j, const Utterance& u);
void from_json(const nlohmann::json& j, Utterance& u);
void to_json(nlohmann::json& j, const DrRow& r);
void from_json(const nlohmann::json& j, DrRow& r);
void to_json(nlohmann::json& j, const LabeledPair& p);
void from_json(const nlohmann::json& j, LabeledPair& p);
void to_json(nlohmann::json& j, const EpisodeResult& e);
void from_json(const nlohmann::json& j, EpisodeResult& e);
void to_json(nlohmann::json& j, const EvalReport& r);

/// One JSON object per line, each stamped with schema_version.
template<typename T>
void write_jsonl(const std::vector<T>& records, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  for (const auto& r : records) {
    nlohmann::json j = r;
    out << j.dump() << '\n';
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

/// Throws SchemaError naming the 1-based line on malformed JSON, missing
/// fields or an unknown schema_version.
template<typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const InvalidValue& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scorer persistence

void save_scorer(const FeaturizedScorer& scorer, const std::filesystem::path& path);
FeaturizedScorer load_scorer(const std::filesystem::path& path, const PromptSet& prompts = PromptSet::defaults());

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest
{
  std::string command;
  nlohmann::json config;
  nlohmann::json seeds;
  nlohmann::json backends;
  std::string prompt_assets_hash;
  std::string created_at;
  std::string completed_at;
  std::string status = "running";

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::string utc_timestamp();

void write_manifest(const RunManifest& m, const std::filesystem::path& run_dir);
std::optional<RunManifest> read_manifest(const std::filesystem::path& run_dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace rlff
