#include "rlff/io_store.hpp"

#include <chrono>
#include <ctime>
#include <numeric>
#include <sstream>

#include "rlff/random.hpp"

namespace rlff {

using json = nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(SplitName s)
{
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Dev: return "dev";
    case SplitName::Test: return "test";
  }
  return "?";
}

namespace {

json parse_file(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::string required_string(const json& rec, const char* field, std::size_t index)
{
  const auto it = rec.find(field);
  if (it == rec.end() || !it->is_string()) {
    throw SchemaError("record " + std::to_string(index) + ": missing string field '" + field + "'");
  }
  return it->get<std::string>();
}

// Folds consecutive same-speaker messages into one turn.
ConversationContext merge_turns(ScenarioDescription scenario, const std::vector<std::pair<Speaker, std::string>>& msgs,
                                std::size_t index)
{
  std::vector<Utterance> turns;
  for (const auto& [speaker, raw] : msgs) {
    auto text = trim(raw);
    if (text.empty()) {
      continue;
    }
    if (!turns.empty() && turns.back().speaker == speaker) {
      turns.back().text += "\n" + text;
      continue;
    }
    Utterance u;
    u.speaker = speaker;
    u.text = std::move(text);
    u.turn_index = turns.size();
    turns.push_back(std::move(u));
  }
  if (turns.empty()) {
    throw SchemaError("record " + std::to_string(index) + ": dialogue has no utterances");
  }
  try {
    scenario.validate();
    return ConversationContext(std::move(scenario), std::move(turns));
  } catch (const InvalidValue& e) {
    throw SchemaError("record " + std::to_string(index) + ": " + e.what());
  }
}

} // namespace

DatasetSplit load_esconv(const fs::path& path, SplitName name)
{
  const auto root = parse_file(path);
  if (!root.is_array()) {
    throw SchemaError(path.string() + ": expected a JSON array of dialogues");
  }
  DatasetSplit split;
  split.name = name;
  split.dialogues.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& rec = root[i];
    if (!rec.is_object()) {
      throw SchemaError("record " + std::to_string(i) + ": not an object");
    }
    ScenarioDescription scenario;
    scenario.emotion_type = required_string(rec, "emotion_type", i);
    scenario.problem_type = required_string(rec, "problem_type", i);
    scenario.situation = required_string(rec, "situation", i);

    const auto dialog = rec.find("dialog");
    if (dialog == rec.end() || !dialog->is_array()) {
      throw SchemaError("record " + std::to_string(i) + ": missing 'dialog' array");
    }
    std::vector<std::pair<Speaker, std::string>> msgs;
    for (const auto& m : *dialog) {
      const auto speaker = required_string(m, "speaker", i);
      Speaker s;
      if (speaker == "supporter") {
        s = Speaker::System;
      } else if (speaker == "seeker") {
        s = Speaker::User;
      } else {
        throw SchemaError("record " + std::to_string(i) + ": unknown speaker '" + speaker + "'");
      }
      msgs.emplace_back(s, required_string(m, "content", i));
    }
    split.dialogues.push_back(
      {std::string("esconv-") + to_string(name) + "-" + std::to_string(i), merge_turns(std::move(scenario), msgs, i)});
  }
  return split;
}

SplitSizes extes_split_sizes(std::size_t n)
{
  const std::size_t train = n * 8 / 10;
  const std::size_t dev = (n - train) / 2;
  return {train, dev, n - train - dev};
}

ExtesSplits load_extes(const fs::path& path, std::uint64_t split_seed)
{
  const auto root = parse_file(path);
  if (!root.is_array()) {
    throw SchemaError(path.string() + ": expected a JSON array of dialogues");
  }
  std::vector<Dialogue> all;
  all.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& rec = root[i];
    if (!rec.is_object()) {
      throw SchemaError("record " + std::to_string(i) + ": not an object");
    }
    ScenarioDescription scenario;
    scenario.problem_type = required_string(rec, "scene", i);
    scenario.situation = required_string(rec, "description", i);

    const auto content = rec.find("content");
    if (content == rec.end() || !content->is_array()) {
      throw SchemaError("record " + std::to_string(i) + ": missing 'content' array");
    }
    std::vector<std::pair<Speaker, std::string>> msgs;
    for (const auto& m : *content) {
      if (m.contains("User") && m["User"].is_string()) {
        msgs.emplace_back(Speaker::User, m["User"].get<std::string>());
      } else if (m.contains("AI") && m["AI"].is_string()) {
        msgs.emplace_back(Speaker::System, m["AI"].get<std::string>());
      } else {
        throw SchemaError("record " + std::to_string(i) + ": content entry has neither 'User' nor 'AI'");
      }
    }
    all.push_back({"extes-" + std::to_string(i), merge_turns(std::move(scenario), msgs, i)});
  }

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(split_seed);
  portable_shuffle(order, rng);

  const auto sizes = extes_split_sizes(all.size());
  ExtesSplits out;
  out.train.name = SplitName::Train;
  out.dev.name = SplitName::Dev;
  out.test.name = SplitName::Test;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& dst = k < sizes.train ? out.train : (k < sizes.train + sizes.dev ? out.dev : out.test);
    dst.dialogues.push_back(all[order[k]]);
  }
  return out;
}

std::vector<ContextEntry> extract_contexts(const Dialogue& dialogue, int per_dialogue)
{
  if (per_dialogue < 1) {
    throw InvalidValue("contexts per dialogue must be >= 1");
  }
  const auto& turns = dialogue.context.turns();
  std::vector<std::size_t> cuts;
  for (std::size_t i = 2; i < turns.size(); ++i) {
    if (turns[i].speaker == Speaker::System && turns[i - 1].speaker == Speaker::User) {
      cuts.push_back(i);
    }
  }
  if (cuts.size() > static_cast<std::size_t>(per_dialogue)) {
    cuts.erase(cuts.begin(), cuts.end() - per_dialogue);
  }
  std::vector<ContextEntry> out;
  for (auto cut : cuts) {
    std::vector<Utterance> prefix(turns.begin(), turns.begin() + static_cast<std::ptrdiff_t>(cut));
    out.push_back({dialogue.id + "-t" + std::to_string(cut),
                   ConversationContext(dialogue.context.scenario(), std::move(prefix))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void check_version(const json& j)
{
  const auto it = j.find("schema_version");
  if (it == j.end()) {
    throw SchemaError("missing schema_version");
  }
  if (!it->is_number_integer() || it->get<int>() != kSchemaVersion) {
    throw SchemaError("unsupported schema_version " + it->dump());
  }
}

} // namespace

void to_json(json& j, const ScenarioDescription& s)
{
  j = json{{"emotion_type", s.emotion_type ? json(*s.emotion_type) : json(nullptr)},
           {"problem_type", s.problem_type},
           {"situation", s.situation}};
}

void from_json(const json& j, ScenarioDescription& s)
{
  const auto& e = j.at("emotion_type");
  s.emotion_type = e.is_null() ? std::nullopt : std::optional<std::string>(e.get<std::string>());
  j.at("problem_type").get_to(s.problem_type);
  j.at("situation").get_to(s.situation);
}

void to_json(json& j, const Utterance& u)
{
  j = json{{"speaker", to_string(u.speaker)}, {"text", u.text}};
  if (u.tagged) {
    j["think"] = u.tagged->think;
    j["raw"] = u.tagged->raw;
    j["format_ok"] = u.tagged->format_ok;
  }
}

void from_json(const json& j, Utterance& u)
{
  u.speaker = speaker_from_string(j.at("speaker").get<std::string>());
  j.at("text").get_to(u.text);
  u.tagged.reset();
  if (j.contains("think")) {
    TaggedOutput t;
    j.at("think").get_to(t.think);
    t.response = u.text;
    j.at("raw").get_to(t.raw);
    j.at("format_ok").get_to(t.format_ok);
    u.tagged = std::move(t);
  }
}

namespace {

std::vector<Utterance> read_turns(const json& j)
{
  auto turns = j.get<std::vector<Utterance>>();
  for (std::size_t i = 0; i < turns.size(); ++i) {
    turns[i].turn_index = i;
  }
  return turns;
}

} // namespace

DrRow DrRow::from_record(const RewardRecord& rec)
{
  DrRow row;
  row.context_id = rec.context_id;
  row.scenario = rec.context.scenario();
  row.turns = rec.context.turns();
  row.candidate_think = rec.candidate.think;
  row.candidate_response = rec.candidate.response;
  row.terminal_reward = rec.terminal_reward;
  row.turns_used = rec.turns_used;
  row.future_reward = rec.future_reward;
  row.seed = rec.seed;
  return row;
}

ConversationContext DrRow::context() const { return ConversationContext(scenario, turns); }

std::string DrRow::candidate_text() const
{
  if (candidate_think.empty()) {
    return candidate_response;
  }
  return render_tagged(TaggedOutput{candidate_think, candidate_response, {}, true});
}

void to_json(json& j, const DrRow& r)
{
  j = json{{"schema_version", kSchemaVersion},
           {"context_id", r.context_id},
           {"scenario", r.scenario},
           {"turns", r.turns},
           {"candidate_think", r.candidate_think},
           {"candidate_response", r.candidate_response},
           {"terminal_reward", r.terminal_reward},
           {"turns_used", r.turns_used},
           {"future_reward", r.future_reward},
           {"seed", r.seed}};
}

void from_json(const json& j, DrRow& r)
{
  check_version(j);
  j.at("context_id").get_to(r.context_id);
  j.at("scenario").get_to(r.scenario);
  r.turns = read_turns(j.at("turns"));
  j.at("candidate_think").get_to(r.candidate_think);
  j.at("candidate_response").get_to(r.candidate_response);
  j.at("terminal_reward").get_to(r.terminal_reward);
  j.at("turns_used").get_to(r.turns_used);
  j.at("future_reward").get_to(r.future_reward);
  j.at("seed").get_to(r.seed);
}

void to_json(json& j, const LabeledPair& p)
{
  j = json{{"schema_version", kSchemaVersion}, {"input_text", p.input_text}, {"label", p.label}};
}

void from_json(const json& j, LabeledPair& p)
{
  check_version(j);
  j.at("input_text").get_to(p.input_text);
  j.at("label").get_to(p.label);
  if (p.label != 0 && p.label != 1) {
    throw SchemaError("label must be 0 or 1");
  }
}

void to_json(json& j, const EpisodeResult& e)
{
  j = json{{"schema_version", kSchemaVersion},
           {"scenario_id", e.scenario_id},
           {"scenario", e.scenario},
           {"success", e.success},
           {"turns", e.turns},
           {"final_reward", e.final_reward},
           {"turn_rewards", e.turn_rewards},
           {"transcript", e.transcript.turns()}};
}

void from_json(const json& j, EpisodeResult& e)
{
  check_version(j);
  e.scenario_id = j.value("scenario_id", std::string{});
  j.at("scenario").get_to(e.scenario);
  j.at("success").get_to(e.success);
  j.at("turns").get_to(e.turns);
  j.at("final_reward").get_to(e.final_reward);
  e.turn_rewards = j.value("turn_rewards", std::vector<double>{});
  e.transcript = ConversationContext(e.scenario, read_turns(j.at("transcript")));
}

void to_json(json& j, const EvalReport& r)
{
  j = json{{"schema_version", kSchemaVersion},
           {"success_rate", r.success_rate},
           {"average_turns", r.average_turns},
           {"n_episodes", r.n_episodes},
           {"invalid_episodes", r.invalid_episodes}};
  json cats = json::object();
  for (const auto& [key, stats] : r.per_category) {
    json k = json::object();
    for (const auto& [cat, s] : stats) {
      k[cat] = {{"weighted_sr", s.weighted_sr}, {"sr", s.sr}, {"count", s.count}};
    }
    cats[key] = std::move(k);
  }
  j["per_category"] = std::move(cats);
}

// ---------------------------------------------------------------------------
// Scorer persistence

void save_scorer(const FeaturizedScorer& scorer, const fs::path& path)
{
  const auto& m = scorer.model();
  json weights = json::array();
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    if (m.weights[i] != 0.0) {
      weights.push_back({i, m.weights[i]});
    }
  }
  const json j = {{"schema_version", kSchemaVersion},
                  {"kind", "featurized"},
                  {"hash_bits", m.spec.hash_bits},
                  {"max_tokens", m.spec.max_tokens},
                  {"bias", m.bias},
                  {"weights", std::move(weights)},
                  {"epoch_loss", scorer.report().epoch_loss},
                  {"steps", scorer.report().steps},
                  {"final_loss", scorer.report().final_loss}};
  write_text(path, j.dump(1) + "\n");
}

FeaturizedScorer load_scorer(const fs::path& path, const PromptSet& prompts)
{
  const auto j = parse_file(path);
  try {
    check_version(j);
    if (j.at("kind").get<std::string>() != "featurized") {
      throw SchemaError("unsupported scorer kind");
    }
    FeatureSpec spec;
    j.at("hash_bits").get_to(spec.hash_bits);
    j.at("max_tokens").get_to(spec.max_tokens);
    LogisticModel model(spec);
    j.at("bias").get_to(model.bias);
    for (const auto& w : j.at("weights")) {
      const auto idx = w.at(0).get<std::size_t>();
      if (idx >= model.weights.size()) {
        throw SchemaError("weight index out of range");
      }
      model.weights[idx] = w.at(1).get<double>();
    }
    TrainingReport report;
    j.at("epoch_loss").get_to(report.epoch_loss);
    j.at("steps").get_to(report.steps);
    j.at("final_loss").get_to(report.final_loss);
    return FeaturizedScorer(std::move(model), prompts, std::move(report));
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifest

json RunManifest::to_json() const
{
  return json{{"schema_version", kSchemaVersion},
              {"command", command},
              {"config", config},
              {"seeds", seeds},
              {"backends", backends},
              {"prompt_assets_hash", prompt_assets_hash},
              {"created_at", created_at},
              {"completed_at", completed_at},
              {"status", status}};
}

RunManifest RunManifest::from_json(const json& j)
{
  check_version(j);
  RunManifest m;
  j.at("command").get_to(m.command);
  m.config = j.value("config", json::object());
  m.seeds = j.value("seeds", json::object());
  m.backends = j.value("backends", json::object());
  m.prompt_assets_hash = j.value("prompt_assets_hash", std::string{});
  m.created_at = j.value("created_at", std::string{});
  m.completed_at = j.value("completed_at", std::string{});
  m.status = j.value("status", std::string{"running"});
  return m;
}

std::string utc_timestamp()
{
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const RunManifest& m, const fs::path& run_dir)
{
  fs::create_directories(run_dir);
  write_text(run_dir / "manifest.json", m.to_json().dump(2) + "\n");
}

std::optional<RunManifest> read_manifest(const fs::path& run_dir)
{
  const auto p = run_dir / "manifest.json";
  if (!fs::exists(p)) {
    return std::nullopt;
  }
  try {
    return RunManifest::from_json(parse_file(p));
  } catch (const json::exception& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text)
{
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << text;
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

std::string read_text(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace rlff
