#include "rlff/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rlff/errors.hpp"
#include "rlff/random.hpp"

namespace rlff {

bool is_success(double reward, double threshold, SuccessMode mode)
{
  return mode == SuccessMode::Strict ? reward > threshold : reward >= threshold;
}

const char* to_string(SuccessMode mode) { return mode == SuccessMode::Strict ? "strict" : "lenient"; }

SuccessMode success_mode_from_string(const std::string& s)
{
  if (s == "strict") {
    return SuccessMode::Strict;
  }
  if (s == "lenient") {
    return SuccessMode::Lenient;
  }
  throw InvalidValue("success mode must be 'strict' or 'lenient', got '" + s + "'");
}

void EpisodeConfig::validate() const
{
  if (max_turns < 1) {
    throw InvalidValue("evaluation max_turns must be >= 1");
  }
  if (critic.samples < 1) {
    throw InvalidValue("critic samples must be >= 1");
  }
  if (!std::isfinite(success_threshold)) {
    throw InvalidValue("success threshold must be finite");
  }
  system_sampling.validate();
  user_sampling.validate();
  critic.sampling.validate();
}

double EpisodeResult::peak_reward() const
{
  if (turn_rewards.empty()) {
    return final_reward;
  }
  return *std::max_element(turn_rewards.begin(), turn_rewards.end());
}

EpisodeResult run_episode(const AgentSet& agents, const ScenarioDescription& scenario, const EpisodeConfig& cfg)
{
  cfg.validate();
  scenario.validate();

  EpisodeResult res;
  res.scenario = scenario;
  auto ctx = append_turn(ConversationContext(scenario), user_turn(scenario.situation));
  for (int turn = 1; turn <= cfg.max_turns; ++turn) {
    auto sys_sampling = cfg.system_sampling;
    sys_sampling.seed = derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(turn));
    ctx = append_turn(ctx, system_turn(agents.system.respond(ctx, sys_sampling)));

    auto user_sampling = cfg.user_sampling;
    user_sampling.seed = derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(turn));
    ctx = append_turn(ctx, agents.user.reply(ctx, user_sampling));

    auto critic = cfg.critic;
    critic.sampling.seed = derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(turn));
    const double reward = agents.critic.judge(ctx, critic).reward;
    res.turn_rewards.push_back(reward);
    res.final_reward = reward;
    res.turns = turn;
    if (is_success(reward, cfg.success_threshold, cfg.mode)) {
      res.success = true;
      break;
    }
  }
  res.transcript = std::move(ctx);
  return res;
}

EvalReport compute_metrics(std::span<const EpisodeResult> results, int max_turns)
{
  if (results.empty()) {
    throw EmptyResults("no episodes to aggregate");
  }
  EvalReport report;
  report.n_episodes = results.size();
  std::size_t successes = 0;
  double turns = 0.0;
  for (const auto& r : results) {
    successes += r.success ? 1 : 0;
    turns += r.success ? r.turns : max_turns;
  }
  report.success_rate = 100.0 * static_cast<double>(successes) / static_cast<double>(results.size());
  report.average_turns = turns / static_cast<double>(results.size());
  return report;
}

const char* to_string(CategoryKey key) { return key == CategoryKey::EmotionType ? "emotion_type" : "problem_type"; }

std::map<std::string, CategoryStat> category_breakdown(std::span<const EpisodeResult> results, CategoryKey key)
{
  std::map<std::string, std::size_t> success;
  std::map<std::string, CategoryStat> out;
  for (const auto& r : results) {
    std::string cat;
    if (key == CategoryKey::EmotionType) {
      cat = r.scenario.emotion_type.value_or(std::string(kUnlabeled));
    } else {
      cat = r.scenario.problem_type.empty() ? std::string(kUnlabeled) : r.scenario.problem_type;
    }
    out[cat].count += 1;
    success[cat] += r.success ? 1 : 0;
  }
  const auto n = static_cast<double>(results.size());
  for (auto& [cat, stat] : out) {
    stat.sr = 100.0 * static_cast<double>(success[cat]) / static_cast<double>(stat.count);
    stat.weighted_sr = stat.sr * static_cast<double>(stat.count) / n;
  }
  return out;
}

std::vector<SweepRow> threshold_sweep(std::span<const double> episode_rewards, std::span<const SweepPoint> points)
{
  std::vector<SweepRow> rows;
  rows.reserve(points.size());
  for (const auto& p : points) {
    std::size_t ok = 0;
    for (double r : episode_rewards) {
      ok += is_success(r, p.threshold, p.mode) ? 1 : 0;
    }
    const double sr =
      episode_rewards.empty() ? 0.0 : 100.0 * static_cast<double>(ok) / static_cast<double>(episode_rewards.size());
    rows.push_back({p.threshold, p.mode, sr});
  }
  return rows;
}

std::vector<SweepRow> threshold_sweep(std::span<const EpisodeResult> results, std::span<const SweepPoint> points)
{
  std::vector<double> peaks;
  peaks.reserve(results.size());
  for (const auto& r : results) {
    peaks.push_back(r.peak_reward());
  }
  return threshold_sweep(std::span<const double>(peaks), points);
}

namespace {

std::string fixed(double v, int digits)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width)
{
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

} // namespace

std::string render_table(const EvalReport& report, const std::string& model_name)
{
  const auto name_w = std::max<std::size_t>(model_name.size(), 5) + 2;
  std::ostringstream os;
  os << pad("Model", name_w) << pad("SR", 7) << "AT\n";
  os << std::string(name_w + 11, '-') << '\n';
  os << pad(model_name, name_w) << pad(fixed(report.success_rate, 1), 7) << fixed(report.average_turns, 2) << '\n';
  os << "(n=" << report.n_episodes;
  if (report.invalid_episodes > 0) {
    os << ", invalid=" << report.invalid_episodes;
  }
  os << ")\n";
  return os.str();
}

std::string render_sweep_table(std::span<const SweepRow> rows)
{
  std::ostringstream os;
  os << "threshold  mode     SR\n";
  for (const auto& r : rows) {
    os << pad(fixed(r.threshold, 2), 11) << pad(to_string(r.mode), 9) << fixed(r.success_rate, 1) << '\n';
  }
  return os.str();
}

std::string render_category_csv(const std::map<std::string, CategoryStat>& stats)
{
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
      return s;
    }
    std::string q = "\"";
    for (char c : s) {
      q += c;
      if (c == '"') {
        q += '"';
      }
    }
    return q + "\"";
  };
  std::ostringstream os;
  os << "category,count,sr,weighted_sr\n";
  for (const auto& [cat, s] : stats) {
    os << quote(cat) << ',' << s.count << ',' << fixed(s.sr, 4) << ',' << fixed(s.weighted_sr, 4) << '\n';
  }
  return os.str();
}

} // namespace rlff
