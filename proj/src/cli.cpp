#include "rlff/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "rlff/config.hpp"
#include "rlff/errors.hpp"
#include "rlff/io_store.hpp"
#include "rlff/log.hpp"
#include "rlff/parallel.hpp"
#include "rlff/random.hpp"

namespace rlff {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals
{
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
  bool force = false;
  std::string log_level = "info";
};

struct Refused : Error
{
  using Error::Error;
};

RunConfig resolve_config(const Globals& g, bool required)
{
  RunConfig cfg;
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
  } else if (required) {
    throw ConfigError("--config is required for this command");
  }
  if (g.seed) {
    cfg.seed = *g.seed;
  }
  if (!g.out.empty()) {
    cfg.out = g.out;
  }
  if (g.workers) {
    if (*g.workers < 1) {
      throw ConfigError("--workers must be >= 1");
    }
    cfg.workers = *g.workers;
  }
  return cfg;
}

void require_backend(const BackendBinding& b, const char* role)
{
  if (b.kind == "rules" && b.choices.empty()) {
    throw ConfigError(std::string("backends.") + role + " is not configured");
  }
}

// Writes the running manifest, refusing to clobber a completed run.
class RunGuard
{
public:
  RunGuard(const std::string& command, const RunConfig& cfg, bool force, json backends)
    : dir_(cfg.out)
  {
    if (const auto existing = read_manifest(dir_); existing && existing->status == "completed" && !force) {
      throw Refused(dir_.string() + " holds a completed '" + existing->command +
                    "' run; pass --force to overwrite");
    }
    manifest_.command = command;
    manifest_.config = cfg.source.is_null() ? json::object() : cfg.source;
    manifest_.seeds = {{"seed", cfg.seed}, {"split_seed", cfg.data.split_seed}};
    manifest_.backends = std::move(backends);
    manifest_.prompt_assets_hash = cfg.prompts().content_hash();
    manifest_.created_at = utc_timestamp();
    manifest_.config["workers"] = cfg.workers;
    write_manifest(manifest_, dir_);
  }

  const fs::path& dir() const { return dir_; }
  RunManifest& manifest() { return manifest_; }

  void complete()
  {
    manifest_.status = "completed";
    manifest_.completed_at = utc_timestamp();
    write_manifest(manifest_, dir_);
  }

private:
  fs::path dir_;
  RunManifest manifest_;
};

json role_backends(const RunConfig& cfg, bool evaluation)
{
  return {{"system", cfg.system.describe()},
          {"user", cfg.user.describe()},
          {"critic", (evaluation ? cfg.critic_eval : cfg.critic_train).describe()}};
}

std::vector<Dialogue> cap(std::vector<Dialogue> ds, std::size_t limit)
{
  if (limit > 0 && ds.size() > limit) {
    ds.resize(limit);
  }
  return ds;
}

std::vector<Dialogue> train_dialogues(const RunConfig& cfg)
{
  if (cfg.data.format == DatasetFormat::Esconv) {
    return cap(load_esconv(cfg.data.train, SplitName::Train).dialogues, cfg.data.max_dialogues);
  }
  return cap(load_extes(cfg.data.train, cfg.data.split_seed).train.dialogues, cfg.data.max_dialogues);
}

std::vector<Dialogue> test_dialogues(const RunConfig& cfg)
{
  if (cfg.data.format == DatasetFormat::Esconv) {
    return load_esconv(cfg.data.test, SplitName::Test).dialogues;
  }
  return load_extes(cfg.data.train, cfg.data.split_seed).test.dialogues;
}

std::vector<ContextEntry> contexts_of(const std::vector<Dialogue>& ds, int per_dialogue)
{
  std::vector<ContextEntry> out;
  for (const auto& d : ds) {
    for (auto& c : extract_contexts(d, per_dialogue)) {
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::string fmt(double v, int digits = 4)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Globals& g, std::ostream& out)
{
  auto cfg = resolve_config(g, true);
  validate_paths(cfg, {Need::TrainData});
  require_backend(cfg.system, "system");
  require_backend(cfg.user, "user");
  require_backend(cfg.critic_train, "critic_train");

  const auto contexts = contexts_of(train_dialogues(cfg), cfg.data.contexts_per_dialogue);
  RunGuard run("simulate", cfg, g.force, role_backends(cfg, false));
  const auto agents = make_agents(cfg, false);
  const auto result = build_reward_dataset(agents, contexts, cfg.simulation_config(), cfg.workers);

  std::vector<DrRow> rows;
  rows.reserve(result.records.size());
  for (const auto& r : result.records) {
    rows.push_back(DrRow::from_record(r));
  }
  write_jsonl(rows, run.dir() / "d_r.jsonl");
  std::string failures;
  for (const auto& f : result.failures) {
    failures += json{{"context_id", f.context_id}, {"candidate_index", f.candidate_index}, {"reason", f.reason}}.dump() + "\n";
  }
  write_text(run.dir() / "failures.jsonl", failures);

  std::array<std::size_t, 5> hist{};
  double sum = 0.0;
  for (const auto& r : rows) {
    hist[std::min<std::size_t>(4, static_cast<std::size_t>(r.future_reward * 5.0))] += 1;
    sum += r.future_reward;
  }
  out << "contexts: " << contexts.size() << "\n";
  out << "records: " << rows.size() << " (failed rollouts: " << result.failures.size() << ")\n";
  if (!rows.empty()) {
    out << "future_reward mean: " << fmt(sum / static_cast<double>(rows.size())) << "\n";
    for (std::size_t b = 0; b < hist.size(); ++b) {
      out << "  [" << fmt(b * 0.2, 1) << ", " << fmt((b + 1) * 0.2, 1) << (b == 4 ? "]" : ")") << "  " << hist[b]
          << "\n";
    }
  }
  out << "wrote " << (run.dir() / "d_r.jsonl").string() << "\n";
  run.manifest().config["records"] = rows.size();
  run.complete();
  return 0;
}

int cmd_train_reward(const Globals& g, const std::string& input, std::ostream& out)
{
  auto cfg = resolve_config(g, false);
  if (input.empty()) {
    throw ConfigError("train-reward needs --input pointing at a d_r.jsonl file");
  }
  if (!fs::exists(input)) {
    throw ConfigError("input does not exist: " + input);
  }
  validate_paths(cfg, {});
  const auto prompts = cfg.prompts();
  const auto rows = read_jsonl<DrRow>(input);

  std::vector<LabeledPair> pairs;
  pairs.reserve(rows.size());
  for (const auto& r : rows) {
    pairs.push_back({render_reward_input(prompts, r.context(), r.candidate_text()),
                     binarize_reward(r.future_reward, cfg.reward.delta)});
  }

  RunGuard run("train-reward", cfg, g.force, json::object());
  run.manifest().config["input"] = fs::absolute(input).string();
  write_jsonl(pairs, run.dir() / "pairs.jsonl");
  const auto scorer = train_scorer(pairs, cfg.trainer_hyper(), cfg.feature_spec(), prompts);
  save_scorer(scorer, run.dir() / "scorer.json");

  const auto positives = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.label == 1; });
  const auto& report = scorer.report();
  const json loss = {{"epoch_loss", report.epoch_loss},
                     {"steps", report.steps},
                     {"final_loss", report.final_loss},
                     {"positives", positives},
                     {"negatives", static_cast<long>(pairs.size()) - positives}};
  write_text(run.dir() / "loss.json", loss.dump(2) + "\n");

  out << "pairs: " << pairs.size() << " (" << positives << " positive)\n";
  out << "steps: " << report.steps << "\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
    out << "epoch " << e + 1 << " loss: " << fmt(report.epoch_loss[e], 6) << "\n";
  }
  out << "wrote " << (run.dir() / "scorer.json").string() << "\n";
  run.complete();
  return 0;
}

json policy_json(const ToyPolicy& p)
{
  return {{"schema_version", kSchemaVersion}, {"vocab", p.vocab()}, {"horizon", p.horizon()}, {"logits", p.parameters()}};
}

int cmd_grpo_train(const Globals& g, const std::string& scorer_path, std::ostream& out)
{
  auto cfg = resolve_config(g, true);
  if (!scorer_path.empty()) {
    cfg.scorer.kind = "featurized";
    cfg.scorer.path = scorer_path;
  }
  validate_paths(cfg, {Need::Scorer});
  const auto prompts = cfg.prompts();

  std::vector<ConversationContext> contexts;
  if (cfg.data.format != DatasetFormat::None) {
    validate_paths(cfg, {Need::TrainData});
    for (auto& c : contexts_of(train_dialogues(cfg), cfg.data.contexts_per_dialogue)) {
      if (contexts.size() >= cfg.grpo.max_contexts) {
        break;
      }
      contexts.push_back(std::move(c.context));
    }
  }
  if (contexts.empty()) {
    ScenarioDescription s;
    s.problem_type = "unspecified";
    s.situation = "I have been feeling low lately.";
    contexts.push_back(append_turn(ConversationContext(s), user_turn(s.situation)));
  }

  RewardFn reward_fn;
  json scorer_desc = {{"reward", cfg.grpo.reward}};
  if (cfg.grpo.reward == "format") {
    reward_fn = make_format_reward();
  } else {
    reward_fn = make_rlff_reward(make_scorer(cfg.scorer, prompts), cfg.reward_weights(), cfg.reward.future_signal);
    scorer_desc["scorer"] = cfg.scorer.kind;
    if (cfg.scorer.kind == "featurized") {
      scorer_desc["scorer_path"] = fs::absolute(cfg.scorer.path).string();
    }
  }

  RunGuard run("grpo-train", cfg, g.force, scorer_desc);
  auto initial = ToyPolicy::with_template_prior(ToyPolicy::default_vocab(), cfg.grpo.horizon, cfg.grpo.prior_strength);
  GrpoTrainer trainer(std::move(initial), contexts, reward_fn, cfg.grpo_config(), cfg.seed, cfg.workers);

  auto adherence = [&](int step) {
    Rng rng(derive_seed(cfg.seed, 0xad4e, static_cast<std::uint64_t>(step)));
    return format_adherence(trainer.policy(), rng, cfg.grpo.adherence_samples);
  };

  std::ofstream steps(run.dir() / "steps.jsonl", std::ios::trunc);
  std::ostringstream curves;
  curves << "step,reward,format_reward,future_reward,kl,clip_fraction,adherence\n";
  const double start_adherence = adherence(0);
  curves << "0,,,,,," << fmt(start_adherence) << "\n";
  for (int s = 1; s <= cfg.grpo.steps; ++s) {
    StepStats st;
    try {
      st = trainer.step();
    } catch (const NonFiniteInput& e) {
      throw NonFiniteInput("step " + std::to_string(s) + ": " + e.what());
    }
    const bool measure = cfg.grpo.adherence_every > 0 && (s % cfg.grpo.adherence_every == 0 || s == cfg.grpo.steps);
    json line = {{"step", s},
                 {"mean_reward", st.mean_reward},
                 {"mean_format_reward", st.mean_format_reward},
                 {"mean_future_reward", st.mean_future_reward},
                 {"mean_kl", st.mean_kl},
                 {"clip_fraction", st.clip_fraction},
                 {"objective", st.objective}};
    curves << s << ',' << fmt(st.mean_reward) << ',' << fmt(st.mean_format_reward) << ','
           << fmt(st.mean_future_reward) << ',' << fmt(st.mean_kl, 6) << ',' << fmt(st.clip_fraction) << ',';
    if (measure) {
      const double a = adherence(s);
      line["format_adherence"] = a;
      curves << fmt(a);
    }
    curves << "\n";
    steps << line.dump() << "\n";
  }
  steps.close();
  write_text(run.dir() / "curves.csv", curves.str());
  write_text(run.dir() / "policy.json", policy_json(trainer.policy()).dump() + "\n");

  const double end_adherence = adherence(cfg.grpo.steps);
  out << "steps: " << trainer.steps_done() << "\n";
  out << "format adherence: " << fmt(start_adherence) << " -> " << fmt(end_adherence) << "\n";
  out << "kl to reference: " << fmt(trainer.policy().exact_kl(trainer.reference()), 6) << "\n";
  out << "wrote " << (run.dir() / "curves.csv").string() << "\n";
  run.complete();
  return 0;
}

void write_report(const fs::path& dir, const std::vector<EpisodeResult>& valid, std::size_t invalid,
                  const RunConfig& cfg, std::ostream& out)
{
  auto report = compute_metrics(valid, cfg.evaluation.max_turns);
  report.invalid_episodes = invalid;
  for (auto key : {CategoryKey::EmotionType, CategoryKey::ProblemType}) {
    auto stats = category_breakdown(valid, key);
    write_text(dir / (std::string("categories_") + to_string(key) + ".csv"), render_category_csv(stats));
    report.per_category[to_string(key)] = std::move(stats);
  }
  json j = report;
  write_text(dir / "report.json", j.dump(2) + "\n");
  const auto table = render_table(report, cfg.evaluation.model_name);
  write_text(dir / "report.txt", table);
  out << table;
}

int cmd_evaluate(const Globals& g, std::ostream& out)
{
  auto cfg = resolve_config(g, true);
  validate_paths(cfg, {Need::TestData});
  require_backend(cfg.system, "system");
  require_backend(cfg.user, "user");
  require_backend(cfg.critic_eval, "critic_eval");

  auto dialogues = test_dialogues(cfg);
  if (cfg.evaluation.max_episodes > 0 && dialogues.size() > cfg.evaluation.max_episodes) {
    dialogues.resize(cfg.evaluation.max_episodes);
  }
  if (dialogues.empty()) {
    throw EmptyResults("no evaluation scenarios after filtering");
  }

  RunGuard run("evaluate", cfg, g.force, role_backends(cfg, true));
  const auto agents = make_agents(cfg, true);
  const auto base = cfg.episode_config();
  std::vector<std::optional<EpisodeResult>> slots(dialogues.size());
  parallel_for(dialogues.size(), cfg.workers, [&](std::size_t i) {
    auto ecfg = base;
    ecfg.seed = derive_seed(cfg.seed, 4, i);
    try {
      auto r = run_episode(agents, dialogues[i].context.scenario(), ecfg);
      r.scenario_id = dialogues[i].id;
      slots[i] = std::move(r);
    } catch (const BackendError& e) {
      log::warn("episode " + dialogues[i].id + " invalid: " + e.what());
    } catch (const UnparsableVerdict& e) {
      log::warn("episode " + dialogues[i].id + " invalid: " + e.what());
    }
  });

  std::vector<EpisodeResult> valid;
  for (auto& s : slots) {
    if (s) {
      valid.push_back(std::move(*s));
    }
  }
  write_jsonl(valid, run.dir() / "episodes.jsonl");
  write_report(run.dir(), valid, dialogues.size() - valid.size(), cfg, out);
  run.complete();
  return 0;
}

std::vector<EpisodeResult> read_episodes(const std::string& input)
{
  if (input.empty()) {
    throw ConfigError("--input pointing at an episodes.jsonl file is required");
  }
  if (!fs::exists(input)) {
    throw ConfigError("input does not exist: " + input);
  }
  return read_jsonl<EpisodeResult>(input);
}

int cmd_sweep(const Globals& g, const std::string& input, std::ostream& out)
{
  auto cfg = resolve_config(g, false);
  const auto episodes = read_episodes(input);
  RunGuard run("sweep", cfg, g.force, json::object());
  run.manifest().config["input"] = fs::absolute(input).string();
  const auto rows = threshold_sweep(std::span<const EpisodeResult>(episodes), cfg.evaluation.sweep);
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"threshold", r.threshold}, {"mode", to_string(r.mode)}, {"success_rate", r.success_rate}});
  }
  write_text(run.dir() / "sweep.json", json{{"schema_version", kSchemaVersion}, {"rows", j}}.dump(2) + "\n");
  const auto table = render_sweep_table(rows);
  write_text(run.dir() / "sweep.txt", table);
  out << table;
  run.complete();
  return 0;
}

int cmd_report(const Globals& g, const std::string& input, std::ostream& out)
{
  auto cfg = resolve_config(g, false);
  const auto episodes = read_episodes(input);
  RunGuard run("report", cfg, g.force, json::object());
  run.manifest().config["input"] = fs::absolute(input).string();
  write_report(run.dir(), episodes, 0, cfg, out);
  run.complete();
  return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"RLFF-ESC pipeline: simulate, train-reward, grpo-train, evaluate, sweep, report", "rlff"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Run directory");
  app.add_option("--workers", g.workers, "Worker threads");
  app.add_flag("--force", g.force, "Overwrite a completed run directory");
  app.add_option("--log-level", g.log_level, "debug|info|warn|error")
    ->check(CLI::IsMember({"debug", "info", "warn", "error"}));
  app.fallthrough();

  std::string input;
  std::string scorer_path;
  auto* simulate = app.add_subcommand("simulate", "Build D_r by multi-agent simulation");
  auto* train = app.add_subcommand("train-reward", "Fit the featurized scorer on D_r");
  train->add_option("--input", input, "d_r.jsonl from a simulate run");
  auto* grpo = app.add_subcommand("grpo-train", "GRPO on the toy policy");
  grpo->add_option("--scorer", scorer_path, "scorer.json from a train-reward run");
  auto* evaluate = app.add_subcommand("evaluate", "Run evaluation episodes");
  auto* sweep = app.add_subcommand("sweep", "Success rate across thresholds");
  sweep->add_option("--input", input, "episodes.jsonl from an evaluate run");
  auto* report = app.add_subcommand("report", "Rebuild report files from episodes");
  report->add_option("--input", input, "episodes.jsonl from an evaluate run");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  static const std::map<std::string, log::Level> levels = {
    {"debug", log::Level::Debug}, {"info", log::Level::Info}, {"warn", log::Level::Warn}, {"error", log::Level::Error}};
  log::set_level(levels.at(g.log_level));

  try {
    if (*simulate) {
      return cmd_simulate(g, out);
    }
    if (*train) {
      return cmd_train_reward(g, input, out);
    }
    if (*grpo) {
      return cmd_grpo_train(g, scorer_path, out);
    }
    if (*evaluate) {
      return cmd_evaluate(g, out);
    }
    if (*sweep) {
      return cmd_sweep(g, input, out);
    }
    if (*report) {
      return cmd_report(g, input, out);
    }
  } catch (const Refused& e) {
    err << "rlff: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    err << "rlff: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "rlff: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

} // namespace rlff
