#include "rlff/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "rlff/errors.hpp"
#include "rlff/io_store.hpp"

namespace rlff {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string interpolate_string(const std::string& s)
{
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.compare(i, 2, "${") == 0) {
      const auto close = s.find('}', i + 2);
      if (close == std::string::npos) {
        throw ConfigError("unterminated ${ in '" + s + "'");
      }
      const auto name = s.substr(i + 2, close - i - 2);
      const char* value = std::getenv(name.c_str());
      if (!value) {
        throw ConfigError("environment variable " + name + " is not set");
      }
      out += value;
      i = close + 1;
    } else {
      out += s[i++];
    }
  }
  return out;
}

// Reads keys from one JSON object and complains about any it did not ask for.
class Section
{
public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where))
  {
    if (!j_.is_object()) {
      throw ConfigError(where_ + ": expected an object");
    }
  }

  template<typename T>
  void read(const char* key, T& dst)
  {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      return;
    }
    try {
      dst = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type (" + it->dump() + ")");
    }
  }

  const json* child(const char* key)
  {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const
  {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) {
        throw ConfigError(where_ + ": unknown key '" + k + "'");
      }
    }
  }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p)
{
  if (p.empty()) {
    return {};
  }
  const fs::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

RemoteBackendConfig parse_remote(Section& s)
{
  RemoteBackendConfig r;
  s.read("base_url", r.base_url);
  s.read("path", r.path);
  s.read("model", r.model);
  s.read("token_env", r.token_env);
  s.read("max_retries", r.max_retries);
  int backoff_ms = static_cast<int>(r.backoff.count());
  s.read("backoff_ms", backoff_ms);
  r.backoff = std::chrono::milliseconds(backoff_ms);
  int timeout_s = static_cast<int>(r.timeout.count());
  s.read("timeout_s", timeout_s);
  r.timeout = std::chrono::seconds(timeout_s);
  s.read("max_in_flight", r.max_in_flight);
  s.read("supports_n", r.supports_n);
  s.read("send_top_k", r.send_top_k);
  s.read("send_seed", r.send_seed);
  if (r.max_retries < 0 || r.max_in_flight < 1 || r.max_in_flight > 1024 || backoff_ms < 0 || timeout_s < 1) {
    throw ConfigError("remote backend: invalid retry/concurrency/timeout setting");
  }
  return r;
}

BackendBinding parse_backend(const json& j, const std::string& where)
{
  Section s(j, where);
  BackendBinding b;
  s.read("kind", b.kind);
  s.read("name", b.name);
  if (b.kind == "rules") {
    if (const auto* rules = s.child("rules")) {
      for (const auto& r : *rules) {
        Section rs(r, where + ".rules[]");
        RuleBackend::Rule rule;
        rs.read("contains", rule.contains);
        rs.read("reply", rule.reply);
        rs.finish();
        b.rules.push_back(std::move(rule));
      }
    }
    s.read("choices", b.choices);
    if (b.choices.empty()) {
      throw ConfigError(where + ": rules backend needs at least one choice");
    }
  } else if (b.kind == "scripted") {
    s.read("script", b.script);
  } else if (b.kind == "remote") {
    b.remote = parse_remote(s);
    if (b.remote.model.empty()) {
      throw ConfigError(where + ": remote backend needs a model");
    }
  } else {
    throw ConfigError(where + ".kind: expected rules, scripted or remote, got '" + b.kind + "'");
  }
  s.finish();
  return b;
}

ScorerBinding parse_scorer(const json& j, const fs::path& base)
{
  Section s(j, "scorer");
  ScorerBinding b;
  s.read("kind", b.kind);
  if (b.kind == "featurized") {
    std::string p;
    s.read("path", p);
    b.path = resolve(base, p);
  } else if (b.kind == "scripted") {
    s.read("exact", b.table.exact);
    s.read("favored_tokens", b.table.favored_tokens);
    s.read("default_score", b.table.default_score);
  } else if (b.kind == "remote") {
    b.remote = parse_remote(s);
  } else {
    throw ConfigError("scorer.kind: expected featurized, scripted or remote, got '" + b.kind + "'");
  }
  s.finish();
  return b;
}

SuccessMode parse_mode(const std::string& s)
{
  try {
    return success_mode_from_string(s);
  } catch (const InvalidValue& e) {
    throw ConfigError(e.what());
  }
}

} // namespace

json interpolate_env(const json& j)
{
  if (j.is_string()) {
    return interpolate_string(j.get<std::string>());
  }
  if (j.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : j.items()) {
      out[k] = interpolate_env(v);
    }
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) {
      out.push_back(interpolate_env(v));
    }
    return out;
  }
  return j;
}

json BackendBinding::describe() const
{
  json d = {{"kind", kind}};
  if (!name.empty()) {
    d["name"] = name;
  }
  if (kind == "remote") {
    d["base_url"] = remote.base_url;
    d["model"] = remote.model;
  } else if (kind == "rules") {
    d["rules"] = rules.size();
    d["choices"] = choices.size();
  } else {
    d["script_length"] = script.size();
  }
  return d;
}

RunConfig parse_config(const json& raw, const fs::path& base)
{
  const auto j = interpolate_env(raw);
  Section top(j, "config");
  RunConfig c;
  c.source = j;

  top.read("seed", c.seed);
  top.read("workers", c.workers);
  std::string out;
  top.read("out", out);
  if (!out.empty()) {
    c.out = resolve(base, out);
  }
  std::string prompts_dir;
  top.read("prompts_dir", prompts_dir);
  if (!prompts_dir.empty()) {
    c.prompts_dir = resolve(base, prompts_dir);
  }

  if (const auto* d = top.child("data")) {
    Section s(*d, "data");
    std::string format = "none";
    s.read("format", format);
    if (format == "esconv") {
      c.data.format = DatasetFormat::Esconv;
    } else if (format == "extes") {
      c.data.format = DatasetFormat::Extes;
    } else if (format != "none") {
      throw ConfigError("data.format: expected esconv, extes or none, got '" + format + "'");
    }
    std::string train, test;
    s.read("train", train);
    s.read("test", test);
    c.data.train = resolve(base, train);
    c.data.test = resolve(base, test);
    s.read("split_seed", c.data.split_seed);
    s.read("contexts_per_dialogue", c.data.contexts_per_dialogue);
    s.read("max_dialogues", c.data.max_dialogues);
    s.finish();
  }

  if (const auto* b = top.child("backends")) {
    Section s(*b, "backends");
    if (const auto* x = s.child("system")) {
      c.system = parse_backend(*x, s.path("system"));
    }
    if (const auto* x = s.child("user")) {
      c.user = parse_backend(*x, s.path("user"));
    }
    if (const auto* x = s.child("critic_train")) {
      c.critic_train = parse_backend(*x, s.path("critic_train"));
    }
    if (const auto* x = s.child("critic_eval")) {
      c.critic_eval = parse_backend(*x, s.path("critic_eval"));
    } else if (s.child("critic_train")) {
      c.critic_eval = c.critic_train;
    }
    s.finish();
  }

  if (const auto* x = top.child("scorer")) {
    c.scorer = parse_scorer(*x, base);
  }

  if (const auto* x = top.child("reward_model")) {
    Section s(*x, "reward_model");
    s.read("batch_size", c.reward_model.batch_size);
    s.read("epochs", c.reward_model.epochs);
    s.read("learning_rate", c.reward_model.learning_rate);
    s.read("max_seq_len", c.reward_model.max_seq_len);
    s.read("grad_accum_steps", c.reward_model.grad_accum_steps);
    s.read("hash_bits", c.reward_model.hash_bits);
    s.read("init_scale", c.reward_model.init_scale);
    s.finish();
  }

  if (const auto* x = top.child("rl")) {
    Section s(*x, "rl");
    s.read("batch_size", c.rl.batch_size);
    s.read("epochs", c.rl.epochs);
    s.read("learning_rate", c.rl.learning_rate);
    s.read("lora_rank", c.rl.lora_rank);
    s.read("lora_alpha", c.rl.lora_alpha);
    s.read("max_dialogue_turn", c.rl.max_dialogue_turn);
    s.read("num_generations", c.rl.num_generations);
    s.read("temperature", c.rl.temperature);
    s.read("top_p", c.rl.top_p);
    s.read("top_k", c.rl.top_k);
    s.finish();
  }

  if (const auto* x = top.child("simulation")) {
    Section s(*x, "simulation");
    s.read("m", c.simulation_m);
    s.read("stop_threshold", c.stop_threshold);
    s.read("critic_samples", c.simulation_critic_samples);
    s.finish();
  }

  if (const auto* x = top.child("reward")) {
    Section s(*x, "reward");
    s.read("alpha", c.reward.alpha);
    s.read("fut_weight", c.reward.fut_weight);
    s.read("delta", c.reward.delta);
    std::string signal = "probability";
    s.read("future_signal", signal);
    if (signal == "probability") {
      c.reward.future_signal = FutureSignal::Probability;
    } else if (signal == "hard_label") {
      c.reward.future_signal = FutureSignal::HardLabel;
    } else {
      throw ConfigError("reward.future_signal: expected probability or hard_label");
    }
    s.finish();
  }

  if (const auto* x = top.child("grpo")) {
    Section s(*x, "grpo");
    s.read("clip_epsilon", c.grpo.clip_epsilon);
    s.read("kl_beta", c.grpo.kl_beta);
    s.read("std_floor", c.grpo.std_floor);
    s.read("steps", c.grpo.steps);
    s.read("horizon", c.grpo.horizon);
    s.read("prior_strength", c.grpo.prior_strength);
    s.read("max_contexts", c.grpo.max_contexts);
    s.read("reward", c.grpo.reward);
    s.read("adherence_every", c.grpo.adherence_every);
    s.read("adherence_samples", c.grpo.adherence_samples);
    s.finish();
    if (c.grpo.reward != "rlff" && c.grpo.reward != "format") {
      throw ConfigError("grpo.reward: expected rlff or format");
    }
  }

  if (const auto* x = top.child("evaluation")) {
    Section s(*x, "evaluation");
    s.read("max_turns", c.evaluation.max_turns);
    s.read("critic_samples", c.evaluation.critic_samples);
    s.read("success_threshold", c.evaluation.success_threshold);
    std::string mode = to_string(c.evaluation.mode);
    s.read("mode", mode);
    c.evaluation.mode = parse_mode(mode);
    s.read("max_episodes", c.evaluation.max_episodes);
    s.read("model_name", c.evaluation.model_name);
    if (const auto* sweep = s.child("sweep")) {
      c.evaluation.sweep.clear();
      for (const auto& p : *sweep) {
        Section ps(p, "evaluation.sweep[]");
        SweepPoint point{0.5, SuccessMode::Strict};
        ps.read("threshold", point.threshold);
        std::string m = "strict";
        ps.read("mode", m);
        point.mode = parse_mode(m);
        ps.finish();
        c.evaluation.sweep.push_back(point);
      }
    }
    s.finish();
  }
  top.finish();

  if (c.workers < 1) {
    throw ConfigError("workers must be >= 1");
  }
  if (c.grpo.steps < 0 || c.grpo.horizon < 4 || c.grpo.adherence_every < 0 || c.grpo.adherence_samples < 1) {
    throw ConfigError("grpo: steps >= 0, horizon >= 4, adherence_samples >= 1 required");
  }
  if (c.reward_model.max_seq_len < 1 || c.reward_model.hash_bits < 1 || c.reward_model.hash_bits > 24) {
    throw ConfigError("reward_model: max_seq_len >= 1 and hash_bits in [1, 24] required");
  }
  try {
    c.simulation_config().validate();
    c.grpo_config().validate();
    c.episode_config().validate();
    c.reward_weights().validate();
  } catch (const InvalidValue& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_config(const fs::path& path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

json default_config_json()
{
  const RunConfig c;
  json sweep = json::array();
  for (const auto& p : c.evaluation.sweep) {
    sweep.push_back({{"threshold", p.threshold}, {"mode", to_string(p.mode)}});
  }
  return {
    {"seed", c.seed},
    {"workers", c.workers},
    {"out", c.out.string()},
    {"data",
     {{"format", "none"},
      {"train", ""},
      {"test", ""},
      {"split_seed", c.data.split_seed},
      {"contexts_per_dialogue", c.data.contexts_per_dialogue},
      {"max_dialogues", c.data.max_dialogues}}},
    {"reward_model",
     {{"batch_size", c.reward_model.batch_size},
      {"epochs", c.reward_model.epochs},
      {"learning_rate", c.reward_model.learning_rate},
      {"max_seq_len", c.reward_model.max_seq_len},
      {"grad_accum_steps", c.reward_model.grad_accum_steps},
      {"hash_bits", c.reward_model.hash_bits},
      {"init_scale", c.reward_model.init_scale}}},
    {"rl",
     {{"batch_size", c.rl.batch_size},
      {"epochs", c.rl.epochs},
      {"learning_rate", c.rl.learning_rate},
      {"lora_rank", c.rl.lora_rank},
      {"lora_alpha", c.rl.lora_alpha},
      {"max_dialogue_turn", c.rl.max_dialogue_turn},
      {"num_generations", c.rl.num_generations},
      {"temperature", c.rl.temperature},
      {"top_p", c.rl.top_p},
      {"top_k", c.rl.top_k}}},
    {"simulation",
     {{"m", c.simulation_m}, {"stop_threshold", c.stop_threshold}, {"critic_samples", c.simulation_critic_samples}}},
    {"reward",
     {{"alpha", c.reward.alpha}, {"fut_weight", c.reward.fut_weight}, {"delta", c.reward.delta},
      {"future_signal", "probability"}}},
    {"grpo",
     {{"clip_epsilon", c.grpo.clip_epsilon},
      {"kl_beta", c.grpo.kl_beta},
      {"std_floor", c.grpo.std_floor},
      {"steps", c.grpo.steps},
      {"horizon", c.grpo.horizon},
      {"prior_strength", c.grpo.prior_strength},
      {"max_contexts", c.grpo.max_contexts},
      {"reward", c.grpo.reward},
      {"adherence_every", c.grpo.adherence_every},
      {"adherence_samples", c.grpo.adherence_samples}}},
    {"evaluation",
     {{"max_turns", c.evaluation.max_turns},
      {"critic_samples", c.evaluation.critic_samples},
      {"success_threshold", c.evaluation.success_threshold},
      {"mode", to_string(c.evaluation.mode)},
      {"max_episodes", c.evaluation.max_episodes},
      {"model_name", c.evaluation.model_name},
      {"sweep", sweep}}},
  };
}

SamplingParams RunConfig::sampling() const
{
  SamplingParams p;
  p.temperature = rl.temperature;
  p.top_p = rl.top_p;
  p.top_k = rl.top_k;
  return p;
}

SimulationConfig RunConfig::simulation_config() const
{
  SimulationConfig s;
  s.m = simulation_m;
  s.max_turns = rl.max_dialogue_turn;
  s.stop_threshold = stop_threshold;
  s.sampling = sampling();
  s.user_sampling = sampling();
  s.critic = {simulation_critic_samples, sampling()};
  s.base_seed = seed;
  return s;
}

GrpoConfig RunConfig::grpo_config() const
{
  GrpoConfig g;
  g.group_size = rl.num_generations;
  g.contexts_per_step = rl.batch_size;
  g.clip_epsilon = grpo.clip_epsilon;
  g.kl_beta = grpo.kl_beta;
  g.learning_rate = rl.learning_rate;
  g.epochs = rl.epochs;
  g.std_floor = grpo.std_floor;
  return g;
}

EpisodeConfig RunConfig::episode_config() const
{
  EpisodeConfig e;
  e.max_turns = evaluation.max_turns;
  e.success_threshold = evaluation.success_threshold;
  e.mode = evaluation.mode;
  e.system_sampling = sampling();
  e.user_sampling = sampling();
  e.critic = {evaluation.critic_samples, sampling()};
  e.seed = seed;
  return e;
}

TrainerHyper RunConfig::trainer_hyper() const
{
  TrainerHyper h;
  h.learning_rate = reward_model.learning_rate;
  h.epochs = reward_model.epochs;
  h.batch_size = reward_model.batch_size;
  h.grad_accum_steps = reward_model.grad_accum_steps;
  h.seed = seed;
  h.init_scale = reward_model.init_scale;
  return h;
}

FeatureSpec RunConfig::feature_spec() const
{
  FeatureSpec f;
  f.hash_bits = reward_model.hash_bits;
  f.max_tokens = reward_model.max_seq_len;
  return f;
}

RewardWeights RunConfig::reward_weights() const
{
  RewardWeights w;
  w.alpha = reward.alpha;
  w.fut_weight = reward.fut_weight;
  return w;
}

PromptSet RunConfig::prompts() const { return prompts_dir ? PromptSet::load(*prompts_dir) : PromptSet::defaults(); }

void validate_paths(const RunConfig& cfg, std::initializer_list<Need> needs)
{
  auto require = [](const fs::path& p, const char* what) {
    if (p.empty()) {
      throw ConfigError(std::string(what) + " is not set");
    }
    if (!fs::exists(p)) {
      throw ConfigError(std::string(what) + " does not exist: " + p.string());
    }
  };
  if (cfg.prompts_dir) {
    require(*cfg.prompts_dir, "prompts_dir");
  }
  for (auto need : needs) {
    switch (need) {
      case Need::TrainData:
        if (cfg.data.format == DatasetFormat::None) {
          throw ConfigError("data.format is not set");
        }
        require(cfg.data.train, "data.train");
        break;
      case Need::TestData:
        if (cfg.data.format == DatasetFormat::None) {
          throw ConfigError("data.format is not set");
        }
        require(cfg.data.format == DatasetFormat::Esconv ? cfg.data.test : cfg.data.train,
                cfg.data.format == DatasetFormat::Esconv ? "data.test" : "data.train");
        break;
      case Need::Scorer:
        if (cfg.scorer.kind == "featurized" && cfg.grpo.reward == "rlff") {
          require(cfg.scorer.path, "scorer.path");
        }
        break;
    }
  }
}

std::shared_ptr<ChatBackend> make_backend(const BackendBinding& b)
{
  if (b.kind == "rules") {
    return std::make_shared<RuleBackend>(b.rules, b.choices, b.name.empty() ? "rules" : b.name);
  }
  if (b.kind == "scripted") {
    return std::make_shared<ScriptedBackend>(b.script, b.name.empty() ? "scripted" : b.name);
  }
  return std::make_shared<RemoteBackend>(b.remote);
}

std::shared_ptr<const Scorer> make_scorer(const ScorerBinding& b, const PromptSet& prompts)
{
  if (b.kind == "featurized") {
    return std::make_shared<FeaturizedScorer>(load_scorer(b.path, prompts));
  }
  if (b.kind == "scripted") {
    return std::make_shared<ScriptedScorer>(b.table);
  }
  return std::make_shared<RemoteScorer>(b.remote, prompts);
}

AgentSet make_agents(const RunConfig& cfg, bool evaluation)
{
  const auto prompts = cfg.prompts();
  return AgentSet{SystemAgent(make_backend(cfg.system), prompts), UserSimulator(make_backend(cfg.user), prompts),
                  CriticAgent(make_backend(evaluation ? cfg.critic_eval : cfg.critic_train), prompts)};
}

} // namespace rlff
