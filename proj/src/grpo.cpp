#include "rlff/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlff/errors.hpp"
#include "rlff/parallel.hpp"

namespace rlff {

void GrpoConfig::validate() const
{
  if (group_size < 2) {
    throw GroupTooSmall("group_size must be >= 2");
  }
  if (contexts_per_step < 1) {
    throw InvalidValue("contexts_per_step must be >= 1");
  }
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw InvalidValue("clip_epsilon must lie in (0, 1)");
  }
  if (!(kl_beta >= 0.0)) {
    throw InvalidValue("kl_beta must be >= 0");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidValue("learning_rate must be >= 0");
  }
  if (epochs < 1) {
    throw InvalidValue("epochs must be >= 1");
  }
  if (!(std_floor > 0.0)) {
    throw InvalidValue("std_floor must be > 0");
  }
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor)
{
  if (rewards.size() < 2) {
    throw GroupTooSmall("advantage normalization needs at least two rewards, got " + std::to_string(rewards.size()));
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) {
    ss += (r - mean) * (r - mean);
  }
  const double sd = std::sqrt(ss / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (!(sd >= std_floor)) {
    return adv;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = (rewards[i] - mean) / sd;
  }
  return adv;
}

double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref)
{
  if (logp_new.size() != logp_ref.size()) {
    throw InvalidValue("kl_estimate: length mismatch");
  }
  double kl = 0.0;
  for (std::size_t t = 0; t < logp_new.size(); ++t) {
    const double d = logp_ref[t] - logp_new[t];
    kl += std::expm1(d) - d;
  }
  return kl;
}

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void require_finite(const std::vector<std::vector<double>>& seqs, const char* what)
{
  for (const auto& s : seqs) {
    for (double x : s) {
      if (!std::isfinite(x)) {
        throw NonFiniteInput(std::string("non-finite ") + what + " log-probability");
      }
    }
  }
}

struct Surrogate
{
  double value;
  bool clipped;
  bool ratio_gradient; // d value / d ratio == A (else 0)
};

Surrogate clipped_surrogate(double ratio, double advantage, double eps)
{
  const double clipped_ratio = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  const double plain = ratio * advantage;
  const double clipped = clipped_ratio * advantage;
  if (plain <= clipped) {
    return {plain, false, true};
  }
  // Strictly smaller clipped branch means the ratio sits outside the band.
  return {clipped, true, false};
}

} // namespace

ObjectiveResult grpo_objective(const GrpoGroup& group, const GrpoConfig& cfg)
{
  const auto g = group.advantages.size();
  if (g == 0 || group.logp_new.size() != g || group.logp_old.size() != g || group.logp_ref.size() != g) {
    throw InvalidValue("grpo_objective: group arrays must all have G entries");
  }
  require_finite(group.logp_new, "new-policy");
  require_finite(group.logp_old, "old-policy");
  require_finite(group.logp_ref, "reference-policy");

  ObjectiveResult out;
  out.terms.reserve(g);
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < g; ++i) {
    ObjectiveTerm term;
    term.ratio = std::exp(sum(group.logp_new[i]) - sum(group.logp_old[i]));
    const auto s = clipped_surrogate(term.ratio, group.advantages[i], cfg.clip_epsilon);
    term.surrogate = s.value;
    term.clipped = s.clipped;
    term.kl = kl_estimate(group.logp_new[i], group.logp_ref[i]);
    out.objective += term.surrogate - cfg.kl_beta * term.kl;
    out.mean_kl += term.kl;
    clipped += term.clipped ? 1 : 0;
    out.terms.push_back(term);
  }
  const double inv_g = 1.0 / static_cast<double>(g);
  out.objective *= inv_g;
  out.mean_kl *= inv_g;
  out.clip_fraction = static_cast<double>(clipped) * inv_g;
  return out;
}

// ---------------------------------------------------------------------------
// ToyPolicy

ToyPolicy::ToyPolicy(std::vector<std::string> vocab, int horizon) : vocab_(std::move(vocab)), horizon_(horizon)
{
  if (vocab_.size() < 2) {
    throw InvalidValue("toy policy needs at least two tokens");
  }
  if (horizon_ < 1 || horizon_ > 16) {
    throw InvalidValue("toy policy horizon must lie in [1, 16]");
  }
  logits_.assign(static_cast<std::size_t>(horizon_) * vocab_.size(), 0.0);
}

std::vector<std::string> ToyPolicy::default_vocab()
{
  return {"<think>", "</think>", "<response>", "</response>", std::string(kPadToken), "sorry", "feel", "listen",
          "understand", "help", "calm", "breathe", "talk", "hope", "okay", "tired"};
}

ToyPolicy ToyPolicy::with_template_prior(std::vector<std::string> vocab, int horizon, double strength)
{
  ToyPolicy p(std::move(vocab), horizon);
  if (horizon < 4) {
    throw InvalidValue("the tagged layout needs a horizon of at least 4");
  }
  // <think> content... </think> <response> content... </response>
  const int inner = horizon - 4;
  const int think_len = inner / 2;
  const int positions[4] = {0, 1 + think_len, 2 + think_len, horizon - 1};
  const char* tags[4] = {"<think>", "</think>", "<response>", "</response>"};
  for (int k = 0; k < 4; ++k) {
    p.logit(positions[k], p.token_id(tags[k])) = strength;
  }
  return p;
}

int ToyPolicy::token_id(std::string_view token) const
{
  const auto it = std::find(vocab_.begin(), vocab_.end(), token);
  if (it == vocab_.end()) {
    throw InvalidValue("token not in vocabulary: " + std::string(token));
  }
  return static_cast<int>(it - vocab_.begin());
}

std::vector<double> ToyPolicy::log_probs(int t) const
{
  const auto v = vocab_.size();
  const double* row = &logits_[index(t, 0)];
  const double mx = *std::max_element(row, row + v);
  double z = 0.0;
  for (std::size_t k = 0; k < v; ++k) {
    z += std::exp(row[k] - mx);
  }
  const double lse = mx + std::log(z);
  std::vector<double> out(v);
  for (std::size_t k = 0; k < v; ++k) {
    out[k] = row[k] - lse;
  }
  return out;
}

std::vector<double> ToyPolicy::probs(int t) const
{
  auto lp = log_probs(t);
  for (auto& x : lp) {
    x = std::exp(x);
  }
  return lp;
}

std::vector<double> ToyPolicy::token_logps(const std::vector<int>& tokens) const
{
  if (tokens.size() != static_cast<std::size_t>(horizon_)) {
    throw InvalidValue("sequence length does not match the policy horizon");
  }
  std::vector<double> out(tokens.size());
  for (int t = 0; t < horizon_; ++t) {
    out[static_cast<std::size_t>(t)] = log_probs(t)[static_cast<std::size_t>(tokens[static_cast<std::size_t>(t)])];
  }
  return out;
}

std::string ToyPolicy::render(const std::vector<int>& tokens) const
{
  std::string out;
  for (int id : tokens) {
    const auto& tok = vocab_[static_cast<std::size_t>(id)];
    if (tok == kPadToken) {
      continue;
    }
    if (!out.empty()) {
      out += ' ';
    }
    out += tok;
  }
  return out;
}

double ToyPolicy::exact_kl(const ToyPolicy& other) const
{
  if (other.vocab_ != vocab_ || other.horizon_ != horizon_) {
    throw InvalidValue("exact_kl: policies have different shapes");
  }
  double kl = 0.0;
  for (int t = 0; t < horizon_; ++t) {
    const auto lp = log_probs(t);
    const auto lq = other.log_probs(t);
    for (std::size_t v = 0; v < lp.size(); ++v) {
      kl += std::exp(lp[v]) * (lp[v] - lq[v]);
    }
  }
  return kl;
}

std::vector<ToySample> sample_toy(const ToyPolicy& policy, Rng& rng, int n)
{
  if (n < 1) {
    throw InvalidValue("sample_toy: n must be >= 1");
  }
  std::vector<std::vector<double>> lps(static_cast<std::size_t>(policy.horizon()));
  for (int t = 0; t < policy.horizon(); ++t) {
    lps[static_cast<std::size_t>(t)] = policy.log_probs(t);
  }
  std::vector<ToySample> out(static_cast<std::size_t>(n));
  for (auto& s : out) {
    s.tokens.resize(static_cast<std::size_t>(policy.horizon()));
    s.token_logp.resize(s.tokens.size());
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const auto& lp = lps[t];
      const double u = uniform01(rng);
      double cdf = 0.0;
      std::size_t pick = lp.size() - 1;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        cdf += std::exp(lp[v]);
        if (u < cdf) {
          pick = v;
          break;
        }
      }
      s.tokens[t] = static_cast<int>(pick);
      s.token_logp[t] = lp[pick];
      s.logp += lp[pick];
    }
  }
  return out;
}

ObjectiveGradient grpo_objective_gradient(const ToyPolicy& theta, const ToyPolicy& ref,
                                          std::span<const GrpoGroup> groups, const GrpoConfig& cfg)
{
  if (groups.empty()) {
    throw InvalidValue("grpo_objective_gradient: no groups");
  }
  const int horizon = theta.horizon();
  const auto vocab = static_cast<std::size_t>(theta.vocab_size());
  std::vector<std::vector<double>> lp_theta(static_cast<std::size_t>(horizon));
  std::vector<std::vector<double>> p_theta(static_cast<std::size_t>(horizon));
  std::vector<std::vector<double>> lp_ref(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    lp_theta[ti] = theta.log_probs(t);
    p_theta[ti] = theta.probs(t);
    lp_ref[ti] = ref.log_probs(t);
  }

  ObjectiveGradient out;
  out.gradient.assign(theta.parameters().size(), 0.0);
  std::size_t n_terms = 0;
  std::size_t n_clipped = 0;
  const double inv_groups = 1.0 / static_cast<double>(groups.size());

  for (const auto& group : groups) {
    const auto g = group.outputs.size();
    if (g == 0 || group.advantages.size() != g || group.logp_old.size() != g) {
      throw InvalidValue("grpo_objective_gradient: malformed group");
    }
    require_finite(group.logp_old, "old-policy");
    const double scale = inv_groups / static_cast<double>(g);
    for (std::size_t i = 0; i < g; ++i) {
      const auto& tokens = group.outputs[i];
      double logp_new = 0.0;
      double kl = 0.0;
      std::vector<double> kl_coef(tokens.size());
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        const auto a = static_cast<std::size_t>(tokens[t]);
        logp_new += lp_theta[t][a];
        const double d = lp_ref[t][a] - lp_theta[t][a];
        kl += std::expm1(d) - d;
        // d/dθ [exp(d) - d - 1] = (1 - exp(d)) * d logπθ/dθ
        kl_coef[t] = -std::expm1(d);
      }
      const double ratio = std::exp(logp_new - sum(group.logp_old[i]));
      if (!std::isfinite(ratio) || !std::isfinite(kl)) {
        throw NonFiniteInput("non-finite importance ratio or KL");
      }
      const auto s = clipped_surrogate(ratio, group.advantages[i], cfg.clip_epsilon);
      out.objective += scale * (s.value - cfg.kl_beta * kl);
      out.mean_kl += kl;
      n_clipped += s.clipped ? 1 : 0;
      ++n_terms;

      const double seq_coef = s.ratio_gradient ? group.advantages[i] * ratio : 0.0;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        // d logπθ(a_t)/d logit[t][v] = 1{v = a_t} - p_t(v)
        const double coef = scale * (seq_coef - cfg.kl_beta * kl_coef[t]);
        if (coef == 0.0) {
          continue;
        }
        const auto a = static_cast<std::size_t>(tokens[t]);
        double* row = &out.gradient[t * vocab];
        const auto& p = p_theta[t];
        for (std::size_t v = 0; v < vocab; ++v) {
          row[v] -= coef * p[v];
        }
        row[a] += coef;
      }
    }
  }
  out.mean_kl /= static_cast<double>(n_terms);
  out.clip_fraction = static_cast<double>(n_clipped) / static_cast<double>(n_terms);
  return out;
}

// ---------------------------------------------------------------------------
// Training

RewardFn make_rlff_reward(std::shared_ptr<const Scorer> scorer, RewardWeights weights, FutureSignal mode)
{
  weights.validate();
  if (!scorer) {
    throw InvalidValue("rlff reward needs a scorer");
  }
  return [scorer = std::move(scorer), weights, mode](const ConversationContext& ctx, const std::string& text) {
    RewardBreakdown r;
    const int fmt = format_reward(text);
    r.format = fmt;
    r.future = future_signal(score_response(*scorer, ctx, text), mode);
    r.total = combined_reward(r.future, fmt, weights);
    return r;
  };
}

RewardFn make_format_reward()
{
  return [](const ConversationContext&, const std::string& text) {
    RewardBreakdown r;
    r.format = format_reward(text);
    r.total = r.format;
    return r;
  };
}

StepResult grpo_step(const ToyPolicy& policy, const ToyPolicy& ref, std::span<const ConversationContext> contexts,
                     const RewardFn& reward_fn, const GrpoConfig& cfg, int step, std::uint64_t seed,
                     std::size_t workers)
{
  cfg.validate();
  if (contexts.empty()) {
    throw InvalidValue("grpo_step: no contexts");
  }
  const ToyPolicy old = policy; // π_old snapshot
  const auto n_ctx = contexts.size();
  std::vector<GrpoGroup> groups(n_ctx);
  std::vector<std::vector<RewardBreakdown>> breakdowns(n_ctx);

  parallel_for(n_ctx, workers, [&](std::size_t c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(step), c));
    auto samples = sample_toy(old, rng, cfg.group_size);
    auto& group = groups[c];
    group.context_id = std::to_string(c);
    for (auto& s : samples) {
      const auto r = reward_fn(contexts[c], old.render(s.tokens));
      if (!std::isfinite(r.total)) {
        throw NonFiniteInput("non-finite reward at step " + std::to_string(step));
      }
      breakdowns[c].push_back(r);
      group.rewards.push_back(r.total);
      group.outputs.push_back(std::move(s.tokens));
      group.logp_old.push_back(std::move(s.token_logp));
    }
    group.advantages = group_advantages(group.rewards, cfg.std_floor);
  });

  StepResult result{policy, {}};
  result.stats.step = step;
  std::size_t n = 0;
  for (const auto& bs : breakdowns) {
    for (const auto& r : bs) {
      result.stats.mean_reward += r.total;
      result.stats.mean_format_reward += r.format;
      result.stats.mean_future_reward += r.future;
      ++n;
    }
  }
  result.stats.mean_reward /= static_cast<double>(n);
  result.stats.mean_format_reward /= static_cast<double>(n);
  result.stats.mean_future_reward /= static_cast<double>(n);

  double kl_sum = 0.0;
  double clip_sum = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto og = grpo_objective_gradient(result.policy, ref, groups, cfg);
    if (epoch == 0) {
      result.stats.objective = og.objective;
    }
    kl_sum += og.mean_kl;
    clip_sum += og.clip_fraction;
    auto& params = result.policy.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      params[k] += cfg.learning_rate * og.gradient[k];
      if (!std::isfinite(params[k])) {
        throw NonFiniteInput("policy parameters became non-finite at step " + std::to_string(step));
      }
    }
  }
  result.stats.mean_kl = kl_sum / cfg.epochs;
  result.stats.clip_fraction = clip_sum / cfg.epochs;
  return result;
}

double format_adherence(const ToyPolicy& policy, Rng& rng, int n)
{
  int ok = 0;
  for (const auto& s : sample_toy(policy, rng, n)) {
    ok += format_reward(policy.render(s.tokens));
  }
  return static_cast<double>(ok) / n;
}

GrpoTrainer::GrpoTrainer(ToyPolicy initial, std::vector<ConversationContext> contexts, RewardFn reward_fn,
                         GrpoConfig cfg, std::uint64_t seed, std::size_t workers)
  : policy_(initial),
    ref_(std::move(initial)),
    contexts_(std::move(contexts)),
    reward_fn_(std::move(reward_fn)),
    cfg_(cfg),
    seed_(seed),
    workers_(workers)
{
  cfg_.validate();
  if (contexts_.empty()) {
    throw InvalidValue("GRPO trainer needs at least one context");
  }
}

StepStats GrpoTrainer::step()
{
  // Cycle through the context pool, contexts_per_step at a time.
  std::vector<ConversationContext> batch;
  batch.reserve(static_cast<std::size_t>(cfg_.contexts_per_step));
  for (int k = 0; k < cfg_.contexts_per_step; ++k) {
    const auto idx = (static_cast<std::size_t>(step_) * static_cast<std::size_t>(cfg_.contexts_per_step) +
                      static_cast<std::size_t>(k)) %
                     contexts_.size();
    batch.push_back(contexts_[idx]);
  }
  auto result = grpo_step(policy_, ref_, batch, reward_fn_, cfg_, step_, seed_, workers_);
  policy_ = std::move(result.policy);
  ++step_;
  return result.stats;
}

} // namespace rlff
