#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rlff/dialogue.hpp"
#include "rlff/random.hpp"
#include "rlff/reward.hpp"

namespace rlff {

struct GrpoConfig
{
  int group_size = 4;          // G
  int contexts_per_step = 4;   // batch size
  double clip_epsilon = 0.2;   // ε
  double kl_beta = 0.04;       // β
  double learning_rate = 1e-6; // toy runs override this
  int epochs = 2;              // gradient passes over each sampled batch
  double std_floor = 1e-8;

  void validate() const;
};

/// (r - mean) / std with the population std; all zeros when std < std_floor.
/// Throws GroupTooSmall for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

/// Sum over tokens of the k3 estimator exp(d) - d - 1 with d = ref - new.
double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref);

struct GrpoGroup
{
  std::string context_id;
  std::vector<std::vector<int>> outputs;
  std::vector<double> rewards;
  std::vector<double> advantages;
  // Per-output, per-token log-probabilities under π_θ, π_old and π_ref.
  std::vector<std::vector<double>> logp_new;
  std::vector<std::vector<double>> logp_old;
  std::vector<std::vector<double>> logp_ref;
};

struct ObjectiveTerm
{
  double ratio = 1.0;     // π_θ(o|c) / π_old(o|c)
  double surrogate = 0.0; // min(ρA, clip(ρ)A)
  double kl = 0.0;
  bool clipped = false;   // clipped branch strictly smaller than ρA
};

struct ObjectiveResult
{
  double objective = 0.0; // to be maximized
  std::vector<ObjectiveTerm> terms;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

/// (1/G) Σ_i [min(ρ_i A_i, clip(ρ_i, 1-ε, 1+ε) A_i) - β KL_i] with
/// sequence-level ratios. Throws NonFiniteInput on NaN/inf log-probabilities.
ObjectiveResult grpo_objective(const GrpoGroup& group, const GrpoConfig& cfg);

// ---------------------------------------------------------------------------
// Toy policy: independent categorical per position over a small vocabulary.

class ToyPolicy
{
public:
  ToyPolicy(std::vector<std::string> vocab, int horizon);

  /// Vocabulary with the four protocol tags, a padding token and a handful
  /// of content words.
  static std::vector<std::string> default_vocab();

  /// Logit `strength` on the canonical tagged layout at each position, all
  /// other logits zero.
  static ToyPolicy with_template_prior(std::vector<std::string> vocab, int horizon, double strength);

  int horizon() const { return horizon_; }
  int vocab_size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  int token_id(std::string_view token) const;

  double& logit(int t, int v) { return logits_[index(t, v)]; }
  double logit(int t, int v) const { return logits_[index(t, v)]; }
  std::vector<double>& parameters() { return logits_; }
  const std::vector<double>& parameters() const { return logits_; }

  std::vector<double> probs(int t) const;
  std::vector<double> log_probs(int t) const;
  std::vector<double> token_logps(const std::vector<int>& tokens) const;

  /// Tokens joined by spaces; padding renders as nothing.
  std::string render(const std::vector<int>& tokens) const;

  /// Σ_t KL(this_t || other_t), exact.
  double exact_kl(const ToyPolicy& other) const;

  bool operator==(const ToyPolicy&) const = default;

private:
  std::size_t index(int t, int v) const
  {
    return static_cast<std::size_t>(t) * vocab_.size() + static_cast<std::size_t>(v);
  }

  std::vector<std::string> vocab_;
  int horizon_;
  std::vector<double> logits_;
};

inline constexpr std::string_view kPadToken = "<pad>";

struct ToySample
{
  std::vector<int> tokens;
  std::vector<double> token_logp;
  double logp = 0.0;
};

/// Ancestral sampling, one position at a time, with exact log-probabilities.
std::vector<ToySample> sample_toy(const ToyPolicy& policy, Rng& rng, int n);

/// Objective and its analytic gradient w.r.t. `theta`'s logits for groups
/// whose outputs, advantages and π_old log-probabilities are fixed. The
/// groups' logp_new/logp_ref are ignored and recomputed from the policies.
struct ObjectiveGradient
{
  double objective = 0.0;
  std::vector<double> gradient;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

ObjectiveGradient grpo_objective_gradient(const ToyPolicy& theta, const ToyPolicy& ref,
                                          std::span<const GrpoGroup> groups, const GrpoConfig& cfg);

// ---------------------------------------------------------------------------
// Training

struct RewardBreakdown
{
  double total = 0.0;
  double format = 0.0;
  double future = 0.0;
};

using RewardFn = std::function<RewardBreakdown(const ConversationContext&, const std::string&)>;

/// R_rlff = R_fut + α R_fmt, with R_fut from `scorer`.
RewardFn make_rlff_reward(std::shared_ptr<const Scorer> scorer, RewardWeights weights,
                          FutureSignal mode = FutureSignal::Probability);

/// Format reward alone.
RewardFn make_format_reward();

struct StepStats
{
  int step = 0;
  double mean_reward = 0.0;
  double mean_format_reward = 0.0;
  double mean_future_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double objective = 0.0;
};

struct StepResult
{
  ToyPolicy policy;
  StepStats stats;
};

/// Samples G outputs per context from the current policy (π_old), scores
/// them, normalizes advantages per group and takes `cfg.epochs` gradient
/// ascent steps on the objective. Context c at step s draws from the
/// substream derive_seed(seed, s, c), so results do not depend on `workers`.
StepResult grpo_step(const ToyPolicy& policy, const ToyPolicy& ref, std::span<const ConversationContext> contexts,
                     const RewardFn& reward_fn, const GrpoConfig& cfg, int step, std::uint64_t seed,
                     std::size_t workers = 1);

/// Fraction of n samples that satisfy the tagged grammar.
double format_adherence(const ToyPolicy& policy, Rng& rng, int n);

class GrpoTrainer
{
public:
  GrpoTrainer(ToyPolicy initial, std::vector<ConversationContext> contexts, RewardFn reward_fn, GrpoConfig cfg,
              std::uint64_t seed, std::size_t workers = 1);

  StepStats step();

  const ToyPolicy& policy() const { return policy_; }
  const ToyPolicy& reference() const { return ref_; }
  int steps_done() const { return step_; }

private:
  ToyPolicy policy_;
  ToyPolicy ref_;
  std::vector<ConversationContext> contexts_;
  RewardFn reward_fn_;
  GrpoConfig cfg_;
  std::uint64_t seed_;
  std::size_t workers_;
  int step_ = 0;
};

} // namespace rlff
