#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rlff/dialogue.hpp"
#include "rlff/llm_backend.hpp"
#include "rlff/prompts.hpp"

namespace rlff {

struct RewardRecord;

// ---------------------------------------------------------------------------
// Rule rewards

/// 1 iff `raw_output` satisfies the strict <think>/<response> grammar.
int format_reward(std::string_view raw_output);

/// 1 iff r > delta. Throws InvalidValue for a non-finite delta.
int binarize_reward(double r, double delta);

struct RewardWeights
{
  double alpha = 0.5;     // format reward weight
  double fut_weight = 1.0; // fixed

  void validate() const;
};

/// fut + alpha * fmt, with fut in [0, 1] and fmt in {0, 1}.
double combined_reward(double fut, int fmt, const RewardWeights& w);

// ---------------------------------------------------------------------------
// Training pairs

struct LabeledPair
{
  std::string input_text;
  int label = 0;

  bool operator==(const LabeledPair&) const = default;
};

/// The text a scorer sees for a D_r record: the candidate's canonical tagged
/// form when it parsed, its raw text otherwise.
std::string candidate_text(const RewardRecord& rec);

LabeledPair make_labeled_pair(const PromptSet& prompts, const RewardRecord& rec, double delta);

// ---------------------------------------------------------------------------
// Features

/// Hashed unigram presence (L2-normalized) over the rendered reward-model
/// input, plus log-scaled response length and a tag-wellformedness bit.
struct FeatureSpec
{
  int hash_bits = 16;
  int max_tokens = 2048; // keeps the last max_tokens tokens

  std::size_t dimension() const { return (std::size_t{1} << hash_bits) + 2; }
  std::size_t length_index() const { return std::size_t{1} << hash_bits; }
  std::size_t tag_index() const { return (std::size_t{1} << hash_bits) + 1; }
};

/// Sparse (index, value) list, indices strictly increasing.
using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;

/// Lower-cased alphanumeric runs; '<' '/' '>' are kept so protocol tags
/// survive as tokens.
std::vector<std::string> tokenize(std::string_view text);

SparseFeatures extract_features(const FeatureSpec& spec, std::string_view rendered_input,
                                std::string_view response_text);

// ---------------------------------------------------------------------------
// Logistic model (single logit + sigmoid, mean binary cross-entropy)

struct LogisticModel
{
  FeatureSpec spec;
  std::vector<double> weights; // spec.dimension()
  double bias = 0.0;

  explicit LogisticModel(FeatureSpec s = {});

  double logit(const SparseFeatures& x) const;
  double predict(const SparseFeatures& x) const;
};

double sigmoid(double z);

/// Mean BCE over the batch; uses log-sigmoid forms that stay finite.
double bce_loss(const LogisticModel& model, std::span<const SparseFeatures> xs, std::span<const int> ys);

/// Gradient of bce_loss w.r.t. (weights..., bias); size dimension() + 1.
std::vector<double> bce_gradient(const LogisticModel& model, std::span<const SparseFeatures> xs,
                                 std::span<const int> ys);

struct TrainerHyper
{
  double learning_rate = 1e-4;
  int epochs = 2;
  int batch_size = 1;
  int grad_accum_steps = 8;
  std::uint64_t seed = 0;
  bool shuffle = true;
  double init_scale = 0.0; // N(0, init_scale^2) initial weights when > 0
};

struct TrainingReport
{
  std::vector<double> epoch_loss; // full-data loss after each epoch
  int steps = 0;
  double final_loss = 0.0;
};

// ---------------------------------------------------------------------------
// Scorers

enum class ScorerKind
{
  Featurized,
  Remote,
  Scripted,
};

/// R_fut: probability in [0, 1] that a response resolves the user's issue.
class Scorer
{
public:
  virtual ~Scorer() = default;
  virtual ScorerKind kind() const = 0;
  virtual double score(const ConversationContext& ctx, std::string_view response_text) const = 0;
};

class FeaturizedScorer final : public Scorer
{
public:
  FeaturizedScorer(LogisticModel model, PromptSet prompts, TrainingReport report = {});

  ScorerKind kind() const override { return ScorerKind::Featurized; }
  double score(const ConversationContext& ctx, std::string_view response_text) const override;

  const LogisticModel& model() const { return model_; }
  LogisticModel& model() { return model_; }
  const TrainingReport& report() const { return report_; }
  SparseFeatures features(const ConversationContext& ctx, std::string_view response_text) const;
  /// Probability for text already rendered through the reward-model template.
  double score_input(std::string_view rendered) const;

private:
  LogisticModel model_;
  PromptSet prompts_;
  TrainingReport report_;
};

/// Table-driven: exact response-text lookups first, then the fraction of
/// response tokens that belong to `favored_tokens`, else `default_score`.
class ScriptedScorer final : public Scorer
{
public:
  struct Table
  {
    std::map<std::string, double> exact;
    std::vector<std::string> favored_tokens;
    double default_score = 0.0;
  };

  explicit ScriptedScorer(Table table);

  ScorerKind kind() const override { return ScorerKind::Scripted; }
  double score(const ConversationContext& ctx, std::string_view response_text) const override;

private:
  Table table_;
};

/// POSTs {"input": <rendered reward-model text>} and reads {"score": p}.
class RemoteScorer final : public Scorer
{
public:
  RemoteScorer(RemoteBackendConfig cfg, PromptSet prompts);

  ScorerKind kind() const override { return ScorerKind::Remote; }
  double score(const ConversationContext& ctx, std::string_view response_text) const override;

private:
  RemoteBackendConfig cfg_;
  PromptSet prompts_;
};

/// Logistic regression by mini-batch gradient descent on mean BCE. One step
/// consumes batch_size * grad_accum_steps examples. Throws DegenerateLabels
/// unless both classes are present.
FeaturizedScorer train_scorer(const std::vector<LabeledPair>& pairs, const TrainerHyper& hyper,
                              const FeatureSpec& spec = {}, const PromptSet& prompts = PromptSet::defaults());

double score_response(const Scorer& scorer, const ConversationContext& ctx, std::string_view response_text);

enum class FutureSignal
{
  Probability,
  HardLabel, // 1 if probability > 0.5
};

double future_signal(double probability, FutureSignal mode);

} // namespace rlff
