#include "rlff/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "rlff/errors.hpp"
#include "rlff/random.hpp"
#include "rlff/simulator.hpp"

namespace rlff {

int format_reward(std::string_view raw_output) { return is_format_ok(parse_tagged_output(raw_output)) ? 1 : 0; }

int binarize_reward(double r, double delta)
{
  if (!std::isfinite(delta)) {
    throw InvalidValue("delta must be finite");
  }
  return r > delta ? 1 : 0;
}

void RewardWeights::validate() const
{
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw InvalidValue("alpha must be >= 0");
  }
  if (fut_weight != 1.0) {
    throw InvalidValue("the future-reward weight is fixed at 1");
  }
}

double combined_reward(double fut, int fmt, const RewardWeights& w)
{
  w.validate();
  if (!(fut >= 0.0 && fut <= 1.0)) {
    throw InvalidValue("future reward must lie in [0, 1]");
  }
  if (fmt != 0 && fmt != 1) {
    throw InvalidValue("format reward must be 0 or 1");
  }
  return w.fut_weight * fut + w.alpha * fmt;
}

std::string candidate_text(const RewardRecord& rec) { return render_tagged(rec.candidate); }

LabeledPair make_labeled_pair(const PromptSet& prompts, const RewardRecord& rec, double delta)
{
  return {render_reward_input(prompts, rec.context, candidate_text(rec)), binarize_reward(rec.future_reward, delta)};
}

// ---------------------------------------------------------------------------
// Features

std::vector<std::string> tokenize(std::string_view text)
{
  static constexpr std::string_view kTags[] = {"<think>", "</think>", "<response>", "</response>"};
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '<') {
      bool matched = false;
      for (auto tag : kTags) {
        if (text.substr(i, tag.size()) == tag) {
          flush();
          out.emplace_back(tag);
          i += tag.size();
          matched = true;
          break;
        }
      }
      if (matched) {
        continue;
      }
    }
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isalnum(c) != 0) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
    ++i;
  }
  flush();
  return out;
}

SparseFeatures extract_features(const FeatureSpec& spec, std::string_view rendered_input,
                                std::string_view response_text)
{
  if (spec.hash_bits < 1 || spec.hash_bits > 24) {
    throw InvalidValue("hash_bits must lie in [1, 24]");
  }
  auto tokens = tokenize(rendered_input);
  if (spec.max_tokens > 0 && tokens.size() > static_cast<std::size_t>(spec.max_tokens)) {
    tokens.erase(tokens.begin(), tokens.end() - spec.max_tokens);
  }
  const std::uint64_t mask = (std::uint64_t{1} << spec.hash_bits) - 1;
  std::set<std::uint32_t> buckets;
  for (const auto& t : tokens) {
    buckets.insert(static_cast<std::uint32_t>(fnv1a(t) & mask));
  }

  SparseFeatures x;
  x.reserve(buckets.size() + 2);
  const double norm = buckets.empty() ? 0.0 : 1.0 / std::sqrt(static_cast<double>(buckets.size()));
  for (auto b : buckets) {
    x.emplace_back(b, norm);
  }
  const auto resp_tokens = static_cast<double>(tokenize(response_text).size());
  x.emplace_back(static_cast<std::uint32_t>(spec.length_index()), std::log1p(resp_tokens) / std::log1p(static_cast<double>(std::max(spec.max_tokens, 1))));
  x.emplace_back(static_cast<std::uint32_t>(spec.tag_index()), static_cast<double>(format_reward(response_text)));
  return x;
}

// ---------------------------------------------------------------------------
// Logistic model

double sigmoid(double z)
{
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_batch(std::span<const SparseFeatures> xs, std::span<const int> ys)
{
  if (xs.size() != ys.size() || xs.empty()) {
    throw InvalidValue("feature/label batch size mismatch or empty batch");
  }
}

} // namespace

LogisticModel::LogisticModel(FeatureSpec s) : spec(s), weights(s.dimension(), 0.0) {}

double LogisticModel::logit(const SparseFeatures& x) const
{
  double z = bias;
  for (const auto& [i, v] : x) {
    z += weights[i] * v;
  }
  return z;
}

double LogisticModel::predict(const SparseFeatures& x) const { return sigmoid(logit(x)); }

double bce_loss(const LogisticModel& model, std::span<const SparseFeatures> xs, std::span<const int> ys)
{
  check_batch(xs, ys);
  double sum = 0.0;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const double z = model.logit(xs[n]);
    // -log(sigmoid(z)) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    sum += ys[n] == 1 ? softplus(-z) : softplus(z);
  }
  return sum / static_cast<double>(xs.size());
}

std::vector<double> bce_gradient(const LogisticModel& model, std::span<const SparseFeatures> xs,
                                 std::span<const int> ys)
{
  check_batch(xs, ys);
  std::vector<double> g(model.weights.size() + 1, 0.0);
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const double residual = (model.predict(xs[n]) - ys[n]) * inv_n;
    for (const auto& [i, v] : xs[n]) {
      g[i] += residual * v;
    }
    g.back() += residual;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Scorers

FeaturizedScorer::FeaturizedScorer(LogisticModel model, PromptSet prompts, TrainingReport report)
  : model_(std::move(model)), prompts_(std::move(prompts)), report_(std::move(report))
{
  if (model_.weights.size() != model_.spec.dimension()) {
    throw InvalidValue("logistic model weight count does not match its feature spec");
  }
}

SparseFeatures FeaturizedScorer::features(const ConversationContext& ctx, std::string_view response_text) const
{
  return extract_features(model_.spec, render_reward_input(prompts_, ctx, response_text), response_text);
}

double FeaturizedScorer::score(const ConversationContext& ctx, std::string_view response_text) const
{
  return model_.predict(features(ctx, response_text));
}

ScriptedScorer::ScriptedScorer(Table table) : table_(std::move(table))
{
  auto in_range = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (const auto& [k, v] : table_.exact) {
    if (!in_range(v)) {
      throw InvalidValue("scripted score for '" + k + "' outside [0, 1]");
    }
  }
  if (!in_range(table_.default_score)) {
    throw InvalidValue("scripted default score outside [0, 1]");
  }
}

double ScriptedScorer::score(const ConversationContext&, std::string_view response_text) const
{
  const auto parsed = parse_tagged_output(response_text);
  const auto* tagged = std::get_if<TaggedOutput>(&parsed);
  if (auto it = table_.exact.find(std::string(response_text)); it != table_.exact.end()) {
    return it->second;
  }
  if (tagged != nullptr) {
    if (auto it = table_.exact.find(tagged->response); it != table_.exact.end()) {
      return it->second;
    }
  }
  if (table_.favored_tokens.empty()) {
    return table_.default_score;
  }
  std::size_t total = 0;
  std::size_t favored = 0;
  for (const auto& tok : tokenize(tagged != nullptr ? std::string_view(tagged->response) : response_text)) {
    if (tok.front() == '<') {
      continue;
    }
    ++total;
    if (std::find(table_.favored_tokens.begin(), table_.favored_tokens.end(), tok) != table_.favored_tokens.end()) {
      ++favored;
    }
  }
  return total == 0 ? table_.default_score : static_cast<double>(favored) / static_cast<double>(total);
}

RemoteScorer::RemoteScorer(RemoteBackendConfig cfg, PromptSet prompts) : cfg_(std::move(cfg)), prompts_(std::move(prompts)) {}

double RemoteScorer::score(const ConversationContext& ctx, std::string_view response_text) const
{
  const nlohmann::json body = {{"input", render_reward_input(prompts_, ctx, response_text)}};
  const auto reply = http_post_json(cfg_, cfg_.path, body.dump());
  double p = 0.0;
  try {
    p = nlohmann::json::parse(reply).at("score").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendUnavailable(std::string("malformed scorer response: ") + e.what());
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw BackendUnavailable("scorer returned a value outside [0, 1]");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Training

namespace {

// Recovers the response segment from a rendered reward-model input: the
// template text between the conversation and response slots marks where the
// response begins.
std::string_view recover_response(const PromptSet& prompts, std::string_view input)
{
  const std::string& tmpl = prompts.reward_model_input;
  const auto conv = tmpl.find("{conversation context}");
  const auto resp = tmpl.find("{system response}");
  if (conv == std::string::npos || resp == std::string::npos || resp < conv) {
    return input;
  }
  const auto between_begin = conv + std::string_view("{conversation context}").size();
  const std::string_view marker(tmpl.data() + between_begin, resp - between_begin);
  const std::string_view suffix(tmpl.data() + resp + std::string_view("{system response}").size());
  const auto at = input.rfind(marker);
  if (marker.empty() || at == std::string_view::npos) {
    return input;
  }
  auto out = input.substr(at + marker.size());
  if (!suffix.empty() && out.size() >= suffix.size() && out.substr(out.size() - suffix.size()) == suffix) {
    out.remove_suffix(suffix.size());
  }
  return out;
}

} // namespace

double FeaturizedScorer::score_input(std::string_view rendered) const
{
  return model_.predict(extract_features(model_.spec, rendered, recover_response(prompts_, rendered)));
}

FeaturizedScorer train_scorer(const std::vector<LabeledPair>& pairs, const TrainerHyper& hyper,
                              const FeatureSpec& spec, const PromptSet& prompts)
{
  std::size_t pos = 0;
  std::size_t neg = 0;
  for (const auto& p : pairs) {
    (p.label == 1 ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) {
    throw DegenerateLabels(pos, neg);
  }
  if (hyper.epochs < 1 || hyper.batch_size < 1 || hyper.grad_accum_steps < 1 || !(hyper.learning_rate >= 0.0)) {
    throw InvalidValue("invalid trainer hyper-parameters");
  }

  std::vector<SparseFeatures> xs;
  std::vector<int> ys;
  xs.reserve(pairs.size());
  ys.reserve(pairs.size());
  for (const auto& p : pairs) {
    xs.push_back(extract_features(spec, p.input_text, recover_response(prompts, p.input_text)));
    ys.push_back(p.label);
  }

  Rng rng(hyper.seed);
  LogisticModel model(spec);
  if (hyper.init_scale > 0.0) {
    std::normal_distribution<double> normal(0.0, hyper.init_scale);
    for (auto& w : model.weights) {
      w = normal(rng);
    }
  }

  TrainingReport report;
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto effective = static_cast<std::size_t>(hyper.batch_size) * static_cast<std::size_t>(hyper.grad_accum_steps);
  std::vector<SparseFeatures> bx;
  std::vector<int> by;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (hyper.shuffle) {
      portable_shuffle(order, rng);
    }
    for (std::size_t start = 0; start < order.size(); start += effective) {
      const auto stop = std::min(order.size(), start + effective);
      bx.clear();
      by.clear();
      for (auto k = start; k < stop; ++k) {
        bx.push_back(xs[order[k]]);
        by.push_back(ys[order[k]]);
      }
      const auto g = bce_gradient(model, bx, by);
      for (std::size_t i = 0; i < model.weights.size(); ++i) {
        model.weights[i] -= hyper.learning_rate * g[i];
      }
      model.bias -= hyper.learning_rate * g.back();
      ++report.steps;
    }
    report.epoch_loss.push_back(bce_loss(model, xs, ys));
  }
  report.final_loss = report.epoch_loss.back();
  return FeaturizedScorer(std::move(model), prompts, std::move(report));
}

double score_response(const Scorer& scorer, const ConversationContext& ctx, std::string_view response_text)
{
  const double p = scorer.score(ctx, response_text);
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidValue("scorer produced a value outside [0, 1]");
  }
  return p;
}

double future_signal(double probability, FutureSignal mode)
{
  return mode == FutureSignal::HardLabel ? (probability > 0.5 ? 1.0 : 0.0) : probability;
}

} // namespace rlff
