#include <doctest.h>

#include <cmath>
#include <random>

#include "rlff/errors.hpp"
#include "rlff/reward.hpp"
#include "rlff/simulator.hpp"
#include "support.hpp"

using namespace rlff;
using namespace rlff::test;

namespace {

// Labels follow one word in the response; everything else is shared.
std::vector<LabeledPair> separable_pairs(int n)
{
  const auto prompts = PromptSet::defaults();
  const std::vector<std::string> filler = {"today", "maybe", "together", "slowly", "now"};
  std::vector<LabeledPair> out;
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    const auto resp = tagged("think", std::string(pos ? "calm" : "angry") + " " + filler[i % filler.size()]);
    out.push_back({render_reward_input(prompts, short_context(), resp), pos ? 1 : 0});
  }
  return out;
}

double loss_with(LogisticModel m, const std::vector<SparseFeatures>& xs, const std::vector<int>& ys, std::size_t idx,
                 double delta)
{
  if (idx == m.weights.size()) {
    m.bias += delta;
  } else {
    m.weights[idx] += delta;
  }
  return bce_loss(m, xs, ys);
}

} // namespace

TEST_CASE("combined reward values")
{
  CHECK(combined_reward(0.9, 1, {}) == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(combined_reward(0.9, 0, {}) == doctest::Approx(0.9));
  CHECK(combined_reward(0.0, 1, {0.0, 1.0}) == 0.0);
  CHECK_THROWS_AS(combined_reward(1.2, 1, {}), InvalidValue);
  CHECK_THROWS_AS(combined_reward(0.5, 2, {}), InvalidValue);
  CHECK_THROWS_AS(combined_reward(0.5, 1, {-0.1, 1.0}), InvalidValue);
  CHECK_THROWS_AS(combined_reward(0.5, 1, {0.5, 2.0}), InvalidValue);
}

TEST_CASE("binarization is strict")
{
  CHECK(binarize_reward(0.51, 0.5) == 1);
  CHECK(binarize_reward(0.5, 0.5) == 0);
  CHECK(binarize_reward(0.125, 0.1) == 1);
  CHECK_THROWS_AS(binarize_reward(0.5, std::nan("")), InvalidValue);
}

TEST_CASE("labeled pairs render the reward-model input")
{
  RewardRecord rec;
  rec.context = short_context();
  rec.candidate = {"t", "I am here for you.", "", true};
  rec.future_reward = 0.75;
  const auto p = make_labeled_pair(PromptSet::defaults(), rec, 0.5);
  CHECK(p.label == 1);
  CHECK(p.input_text.find("<response>I am here for you.</response>") != std::string::npos);
  CHECK(p.input_text.find("I cannot sleep") != std::string::npos);
  CHECK(p.input_text.find("{system response}") == std::string::npos);
}

TEST_CASE("tokenizer keeps protocol tags")
{
  const auto t = tokenize("<think>Hi, you!</think> <response>OK2</response> a<b");
  const std::vector<std::string> want = {"<think>", "hi", "you", "</think>", "<response>", "ok2", "</response>", "a", "b"};
  CHECK(t == want);
}

TEST_CASE("features are L2-normalized with length and tag entries")
{
  FeatureSpec spec;
  spec.hash_bits = 10;
  const auto x = extract_features(spec, "a b c d a", tagged("t", "r"));
  double sq = 0.0;
  for (const auto& [i, v] : x) {
    if (i < spec.length_index()) {
      sq += v * v;
    }
  }
  CHECK(sq == doctest::Approx(1.0));
  CHECK(x.back().first == spec.tag_index());
  CHECK(x.back().second == 1.0);
  CHECK(extract_features(spec, "a", "plain").back().second == 0.0);
  for (std::size_t k = 1; k < x.size(); ++k) {
    CHECK(x[k - 1].first < x[k].first);
  }
}

TEST_CASE("BCE gradient matches central differences")
{
  FeatureSpec spec;
  spec.hash_bits = 6;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 0.7);
  LogisticModel m(spec);
  for (auto& w : m.weights) {
    w = normal(rng);
  }
  m.bias = 0.3;
  std::vector<SparseFeatures> xs;
  std::vector<int> ys;
  for (const auto& p : separable_pairs(12)) {
    xs.push_back(extract_features(spec, p.input_text, "x y"));
    ys.push_back(p.label);
  }
  const auto g = bce_gradient(m, xs, ys);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double fd = (loss_with(m, xs, ys, i, h) - loss_with(m, xs, ys, i, -h)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-4});
    worst = std::max(worst, std::abs(fd - g[i]) / scale);
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("loss stays finite at extreme logits")
{
  LogisticModel m;
  m.bias = 800.0;
  const std::vector<SparseFeatures> xs = {{}};
  CHECK(bce_loss(m, xs, std::vector<int>{0}) == doctest::Approx(800.0));
  CHECK(bce_loss(m, xs, std::vector<int>{1}) < 1e-300);
  CHECK(sigmoid(-800.0) >= 0.0);
}

TEST_CASE("training on a separable fixture")
{
  const auto pairs = separable_pairs(20);
  TrainerHyper h;
  h.learning_rate = 5.0;
  h.epochs = 500;
  h.batch_size = 20;
  h.grad_accum_steps = 1;
  h.shuffle = false;
  const auto scorer = train_scorer(pairs, h);
  CHECK(scorer.report().steps == 500);
  CHECK(scorer.report().final_loss < 0.1);

  const auto again = train_scorer(pairs, h);
  CHECK(again.model().weights == scorer.model().weights);
  CHECK(again.model().bias == scorer.model().bias);

  const double good = scorer.score(short_context(), tagged("think", "calm today"));
  const double bad = scorer.score(short_context(), tagged("think", "angry today"));
  CHECK(good > 0.8);
  CHECK(bad < 0.2);
}

TEST_CASE("small steps never increase the full-batch loss")
{
  const auto pairs = separable_pairs(20);
  TrainerHyper h;
  h.learning_rate = 1e-3;
  h.epochs = 200;
  h.batch_size = 20;
  h.grad_accum_steps = 1;
  h.shuffle = false;
  const auto& loss = train_scorer(pairs, h).report().epoch_loss;
  for (std::size_t i = 1; i < loss.size(); ++i) {
    CHECK(loss[i] <= loss[i - 1]);
  }
  CHECK(loss.back() < loss.front());
}

TEST_CASE("steps consume batch_size * grad_accum examples")
{
  const auto pairs = separable_pairs(20);
  TrainerHyper h; // batch 1, accumulation 8, two epochs
  CHECK(train_scorer(pairs, h).report().steps == 2 * 3);
}

TEST_CASE("single-class data is rejected with counts")
{
  std::vector<LabeledPair> pairs = {{"a", 1}, {"b", 1}, {"c", 1}};
  try {
    train_scorer(pairs, {});
    FAIL("expected DegenerateLabels");
  } catch (const DegenerateLabels& e) {
    CHECK(e.positives == 3);
    CHECK(e.negatives == 0);
  }
}

TEST_CASE("scripted scorer")
{
  ScriptedScorer::Table t;
  t.exact["exactly this"] = 0.9;
  t.favored_tokens = {"listen", "help"};
  t.default_score = 0.1;
  const ScriptedScorer s(t);
  const auto ctx = short_context();
  CHECK(s.score(ctx, "exactly this") == 0.9);
  CHECK(s.score(ctx, tagged("x", "exactly this")) == 0.9);
  CHECK(s.score(ctx, tagged("listen listen", "I listen and help you")) == doctest::Approx(2.0 / 5.0));
  CHECK(s.score(ctx, "") == 0.1);
  ScriptedScorer::Table bad;
  bad.default_score = 2.0;
  CHECK_THROWS_AS(ScriptedScorer{bad}, InvalidValue);
}

TEST_CASE("future signal modes")
{
  CHECK(future_signal(0.7, FutureSignal::Probability) == 0.7);
  CHECK(future_signal(0.7, FutureSignal::HardLabel) == 1.0);
  CHECK(future_signal(0.5, FutureSignal::HardLabel) == 0.0);
}
