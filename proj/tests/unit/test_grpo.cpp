#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rlff/errors.hpp"
#include "rlff/grpo.hpp"
#include "rlff/tagged_output.hpp"
#include "support.hpp"

using namespace rlff;
using namespace rlff::test;

namespace {

double pop_std(const std::vector<double>& r)
{
  const double m = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  double s = 0.0;
  for (double x : r) {
    s += (x - m) * (x - m);
  }
  return std::sqrt(s / static_cast<double>(r.size()));
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Groups whose π_old differs from θ by a fixed per-sequence offset.
std::vector<GrpoGroup> make_groups(const ToyPolicy& theta, const std::vector<double>& old_shift, std::uint64_t seed)
{
  Rng rng(seed);
  GrpoGroup g;
  g.context_id = "c";
  const auto samples = sample_toy(theta, rng, static_cast<int>(old_shift.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    g.outputs.push_back(samples[i].tokens);
    auto old = samples[i].token_logp;
    old[0] += old_shift[i];
    g.logp_old.push_back(old);
    g.rewards.push_back(static_cast<double>(i % 2));
  }
  g.advantages = group_advantages(g.rewards, 1e-8);
  return {g};
}

double direct_objective(const ToyPolicy& theta, const ToyPolicy& ref, std::vector<GrpoGroup> groups,
                        const GrpoConfig& cfg)
{
  double total = 0.0;
  for (auto& g : groups) {
    g.logp_new.clear();
    g.logp_ref.clear();
    for (const auto& o : g.outputs) {
      g.logp_new.push_back(theta.token_logps(o));
      g.logp_ref.push_back(ref.token_logps(o));
    }
    total += grpo_objective(g, cfg).objective;
  }
  return total / static_cast<double>(groups.size());
}

} // namespace

TEST_CASE("group advantages")
{
  const std::vector<double> r = {1, 0, 0, 1};
  const auto a = group_advantages(r, 1e-8);
  const std::vector<double> want = {1, -1, -1, 1};
  CHECK(a == want);

  const std::vector<double> flat = {0.3, 0.3, 0.3};
  CHECK(group_advantages(flat, 1e-8) == std::vector<double>(3, 0.0));

  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}, 1e-8), GroupTooSmall);

  const std::vector<double> raw = {0.1, 0.7, 0.35, 0.9, 0.2};
  const double m = sum(raw) / 5.0;
  const double s = pop_std(raw);
  const auto adv = group_advantages(raw, 1e-8);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(adv[i] == doctest::Approx((raw[i] - m) / s).epsilon(1e-12));
  }
  CHECK(std::abs(sum(adv)) < 1e-12);
}

TEST_CASE("advantages ignore positive affine reward changes")
{
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(6);
    for (auto& x : r) {
      x = uniform01(rng);
    }
    const double a = 0.1 + 10.0 * uniform01(rng);
    const double b = 5.0 * uniform01(rng) - 2.5;
    std::vector<double> t(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      t[i] = a * r[i] + b;
    }
    const auto x = group_advantages(r, 1e-8);
    const auto y = group_advantages(t, 1e-8);
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(std::abs(x[i] - y[i]) < 1e-9);
    }
  }
}

TEST_CASE("k3 KL estimate")
{
  const std::vector<double> nw = {-1.0, -2.0, -0.5};
  const std::vector<double> rf = {-1.2, -1.5, -0.5};
  double want = 0.0;
  for (std::size_t i = 0; i < nw.size(); ++i) {
    const double d = rf[i] - nw[i];
    want += std::exp(d) - d - 1.0;
  }
  CHECK(kl_estimate(nw, rf) == doctest::Approx(want).epsilon(1e-14));
  CHECK(kl_estimate(nw, nw) == 0.0);
  CHECK(kl_estimate(nw, rf) > 0.0);
}

TEST_CASE("objective clipping by hand")
{
  GrpoConfig cfg;
  cfg.clip_epsilon = 0.2;
  cfg.kl_beta = 0.0;
  GrpoGroup g;
  g.outputs = {{0}, {1}};
  g.advantages = {1.0, -1.0};
  g.rewards = {1.0, 0.0};
  // ρ_0 = e^{0.5} > 1.2 with A > 0: clipped to 1.2.
  // ρ_1 = e^{-0.5} < 0.8 with A < 0: min(-0.6065, -0.8) = -0.8, clipped.
  g.logp_new = {{-0.5}, {-1.5}};
  g.logp_old = {{-1.0}, {-1.0}};
  g.logp_ref = {{-1.0}, {-1.0}};
  const auto res = grpo_objective(g, cfg);
  CHECK(res.terms[0].ratio == doctest::Approx(std::exp(0.5)));
  CHECK(res.terms[0].surrogate == doctest::Approx(1.2));
  CHECK(res.terms[1].surrogate == doctest::Approx(-0.8));
  CHECK(res.terms[0].clipped);
  CHECK(res.terms[1].clipped);
  CHECK(res.clip_fraction == 1.0);
  CHECK(res.objective == doctest::Approx((1.2 - 0.8) / 2.0));

  // Within the trust region nothing clips.
  g.logp_new = {{-0.95}, {-1.05}};
  const auto in = grpo_objective(g, cfg);
  CHECK(in.clip_fraction == 0.0);
  CHECK(in.objective == doctest::Approx((std::exp(0.05) - std::exp(-0.05)) / 2.0));

  cfg.kl_beta = 0.5;
  const auto with_kl = grpo_objective(g, cfg);
  const double kl0 = std::exp(-0.05) + 0.05 - 1.0;
  const double kl1 = std::exp(0.05) - 0.05 - 1.0;
  CHECK(with_kl.objective == doctest::Approx(in.objective - 0.5 * (kl0 + kl1) / 2.0));

  g.logp_new[0][0] = std::nan("");
  CHECK_THROWS_AS(grpo_objective(g, cfg), NonFiniteInput);
}

TEST_CASE("sampler log-probabilities agree with the policy")
{
  auto p = ToyPolicy::with_template_prior(ToyPolicy::default_vocab(), 8, 2.0);
  Rng rng(3);
  const auto samples = sample_toy(p, rng, 50);
  for (const auto& s : samples) {
    const auto lp = p.token_logps(s.tokens);
    CHECK(lp == s.token_logp);
    CHECK(s.logp == doctest::Approx(sum(lp)));
  }
  double z = 0.0;
  for (double q : p.probs(0)) {
    z += q;
  }
  CHECK(z == doctest::Approx(1.0));
  CHECK(p.exact_kl(p) == 0.0);
}

TEST_CASE("empirical token frequencies")
{
  auto p = ToyPolicy::with_template_prior(ToyPolicy::default_vocab(), 4, 1.0);
  Rng rng(8);
  const int n = 40000;
  std::vector<int> counts(static_cast<std::size_t>(p.vocab_size()), 0);
  for (const auto& s : sample_toy(p, rng, n)) {
    ++counts[static_cast<std::size_t>(s.tokens[0])];
  }
  const auto probs = p.probs(0);
  for (std::size_t v = 0; v < probs.size(); ++v) {
    const double se = std::sqrt(probs[v] * (1 - probs[v]) / n);
    CHECK(std::abs(counts[v] / static_cast<double>(n) - probs[v]) < 5 * se);
  }
}

TEST_CASE("analytic gradient matches central differences")
{
  auto theta = ToyPolicy::with_template_prior(ToyPolicy::default_vocab(), 6, 1.5);
  const auto ref = theta;
  Rng rng(21);
  for (auto& w : theta.parameters()) {
    w += 0.3 * (uniform01(rng) - 0.5);
  }
  GrpoConfig cfg;
  cfg.kl_beta = 0.1;
  // One sequence inside the trust region, others pushed outside it.
  const auto groups = make_groups(theta, {0.0, 0.05, -0.6, 0.6}, 4);
  const auto ag = grpo_objective_gradient(theta, ref, groups, cfg);
  CHECK(ag.objective == doctest::Approx(direct_objective(theta, ref, groups, cfg)).epsilon(1e-12));

  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.parameters().size(); ++i) {
    auto up = theta;
    auto dn = theta;
    up.parameters()[i] += h;
    dn.parameters()[i] -= h;
    const double fd = (direct_objective(up, ref, groups, cfg) - direct_objective(dn, ref, groups, cfg)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(ag.gradient[i]), 1e-4});
    worst = std::max(worst, std::abs(fd - ag.gradient[i]) / scale);
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("grpo step does not depend on worker count")
{
  const auto p0 = ToyPolicy::with_template_prior(ToyPolicy::default_vocab(), 10, 3.0);
  const std::vector<ConversationContext> ctxs(4, short_context());
  GrpoConfig cfg;
  cfg.learning_rate = 1.0;
  const auto a = grpo_step(p0, p0, ctxs, make_format_reward(), cfg, 1, 99, 1);
  const auto b = grpo_step(p0, p0, ctxs, make_format_reward(), cfg, 1, 99, 4);
  CHECK(a.policy == b.policy);
  CHECK(a.stats.mean_reward == b.stats.mean_reward);
}

TEST_CASE("format reward training raises adherence")
{
  auto p0 = ToyPolicy::with_template_prior(ToyPolicy::default_vocab(), 16, 5.0);
  GrpoConfig cfg;
  cfg.learning_rate = 3.0;
  cfg.kl_beta = 0.001;
  GrpoTrainer trainer(p0, std::vector<ConversationContext>(4, short_context()), make_format_reward(), cfg, 1);
  Rng r0(5);
  const double before = format_adherence(trainer.policy(), r0, 1000);
  for (int s = 0; s < 80; ++s) {
    trainer.step();
  }
  Rng r1(5);
  const double after = format_adherence(trainer.policy(), r1, 1000);
  CHECK(before < 0.1);
  CHECK(after > before + 0.3);
  CHECK(trainer.steps_done() == 80);
}

TEST_CASE("zero learning rate leaves the policy unchanged")
{
  auto p0 = ToyPolicy::with_template_prior(ToyPolicy::default_vocab(), 8, 2.0);
  GrpoConfig cfg;
  cfg.learning_rate = 0.0;
  GrpoTrainer trainer(p0, {short_context()}, make_format_reward(), cfg, 1);
  trainer.step();
  CHECK(trainer.policy() == p0);
}

TEST_CASE("rlff reward composes scorer and format")
{
  ScriptedScorer::Table t;
  t.favored_tokens = {"listen"};
  auto fn = make_rlff_reward(std::make_shared<ScriptedScorer>(t), {}, FutureSignal::Probability);
  const auto r = fn(short_context(), tagged("x", "listen now"));
  CHECK(r.format == 1.0);
  CHECK(r.future == doctest::Approx(0.5));
  CHECK(r.total == doctest::Approx(1.0));
  const auto bad = fn(short_context(), "listen");
  CHECK(bad.format == 0.0);
  CHECK(bad.total == doctest::Approx(1.0));
}
