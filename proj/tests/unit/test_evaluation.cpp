#include <doctest.h>

#include "rlff/errors.hpp"
#include "rlff/evaluation.hpp"
#include "support.hpp"

using namespace rlff;
using namespace rlff::test;

namespace {

EpisodeResult scripted_episode(std::vector<std::string> verdicts, SuccessMode mode = SuccessMode::Strict)
{
  const std::size_t n = verdicts.size();
  auto a = scripted_agents(std::vector<std::string>(n, tagged("t", "I hear you.")),
                           std::vector<std::string>(n, "Thanks."), std::move(verdicts));
  EpisodeConfig cfg;
  cfg.critic.samples = 1;
  cfg.mode = mode;
  return run_episode(a.agents, scenario(), cfg);
}

EpisodeResult stub(bool success, int turns, const std::string& emotion, const std::string& problem)
{
  EpisodeResult r;
  r.success = success;
  r.turns = turns;
  if (!emotion.empty()) {
    r.scenario.emotion_type = emotion;
  }
  r.scenario.problem_type = problem;
  return r;
}

} // namespace

TEST_CASE("success predicate")
{
  CHECK_FALSE(is_success(0.5, 0.5, SuccessMode::Strict));
  CHECK(is_success(0.5, 0.5, SuccessMode::Lenient));
  CHECK(is_success(0.75, 0.5, SuccessMode::Strict));
  CHECK(success_mode_from_string("lenient") == SuccessMode::Lenient);
  CHECK_THROWS(success_mode_from_string("loose"));
}

TEST_CASE("scripted episodes give SR and AT")
{
  const auto win = scripted_episode({"Same", "Slightly Better", "Moderately Better", "Significantly Better"});
  CHECK(win.success);
  CHECK(win.turns == 4);
  CHECK(win.turn_rewards == std::vector<double>{0.0, 0.25, 0.5, 1.0});
  CHECK(win.peak_reward() == 1.0);
  // opener + 4 exchanges
  CHECK(win.transcript.turns().size() == 9);
  CHECK(win.transcript.turns().front().text == scenario().situation);

  const auto loss = scripted_episode(std::vector<std::string>(8, "Slightly Better"));
  CHECK_FALSE(loss.success);
  CHECK(loss.turns == 8);

  const std::vector<EpisodeResult> both = {win, loss};
  const auto rep = compute_metrics(both, 8);
  CHECK(rep.success_rate == doctest::Approx(50.0));
  CHECK(rep.average_turns == doctest::Approx(6.0));
  CHECK(rep.n_episodes == 2);
}

TEST_CASE("lenient mode stops at the threshold")
{
  const auto r = scripted_episode({"Same", "Slightly Better", "Moderately Better", "Significantly Better"},
                                  SuccessMode::Lenient);
  CHECK(r.success);
  CHECK(r.turns == 3);
}

TEST_CASE("failures count at T even when the episode ended early")
{
  const std::vector<EpisodeResult> rs = {stub(false, 2, "", "x"), stub(true, 1, "", "x")};
  CHECK(compute_metrics(rs, 8).average_turns == doctest::Approx(4.5));
}

TEST_CASE("empty results are rejected")
{
  const std::vector<EpisodeResult> none;
  CHECK_THROWS_AS(compute_metrics(none, 8), EmptyResults);
}

TEST_CASE("threshold sweep on peak rewards")
{
  const std::vector<double> rewards = {0.5, 0.6, 0.4};
  const std::vector<SweepPoint> pts = {{0.5, SuccessMode::Strict}, {0.5, SuccessMode::Lenient}};
  const auto rows = threshold_sweep(rewards, pts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].success_rate == doctest::Approx(100.0 / 3.0));
  CHECK(rows[1].success_rate == doctest::Approx(200.0 / 3.0));

  EpisodeResult e;
  e.turn_rewards = {0.2, 0.7, 0.1};
  e.final_reward = 0.1;
  const std::vector<EpisodeResult> es = {e};
  CHECK(threshold_sweep(es, pts)[0].success_rate == 100.0);
}

TEST_CASE("category breakdown weights by share")
{
  const std::vector<EpisodeResult> rs = {stub(true, 1, "anxiety", "job"), stub(false, 8, "anxiety", "job"),
                                         stub(true, 2, "anger", "family"), stub(true, 3, "", "family")};
  const auto emo = category_breakdown(rs, CategoryKey::EmotionType);
  CHECK(emo.at("anxiety").count == 2);
  CHECK(emo.at("anxiety").sr == doctest::Approx(50.0));
  CHECK(emo.at("anxiety").weighted_sr == doctest::Approx(25.0));
  CHECK(emo.at("anger").weighted_sr == doctest::Approx(25.0));
  CHECK(emo.at(std::string(kUnlabeled)).count == 1);
  double total = 0.0;
  for (const auto& [k, s] : emo) {
    total += s.weighted_sr;
  }
  CHECK(total == doctest::Approx(compute_metrics(rs, 8).success_rate));

  const auto prob = category_breakdown(rs, CategoryKey::ProblemType);
  CHECK(prob.at("family").sr == doctest::Approx(100.0));

  const auto csv = render_category_csv(emo);
  CHECK(csv.rfind("category,count,sr,weighted_sr\n", 0) == 0);
}

TEST_CASE("report table lists both metrics")
{
  EvalReport r;
  r.success_rate = 50.0;
  r.average_turns = 6.0;
  const auto t = render_table(r, "RLFF-ESC");
  CHECK(t.find("RLFF-ESC") != std::string::npos);
  CHECK(t.find("50.0") != std::string::npos);
  CHECK(t.find("6.00") != std::string::npos);
}
