#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rlff/agents.hpp"
#include "rlff/cli.hpp"
#include "rlff/errors.hpp"
#include "rlff/evaluation.hpp"
#include "rlff/grpo.hpp"
#include "rlff/io_store.hpp"
#include "rlff/reward.hpp"
#include "rlff/simulator.hpp"
#include "rlff/tagged_output.hpp"

namespace py = pybind11;
using namespace rlff;

namespace {

py::dict dialogue_dict(const Dialogue& d)
{
  const auto& s = d.context.scenario();
  py::list turns;
  for (const auto& u : d.context.turns()) {
    turns.append(py::make_tuple(u.speaker == Speaker::User ? "user" : "system", u.text));
  }
  py::dict out;
  out["id"] = d.id;
  out["emotion_type"] = s.emotion_type ? py::object(py::str(*s.emotion_type)) : py::object(py::none());
  out["problem_type"] = s.problem_type;
  out["situation"] = s.situation;
  out["turns"] = turns;
  return out;
}

} // namespace

PYBIND11_MODULE(_rlff, m)
{
  m.doc() = "RLFF-ESC pipeline core";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DegenerateLabels>(m, "DegenerateLabels", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<InvalidValue>(m, "InvalidValue", base.ptr());
  py::register_exception<EmptyResults>(m, "EmptyResults", base.ptr());
  py::register_exception<GroupTooSmall>(m, "GroupTooSmall", base.ptr());

  m.def("format_reward", [](const std::string& text) { return format_reward(text); }, py::arg("text"));
  m.def(
    "parse_tagged",
    [](const std::string& text) -> py::object {
      const auto r = parse_tagged_output(text);
      if (const auto* t = std::get_if<TaggedOutput>(&r)) {
        return py::make_tuple(t->think, t->response);
      }
      return py::none();
    },
    py::arg("text"), "(think, response) for well-formed output, else None.");
  m.def(
    "combined_reward",
    [](double fut, int fmt, double alpha) { return combined_reward(fut, fmt, RewardWeights{alpha, 1.0}); },
    py::arg("future"), py::arg("format"), py::arg("alpha") = 0.5);
  m.def("future_oriented_reward", &future_oriented_reward, py::arg("terminal_reward"), py::arg("turns_used"));
  m.def("binarize_reward", &binarize_reward, py::arg("reward"), py::arg("delta"));
  m.def(
    "group_advantages",
    [](const std::vector<double>& r, double floor) { return group_advantages(r, floor); }, py::arg("rewards"),
    py::arg("std_floor") = 1e-8);
  m.def(
    "kl_estimate",
    [](const std::vector<double>& a, const std::vector<double>& b) { return kl_estimate(a, b); },
    py::arg("logp_new"), py::arg("logp_ref"));
  m.def(
    "critic_scalar",
    [](const std::string& verdict) -> py::object {
      const auto lvl = parse_critic_level(verdict);
      return lvl ? py::object(py::float_(level_to_scalar(*lvl))) : py::object(py::none());
    },
    py::arg("verdict"), "Scalar for a critic reply, None when no level is found.");

  m.def(
    "compute_metrics",
    [](const std::vector<std::pair<bool, int>>& episodes, int max_turns) {
      std::vector<EpisodeResult> rs;
      for (const auto& [ok, turns] : episodes) {
        EpisodeResult r;
        r.success = ok;
        r.turns = turns;
        rs.push_back(r);
      }
      const auto rep = compute_metrics(rs, max_turns);
      py::dict out;
      out["success_rate"] = rep.success_rate;
      out["average_turns"] = rep.average_turns;
      out["n_episodes"] = rep.n_episodes;
      return out;
    },
    py::arg("episodes"), py::arg("max_turns"), "episodes: list of (success, turns).");
  m.def(
    "threshold_sweep",
    [](const std::vector<double>& rewards, const std::vector<std::pair<double, std::string>>& points) {
      std::vector<SweepPoint> pts;
      for (const auto& [t, mode] : points) {
        pts.push_back({t, success_mode_from_string(mode)});
      }
      std::vector<std::tuple<double, std::string, double>> out;
      for (const auto& r : threshold_sweep(rewards, pts)) {
        out.emplace_back(r.threshold, to_string(r.mode), r.success_rate);
      }
      return out;
    },
    py::arg("rewards"), py::arg("points"));

  m.def(
    "load_esconv",
    [](const std::filesystem::path& path) {
      py::list out;
      for (const auto& d : load_esconv(path).dialogues) {
        out.append(dialogue_dict(d));
      }
      return out;
    },
    py::arg("path"));
  m.def(
    "load_extes",
    [](const std::filesystem::path& path, std::uint64_t seed) {
      const auto s = load_extes(path, seed);
      py::dict out;
      for (const auto* split : {&s.train, &s.dev, &s.test}) {
        py::list l;
        for (const auto& d : split->dialogues) {
          l.append(dialogue_dict(d));
        }
        out[to_string(split->name)] = l;
      }
      return out;
    },
    py::arg("path"), py::arg("split_seed") = 7);
  m.def(
    "extes_split_sizes",
    [](std::size_t n) {
      const auto s = extes_split_sizes(n);
      return py::make_tuple(s.train, s.dev, s.test);
    },
    py::arg("n"));

  py::class_<FeaturizedScorer>(m, "Scorer")
    .def_property_readonly("epoch_loss", [](const FeaturizedScorer& s) { return s.report().epoch_loss; })
    .def_property_readonly("final_loss", [](const FeaturizedScorer& s) { return s.report().final_loss; })
    .def_property_readonly("steps", [](const FeaturizedScorer& s) { return s.report().steps; })
    .def("predict", &FeaturizedScorer::score_input, py::arg("input_text"), "Probability for a rendered reward-model input.")
    .def("save", [](const FeaturizedScorer& s, const std::filesystem::path& p) { save_scorer(s, p); });
  m.def("load_scorer", [](const std::filesystem::path& p) { return load_scorer(p); }, py::arg("path"));
  m.def(
    "train_scorer",
    [](const std::vector<std::pair<std::string, int>>& data, double lr, int epochs, int batch_size, int grad_accum,
       int hash_bits, std::uint64_t seed, bool shuffle) {
      std::vector<LabeledPair> pairs;
      for (const auto& [text, label] : data) {
        pairs.push_back({text, label});
      }
      TrainerHyper h;
      h.learning_rate = lr;
      h.epochs = epochs;
      h.batch_size = batch_size;
      h.grad_accum_steps = grad_accum;
      h.seed = seed;
      h.shuffle = shuffle;
      FeatureSpec spec;
      spec.hash_bits = hash_bits;
      py::gil_scoped_release release;
      return train_scorer(pairs, h, spec);
    },
    py::arg("pairs"), py::arg("learning_rate") = 1e-4, py::arg("epochs") = 2, py::arg("batch_size") = 1,
    py::arg("grad_accum_steps") = 8, py::arg("hash_bits") = 16, py::arg("seed") = 0, py::arg("shuffle") = true);

  m.def(
    "run_cli",
    [](const std::vector<std::string>& args) {
      std::ostringstream out;
      std::ostringstream err;
      int rc = 0;
      {
        py::gil_scoped_release release;
        rc = run_cli(args, out, err);
      }
      return py::make_tuple(rc, out.str(), err.str());
    },
    py::arg("args"), "Runs the rlff command line; returns (exit_code, stdout, stderr).");
}
