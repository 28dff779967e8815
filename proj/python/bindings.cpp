#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "stanceshift/debate.hpp"
#include "stanceshift/errors.hpp"
#include "stanceshift/metrics.hpp"
#include "stanceshift/question_bank.hpp"
#include "stanceshift/report.hpp"
#include "stanceshift/runner.hpp"
#include "stanceshift/stance_probe.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace stanceshift;

namespace {

// Values cross the boundary as JSON text; the Python side owns the dict conversion.
py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_py(const py::handle& obj) {
  return Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

template <typename T, typename F>
std::vector<T> list_from_py(const py::handle& items, F convert) {
  std::vector<T> out;
  for (const auto& item : items) out.push_back(convert(from_py(item)));
  return out;
}

Json summary_json(const ExecuteSummary& s) {
  return Json{{"run_dir", s.run_dir.string()}, {"total_cells", s.total_cells}, {"already_done", s.already_done},
              {"executed", s.executed},         {"failed", s.failed},           {"remaining", s.remaining}};
}

Json bundle_json(const ReportBundle& b) {
  Json rows = Json::array();
  for (const auto& r : b.rows) {
    Json categories = Json::array();
    for (const auto& c : r.categories) categories.push_back(to_json(c));
    Json questions = Json::array();
    for (const auto& q : r.questions) questions.push_back(to_json(q));
    rows.push_back({{"label", r.label}, {"metrics", to_json(r.metrics)}, {"questions", questions},
                    {"categories", categories}});
  }
  Json files = Json::array();
  for (const auto& f : b.files) files.push_back(f.string());
  return Json{{"dir", b.dir.string()}, {"files", files}, {"rows", rows}, {"warnings", b.warnings}};
}

ProbeResult probe_from_py(const py::handle& samples) {
  return summarize_samples(list_from_py<StanceSample>(samples, stance_sample_from_json));
}

}  // namespace

PYBIND11_MODULE(_stanceshift, m) {
  m.doc() = "Native core of the stanceshift harness";

  py::register_exception<Error>(m, "StanceshiftError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("parse_score", [](std::string_view raw) { return parse_score(raw); }, py::arg("raw"));
  m.def(
      "try_parse_score",
      [](std::string_view raw) -> py::tuple {
        const auto r = try_parse_score(raw);
        const char* status = r.status == ScoreParseStatus::ok            ? "ok"
                             : r.status == ScoreParseStatus::out_of_range ? "out_of_range"
                                                                          : "unparseable";
        return py::make_tuple(status, r.status == ScoreParseStatus::unparseable ? py::none() : py::cast(r.value));
      },
      py::arg("raw"));
  m.def(
      "select_biased_side",
      [](double pre, const std::string& zero_side) {
        DebateConfig cfg;
        cfg.zero_pre_score_side = side_from_string(zero_side);
        return std::string(to_string(select_biased_side(pre, cfg)));
      },
      py::arg("pre_score"), py::arg("zero_side") = "pro");

  m.def("load_question_set", [](const fs::path& p) { return to_py(to_json(load_question_set(p))); }, py::arg("path"));
  m.def("validate_question_set", [](const py::dict& d) { return to_py(to_json(question_set_from_json(from_py(d)))); },
        py::arg("question_set"));

  m.def(
      "question_metrics",
      [](const py::list& baseline, const py::list& paraphrases, const py::list& fair, const py::list& biased) {
        std::vector<ProbeResult> para;
        for (const auto& variant : paraphrases) para.push_back(probe_from_py(variant));
        return to_py(to_json(question_metrics(probe_from_py(baseline), para,
                                              list_from_py<DebateOutcome>(fair, debate_outcome_from_json),
                                              list_from_py<DebateOutcome>(biased, debate_outcome_from_json))));
      },
      py::arg("baseline"), py::arg("paraphrases") = py::list(), py::arg("fair") = py::list(),
      py::arg("biased") = py::list());
  m.def(
      "category_aggregates",
      [](const py::dict& questions, const py::list& outcomes) {
        Json out = Json::array();
        for (const auto& c : category_aggregates(question_set_from_json(from_py(questions)),
                                                 list_from_py<DebateOutcome>(outcomes, debate_outcome_from_json)))
          out.push_back(to_json(c));
        return to_py(out);
      },
      py::arg("question_set"), py::arg("outcomes"));

  m.def("plan", [](const fs::path& config) { return to_py(to_json(plan_run(load_run_config(config)))); },
        py::arg("config"));
  m.def(
      "run",
      [](const fs::path& config, std::optional<std::size_t> max_cells) {
        const auto cfg = load_run_config(config);
        ExecuteOptions opts;
        opts.max_cells = max_cells;
        ExecuteSummary s;
        {
          py::gil_scoped_release release;
          s = execute(plan_run(cfg), cfg, opts);
        }
        return to_py(summary_json(s));
      },
      py::arg("config"), py::arg("max_cells") = py::none());
  m.def(
      "resume",
      [](const fs::path& run_dir, std::optional<std::size_t> max_cells) {
        ExecuteOptions opts;
        opts.max_cells = max_cells;
        ExecuteSummary s;
        {
          py::gil_scoped_release release;
          s = resume(run_dir, opts);
        }
        return to_py(summary_json(s));
      },
      py::arg("run_dir"), py::arg("max_cells") = py::none());
  m.def("report", [](const fs::path& run_dir) { return to_py(bundle_json(emit_report(run_dir))); }, py::arg("run_dir"));
  m.def(
      "load_records",
      [](const fs::path& run_dir) {
        Json out = Json::array();
        for (auto& r : load_records(run_dir)) out.push_back(std::move(r));
        return to_py(out);
      },
      py::arg("run_dir"));
}
