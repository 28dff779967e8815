#include "stanceshift/report.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "stanceshift/annotation.hpp"
#include "stanceshift/errors.hpp"

namespace fs = std::filesystem;

namespace stanceshift {

std::string row_label(const std::string& backend_id, const LanguageCode& language, const LanguageCode& default_language) {
  return language == default_language ? backend_id : backend_id + "-" + language;
}

std::string format_cell(const std::optional<double>& v) {
  if (!v) return "NA";
  const auto s = fmt::format("{:.2f}", *v);
  return s == "-0.00" ? "0.00" : s;
}

namespace {

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json metric_row_json(const MetricRow& r) { return Json{{"value", opt_json(r.value)}, {"questions", r.question_count}}; }

Json model_metrics_json(const std::string& label, const ModelMetrics& m) {
  return Json{{"model", label},
              {"backend_id", m.backend_id},
              {"language", m.language},
              {"std_dev", metric_row_json(m.std_dev)},
              {"paraphrasing", metric_row_json(m.paraphrasing)},
              {"fair_debates", metric_row_json(m.fair_debates)},
              {"biased_debates", metric_row_json(m.biased_debates)},
              {"total_questions", m.total_questions},
              {"refusals", m.refusals},
              {"aborted_debates", m.aborted_debates}};
}

std::string metrics_csv_fields(const ModelMetrics& m) {
  return fmt::format("{},{},{},{}", format_cell(m.std_dev.value), format_cell(m.paraphrasing.value),
                     format_cell(m.fair_debates.value), format_cell(m.biased_debates.value));
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Group {
  std::map<std::string, std::vector<StanceSample>> baseline;
  std::map<std::string, std::map<std::size_t, std::vector<StanceSample>>> paraphrase;
  std::map<std::string, std::vector<DebateOutcome>> fair, biased;
  std::map<std::string, std::size_t> fair_aborted, biased_aborted;
};

std::vector<HumanRecord> load_human_records(const fs::path& run_dir, const QuestionSet& questions,
                                            std::vector<std::string>& warnings) {
  std::vector<HumanRecord> out;
  const auto dir = run_dir / run_files::annotations;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    for (auto& r : human_records_from_export(read_text_file(f))) {
      if (!questions.find(r.question_id)) {
        warnings.push_back(fmt::format("{}: question '{}' is not in the run's question set; skipped",
                                       f.filename().string(), r.question_id));
        continue;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

ReportBundle build_report(const fs::path& run_dir) {
  const auto cfg = load_run_snapshot(run_dir);
  const auto questions = load_question_set(run_dir / run_files::questions);
  const auto records = load_records(run_dir);
  if (records.empty()) throw ReportError(fmt::format("run '{}' has no completed cells", run_dir.string()));

  std::map<std::pair<std::string, LanguageCode>, Group> groups;
  for (const auto& r : records) {
    const auto cell = cell_from_json(r.at("cell_info"));
    auto& g = groups[{cell.backend_id, cell.language}];
    const auto kind = r.at("kind").get<std::string>();
    if (kind == "sample") {
      auto s = stance_sample_from_json(r.at("sample"));
      if (cell.mode == CellMode::baseline) {
        g.baseline[cell.question_id].push_back(std::move(s));
      } else {
        g.paraphrase[cell.question_id][*cell.paraphrase_index].push_back(std::move(s));
      }
    } else if (kind == "debate") {
      auto o = debate_outcome_from_json(r.at("outcome"));
      (o.mode == DebateMode::fair ? g.fair : g.biased)[cell.question_id].push_back(std::move(o));
    } else if (cell.mode == CellMode::fair) {
      ++g.fair_aborted[cell.question_id];
    } else if (cell.mode == CellMode::biased) {
      ++g.biased_aborted[cell.question_id];
    }
  }

  ReportBundle bundle;
  bundle.dir = run_dir / run_files::reports;
  std::vector<std::pair<std::string, LanguageCode>> order;
  for (const auto& b : cfg.backends)
    for (const auto& lang : cfg.languages)
      if (groups.contains({b.backend_id, lang})) order.emplace_back(b.backend_id, lang);

  for (const auto& key : order) {
    auto& g = groups.at(key);
    ReportRow row;
    row.label = row_label(key.first, key.second, questions.default_language);
    std::vector<DebateOutcome> all_outcomes;
    for (const auto& q : questions.questions) {
      const auto fair = g.fair[q.id];
      const auto biased = g.biased[q.id];
      all_outcomes.insert(all_outcomes.end(), fair.begin(), fair.end());
      all_outcomes.insert(all_outcomes.end(), biased.begin(), biased.end());
      auto& base = g.baseline[q.id];
      const bool has_numeric = std::any_of(base.begin(), base.end(), [](const auto& s) { return !s.refused(); });
      if (!has_numeric) {
        if (!base.empty() || !fair.empty() || !biased.empty() || g.paraphrase.contains(q.id)) {
          bundle.warnings.push_back(
              fmt::format("{}: question '{}' has no numeric baseline sample; left out of the shift table", row.label, q.id));
        }
        continue;
      }
      const auto probe = summarize_samples(base);
      std::vector<ProbeResult> variants;
      for (auto& [idx, samples] : g.paraphrase[q.id]) {
        try {
          variants.push_back(summarize_samples(samples));
        } catch (const AllRefusedError&) {
          bundle.warnings.push_back(fmt::format("{}: every probe of paraphrase {} of '{}' was refused", row.label, idx, q.id));
        }
      }
      auto qm = question_metrics(probe, variants, fair, biased);
      qm.backend_id = key.first;
      qm.language = key.second;
      qm.fair_aborted = g.fair_aborted[q.id];
      qm.biased_aborted = g.biased_aborted[q.id];
      row.questions.push_back(std::move(qm));
    }
    if (row.questions.empty()) {
      bundle.warnings.push_back(fmt::format("{}: no question has a baseline; no shift table row", row.label));
    } else {
      row.metrics = model_metrics(row.questions);
    }
    row.categories = category_aggregates(questions, all_outcomes);
    for (const auto& category : questions.taxonomy) {
      std::vector<QuestionMetrics> subset;
      for (const auto& qm : row.questions)
        if (questions.at(qm.question_id).category == category) subset.push_back(qm);
      if (!subset.empty()) row.per_category.emplace_back(category, model_metrics(subset));
    }
    bundle.rows.push_back(std::move(row));
  }
  return bundle;
}

ReportBundle emit_report(const fs::path& run_dir) {
  auto bundle = build_report(run_dir);
  fs::create_directories(bundle.dir);
  auto write = [&](const std::string& name, const std::string& text) {
    const auto path = bundle.dir / name;
    write_text_atomic(path, text);
    bundle.files.push_back(path);
  };

  // (a) one row per (backend, language)
  std::string csv = "model,std_dev,paraphrasing,fair_debates,biased_debates\n";
  Json json = Json::array();
  for (const auto& row : bundle.rows) {
    if (row.questions.empty()) continue;
    csv += csv_escape(row.label) + "," + metrics_csv_fields(row.metrics) + "\n";
    json.push_back(model_metrics_json(row.label, row.metrics));
  }
  write("model_metrics.csv", csv);
  write("model_metrics.json", json.dump(2) + "\n");

  // (b) the same table restricted to each category
  csv = "category,model,std_dev,paraphrasing,fair_debates,biased_debates\n";
  json = Json::array();
  for (const auto& row : bundle.rows) {
    for (const auto& [category, m] : row.per_category) {
      csv += csv_escape(category) + "," + csv_escape(row.label) + "," + metrics_csv_fields(m) + "\n";
      auto item = model_metrics_json(row.label, m);
      item["category"] = category;
      json.push_back(std::move(item));
    }
  }
  write("category_metrics.csv", csv);
  write("category_metrics.json", json.dump(2) + "\n");

  // (c) polarity-signed pre / post-fair / post-biased series
  csv = "model,category,pre_mean,post_fair_mean,post_biased_mean\n";
  json = Json::array();
  for (const auto& row : bundle.rows) {
    for (const auto& c : row.categories) {
      csv += fmt::format("{},{},{},{},{}\n", csv_escape(row.label), csv_escape(c.category), format_cell(c.pre_mean),
                         format_cell(c.post_fair_mean), format_cell(c.post_biased_mean));
      json.push_back({{"model", row.label},
                      {"category", c.category},
                      {"pre_mean", opt_json(c.pre_mean)},
                      {"post_fair_mean", opt_json(c.post_fair_mean)},
                      {"post_biased_mean", opt_json(c.post_biased_mean)},
                      {"questions", c.question_count}});
    }
  }
  write("category_aggregates.csv", csv);
  write("category_aggregates.json", json.dump(2) + "\n");

  csv = "model,question_id,base_mean,base_std,paraphrase_shift,fair_shift,biased_shift,refusals,fair_aborted,biased_aborted\n";
  json = Json::array();
  for (const auto& row : bundle.rows) {
    for (const auto& q : row.questions) {
      csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", csv_escape(row.label), csv_escape(q.question_id),
                         format_cell(q.base_mean), format_cell(q.base_std), format_cell(q.paraphrase_shift),
                         format_cell(q.fair_shift), format_cell(q.biased_shift), q.refusal_count, q.fair_aborted,
                         q.biased_aborted);
      json.push_back({{"model", row.label},
                      {"question_id", q.question_id},
                      {"base_mean", q.base_mean},
                      {"base_std", q.base_std},
                      {"paraphrase_shift", opt_json(q.paraphrase_shift)},
                      {"fair_shift", opt_json(q.fair_shift)},
                      {"biased_shift", opt_json(q.biased_shift)},
                      {"refusals", q.refusal_count},
                      {"fair_aborted", q.fair_aborted},
                      {"biased_aborted", q.biased_aborted}});
    }
  }
  write("question_metrics.csv", csv);
  write("question_metrics.json", json.dump(2) + "\n");

  // (d) only when annotation exports were dropped into the run directory
  const auto questions = load_question_set(run_dir / run_files::questions);
  const auto humans = load_human_records(run_dir, questions, bundle.warnings);
  if (!humans.empty()) {
    const auto records = load_records(run_dir);
    csv = "model,topic,human_pre,human_post,model_pre,model_post,human_responses,model_debates\n";
    json = Json::array();
    for (const auto& row : bundle.rows) {
      std::vector<DebateOutcome> outcomes;
      for (const auto& r : records) {
        if (r.at("kind") != "debate") continue;
        auto o = debate_outcome_from_json(r.at("outcome"));
        if (row_label(o.backend_id, o.language, questions.default_language) == row.label) outcomes.push_back(std::move(o));
      }
      const auto summary = human_model_summary(questions, humans, outcomes);
      for (const auto& w : summary.warnings) bundle.warnings.push_back(row.label + ": " + w);
      for (const auto& t : summary.topics) {
        csv += fmt::format("{},{},{},{},{},{},{},{}\n", csv_escape(row.label), csv_escape(t.topic),
                           format_cell(t.human_pre), format_cell(t.human_post), format_cell(t.model_pre),
                           format_cell(t.model_post), t.human_responses, t.model_debates);
        json.push_back({{"model", row.label},
                        {"topic", t.topic},
                        {"human_pre", opt_json(t.human_pre)},
                        {"human_post", opt_json(t.human_post)},
                        {"model_pre", opt_json(t.model_pre)},
                        {"model_post", opt_json(t.model_post)},
                        {"human_responses", t.human_responses},
                        {"model_debates", t.model_debates}});
      }
    }
    write("human_comparison.csv", csv);
    write("human_comparison.json", json.dump(2) + "\n");
  }

  write("warnings.json", Json(bundle.warnings).dump(2) + "\n");
  return bundle;
}

}  // namespace stanceshift
