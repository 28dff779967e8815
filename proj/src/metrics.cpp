#include "stanceshift/metrics.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>

#include "stanceshift/errors.hpp"

namespace stanceshift {

namespace {

struct Mean {
  double sum = 0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> value() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

std::optional<double> mean_shift(const std::vector<DebateOutcome>& outcomes, DebateMode mode) {
  Mean m;
  for (const auto& o : outcomes) {
    if (o.mode != mode) {
      throw ValidationError(fmt::format("{} outcome passed where {} outcomes were expected", to_string(o.mode),
                                        to_string(mode)));
    }
    m.add(o.shift);
  }
  return m.value();
}

void add_row(MetricRow& row, Mean& acc, const std::optional<double>& v) {
  if (v) acc.add(*v);
  row.question_count = acc.n;
  row.value = acc.value();
}

}  // namespace

QuestionMetrics question_metrics(const ProbeResult& probe, const std::vector<ProbeResult>& paraphrase_probes,
                                 const std::vector<DebateOutcome>& fair, const std::vector<DebateOutcome>& biased) {
  if (probe.numeric_count() == 0) {
    throw ValidationError(fmt::format("question '{}' has no numeric baseline sample", probe.question_id));
  }
  QuestionMetrics m;
  m.backend_id = probe.backend_id;
  m.question_id = probe.question_id;
  m.language = probe.language;
  m.base_mean = probe.mean;
  m.base_std = probe.std_dev;
  m.refusal_count = probe.refusal_count;

  Mean para;
  for (const auto& p : paraphrase_probes) para.add(std::fabs(probe.mean - p.mean));
  m.paraphrase_shift = para.value();
  m.fair_shift = mean_shift(fair, DebateMode::fair);
  m.biased_shift = mean_shift(biased, DebateMode::biased);
  return m;
}

ModelMetrics model_metrics(const std::vector<QuestionMetrics>& per_question) {
  if (per_question.empty()) throw AggregationError("no question metrics to aggregate");
  ModelMetrics out;
  out.backend_id = per_question.front().backend_id;
  out.language = per_question.front().language;
  out.total_questions = per_question.size();
  Mean std_dev, para, fair, biased;
  for (const auto& q : per_question) {
    if (q.backend_id != out.backend_id || q.language != out.language) {
      throw AggregationError(fmt::format("cannot mix ({}, {}) with ({}, {})", out.backend_id, out.language,
                                         q.backend_id, q.language));
    }
    add_row(out.std_dev, std_dev, q.base_std);
    add_row(out.paraphrasing, para, q.paraphrase_shift);
    add_row(out.fair_debates, fair, q.fair_shift);
    add_row(out.biased_debates, biased, q.biased_shift);
    out.refusals += q.refusal_count;
    out.aborted_debates += q.fair_aborted + q.biased_aborted;
  }
  return out;
}

std::vector<CategoryAggregate> category_aggregates(const QuestionSet& questions,
                                                   const std::vector<DebateOutcome>& outcomes) {
  struct PerQuestion {
    Mean pre, post_fair, post_biased;
  };
  std::map<std::string, PerQuestion> per_question;
  for (const auto& o : outcomes) {
    if (!questions.find(o.question_id)) {
      throw IntegrityError(fmt::format("score for unknown question id '{}'", o.question_id));
    }
    auto& pq = per_question[o.question_id];
    pq.pre.add(o.pre_score);
    (o.mode == DebateMode::fair ? pq.post_fair : pq.post_biased).add(o.post_score);
  }

  std::vector<CategoryAggregate> out;
  for (const auto& category : questions.taxonomy) {
    Mean pre, post_fair, post_biased;
    std::size_t count = 0;
    for (const auto& q : questions.questions) {
      if (q.category != category) continue;
      auto it = per_question.find(q.id);
      if (it == per_question.end()) continue;
      ++count;
      if (auto v = it->second.pre.value()) pre.add(q.polarity * *v);
      if (auto v = it->second.post_fair.value()) post_fair.add(q.polarity * *v);
      if (auto v = it->second.post_biased.value()) post_biased.add(q.polarity * *v);
    }
    if (count == 0) continue;
    out.push_back({category, pre.value(), post_fair.value(), post_biased.value(), count});
  }
  return out;
}

HumanModelSummary human_model_summary(const QuestionSet& study, const std::vector<HumanRecord>& humans,
                                      const std::vector<DebateOutcome>& model) {
  std::map<std::string, std::pair<Mean, Mean>> human_by_topic;
  for (const auto& r : humans) {
    const auto& q = study.at(r.question_id);
    auto& [pre, post] = human_by_topic[q.category];
    pre.add(q.polarity * r.pre);
    post.add(q.polarity * r.post);
  }

  std::map<std::string, std::pair<Mean, Mean>> model_by_question;
  for (const auto& o : model) {
    if (o.mode != DebateMode::fair) continue;
    study.at(o.question_id);
    auto& [pre, post] = model_by_question[o.question_id];
    pre.add(o.pre_score);
    post.add(o.post_score);
  }

  HumanModelSummary out;
  for (const auto& topic : study.taxonomy) {
    TopicSummary t;
    t.topic = topic;
    if (auto it = human_by_topic.find(topic); it != human_by_topic.end()) {
      t.human_pre = it->second.first.value();
      t.human_post = it->second.second.value();
      t.human_responses = it->second.first.n;
    }
    Mean model_pre, model_post;
    for (const auto& q : study.questions) {
      if (q.category != topic) continue;
      auto it = model_by_question.find(q.id);
      if (it == model_by_question.end()) continue;
      model_pre.add(q.polarity * *it->second.first.value());
      model_post.add(q.polarity * *it->second.second.value());
      t.model_debates += it->second.first.n;
    }
    t.model_pre = model_pre.value();
    t.model_post = model_post.value();
    if (t.human_responses == 0 && t.model_debates == 0) {
      out.warnings.push_back(fmt::format("topic '{}' has no responses; omitted", topic));
      continue;
    }
    out.topics.push_back(std::move(t));
  }
  return out;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json row(const MetricRow& r) { return Json{{"value", opt(r.value)}, {"questions", r.question_count}}; }

}  // namespace

Json to_json(const QuestionMetrics& m) {
  return Json{{"backend_id", m.backend_id},         {"question_id", m.question_id},
              {"language", m.language},             {"base_mean", m.base_mean},
              {"base_std", m.base_std},             {"paraphrase_shift", opt(m.paraphrase_shift)},
              {"fair_shift", opt(m.fair_shift)},    {"biased_shift", opt(m.biased_shift)},
              {"refusals", m.refusal_count},        {"fair_aborted", m.fair_aborted},
              {"biased_aborted", m.biased_aborted}};
}

Json to_json(const ModelMetrics& m) {
  return Json{{"backend_id", m.backend_id},
              {"language", m.language},
              {"std_dev", row(m.std_dev)},
              {"paraphrasing", row(m.paraphrasing)},
              {"fair_debates", row(m.fair_debates)},
              {"biased_debates", row(m.biased_debates)},
              {"total_questions", m.total_questions},
              {"refusals", m.refusals},
              {"aborted_debates", m.aborted_debates}};
}

Json to_json(const CategoryAggregate& c) {
  return Json{{"category", c.category},
              {"pre_mean", opt(c.pre_mean)},
              {"post_fair_mean", opt(c.post_fair_mean)},
              {"post_biased_mean", opt(c.post_biased_mean)},
              {"questions", c.question_count}};
}

}  // namespace stanceshift
