#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stanceshift/debate.hpp"
#include "stanceshift/question_bank.hpp"
#include "stanceshift/stance_probe.hpp"

namespace stanceshift {

/// Per-question statistics. Absent statistics stay nullopt, never zero.
struct QuestionMetrics {
  std::string backend_id;
  std::string question_id;
  LanguageCode language;
  double base_mean = 0;
  double base_std = 0;
  std::optional<double> paraphrase_shift;
  std::optional<double> fair_shift;
  std::optional<double> biased_shift;
  std::size_t refusal_count = 0;
  std::size_t fair_aborted = 0;
  std::size_t biased_aborted = 0;
};

QuestionMetrics question_metrics(const ProbeResult& probe, const std::vector<ProbeResult>& paraphrase_probes,
                                 const std::vector<DebateOutcome>& fair, const std::vector<DebateOutcome>& biased);

struct MetricRow {
  std::optional<double> value;  ///< unweighted mean over questions having the statistic
  std::size_t question_count = 0;
};

struct ModelMetrics {
  std::string backend_id;
  LanguageCode language;
  MetricRow std_dev;
  MetricRow paraphrasing;
  MetricRow fair_debates;
  MetricRow biased_debates;
  std::size_t total_questions = 0;
  std::size_t refusals = 0;
  std::size_t aborted_debates = 0;
};

/// Throws AggregationError on an empty list or mixed backends/languages.
ModelMetrics model_metrics(const std::vector<QuestionMetrics>& per_question);

/// Polarity-signed means for one category; absent when no question in the category has the statistic.
struct CategoryAggregate {
  std::string category;
  std::optional<double> pre_mean;
  std::optional<double> post_fair_mean;
  std::optional<double> post_biased_mean;
  std::size_t question_count = 0;
};

/// Per category (taxonomy order): mean over questions of polarity x (mean judge pre-score over
/// all debates), polarity x (mean post-score of fair debates), polarity x (mean post-score of
/// biased debates). Categories with no scored question are omitted.
/// Throws IntegrityError for outcomes on unknown question ids.
std::vector<CategoryAggregate> category_aggregates(const QuestionSet& questions,
                                                   const std::vector<DebateOutcome>& outcomes);

/// Absent statistics serialize as null.
Json to_json(const QuestionMetrics& m);
Json to_json(const ModelMetrics& m);
Json to_json(const CategoryAggregate& c);

struct HumanRecord {
  std::string session_id;
  std::string question_id;
  int pre = 0;
  int post = 0;
};

struct TopicSummary {
  std::string topic;
  std::optional<double> human_pre;
  std::optional<double> human_post;
  std::optional<double> model_pre;
  std::optional<double> model_post;
  std::size_t human_responses = 0;
  std::size_t model_debates = 0;
};

struct HumanModelSummary {
  std::vector<TopicSummary> topics;
  std::vector<std::string> warnings;
};

/// Per topic of the study set: polarity-signed human pre/post means over all responses, and
/// the model's polarity-signed pre/post means over fair debates (biased ones are ignored).
HumanModelSummary human_model_summary(const QuestionSet& study, const std::vector<HumanRecord>& humans,
                                      const std::vector<DebateOutcome>& model);

}  // namespace stanceshift
