#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "stanceshift/debate.hpp"
#include "stanceshift/metrics.hpp"
#include "stanceshift/question_bank.hpp"

namespace stanceshift {

inline constexpr std::size_t kStudyQuestions = 16;
inline constexpr std::size_t kStudyTopics = 8;
inline constexpr std::size_t kContextSamples = 2;

/// A debate as displayed to annotators.
struct DisplayDebate {
  std::string question_id;
  std::string statement;
  std::vector<DebateTurn> turns;
  std::optional<double> pre_score;
  std::optional<double> post_score;
};

/// The human protocol: 16 questions over 8 topics (two each), one fixed fair
/// debate per question, and two context debates shown before scoring starts.
struct StudyConfig {
  std::string study_id;
  LanguageCode language = "en";
  QuestionSet questions;  ///< taxonomy = the eight topics
  std::vector<std::string> instructions;
  std::map<Side, std::string> side_labels{{Side::pro, "Pro"}, {Side::con, "Con"}};
  std::vector<DisplayDebate> context_samples;
  std::map<std::string, DisplayDebate> debates;  ///< keyed by question id

  void validate() const;
};

StudyConfig study_config_from_json(const Json& j);
Json to_json(const StudyConfig& study);
StudyConfig load_study_config(const std::filesystem::path& path);

enum class Phase { pre, debate, post };
enum class SessionStatus { instructions, active, done };

std::string_view to_string(Phase p);
std::string_view to_string(SessionStatus s);
Phase phase_from_string(std::string_view s);

struct ScoreRecord {
  std::optional<int> pre;
  std::optional<int> post;
  std::optional<std::int64_t> pre_at_us;
  std::optional<std::int64_t> debate_served_at_us;
  std::optional<std::int64_t> post_at_us;
};

struct AnnotatorSession {
  std::string session_id;
  std::string study_id;
  std::string alias;
  SessionStatus status = SessionStatus::instructions;
  std::size_t index = 0;
  Phase phase = Phase::pre;
  std::vector<ScoreRecord> records;  ///< one per study question
  std::int64_t last_event_us = 0;
};

Json to_json(const AnnotatorSession& s);

/// Export of all completed sessions of a study.
struct StudyExport {
  std::vector<Json> records;  ///< one per (session, question)
  Json topic_means;           ///< polarity-signed pre/post means per topic

  /// One "record" line per entry, then a final "topic_means" line.
  std::string to_jsonl() const;
};

/// Human records from an export produced by StudyExport::to_jsonl.
std::vector<HumanRecord> human_records_from_export(const std::string& jsonl);

/// Session bookkeeping for the human protocol, persisted as an append-only
/// event log per study (`<data_dir>/<study_id>.events.jsonl`) and replayed on start.
///
/// Thread-safe: sessions are independent, mutations of one session are
/// serialized, and export sees a consistent snapshot.
class AnnotationService {
 public:
  explicit AnnotationService(std::filesystem::path data_dir);
  ~AnnotationService();

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Registers a study and replays its event log, if any.
  void add_study(StudyConfig study);
  const StudyConfig& study(const std::string& study_id) const;

  AnnotatorSession create_session(const std::string& study_id, const std::string& alias);
  AnnotatorSession acknowledge_instructions(const std::string& session_id);
  AnnotatorSession session(const std::string& session_id) const;

  /// Payload for the session's current step. Serving the debate step records
  /// the time, locks the pre-score and moves the cursor to the post step.
  Json next(const std::string& session_id);

  /// `value` must be an integral JSON number in [-10, 10].
  AnnotatorSession submit_score(const std::string& session_id, std::size_t index, Phase phase, const Json& value);

  StudyExport export_study(const std::string& study_id) const;

  /// First payload of a session: the instructions and both context debates.
  Json instructions_payload(const std::string& study_id) const;

 private:
  struct StudyState;
  struct SessionSlot;

  StudyState& study_state(const std::string& study_id) const;
  SessionSlot& slot(const std::string& session_id) const;
  void append_event(StudyState& study, const Json& event);
  std::int64_t stamp(AnnotatorSession& s) const;

  std::filesystem::path data_dir_;
  mutable std::shared_mutex registry_mu_;
  std::map<std::string, std::unique_ptr<StudyState>> studies_;
  std::map<std::string, std::unique_ptr<SessionSlot>> sessions_;
};

}  // namespace stanceshift
