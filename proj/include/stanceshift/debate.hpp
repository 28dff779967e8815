#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stanceshift/protocol.hpp"
#include "stanceshift/stance_probe.hpp"

namespace stanceshift {

struct DebateConfig {
  int debates_per_question = 5;
  /// Side treated as holding the original opinion when the judge's pre-score is exactly 0.
  Side zero_pre_score_side = Side::pro;

  void validate() const;
};

struct DebateTurn {
  int index = 0;
  Side side = Side::pro;
  TurnKind kind = TurnKind::opening;
  std::string content;

  friend bool operator==(const DebateTurn&, const DebateTurn&) = default;
};

struct DebateOutcome {
  std::string backend_id;
  std::string question_id;
  LanguageCode language;
  DebateMode mode = DebateMode::fair;
  int debate_index = 0;
  double pre_score = 0;
  double post_score = 0;
  double shift = 0;  ///< |post_score - pre_score|
  std::optional<Side> biased_side;
  std::vector<DebateTurn> transcript;
  std::string judge_raw_pre;
  std::string judge_raw_post;
};

/// Throws ValidationError if the outcome breaks a transcript or score invariant.
void validate(const DebateOutcome& outcome);

Json to_json(const DebateOutcome& outcome);
DebateOutcome debate_outcome_from_json(const Json& j);

/// The side whose opinion matches the judge's pre-score; that side argues badly in biased mode.
Side select_biased_side(double pre_score, const DebateConfig& cfg);

/// Labelled turns in order, as shown to the judge.
std::string render_transcript(const LanguagePack& pack, const std::vector<DebateTurn>& turns);

/// Judge pre-probe, four debater turns, judge post-probe on the extended judge thread.
/// Throws DebateAbortedError when the judge refuses before or after.
DebateOutcome run_debate(const ModelContext& ctx, const Question& question, DebateMode mode, int debate_index,
                         const DebateConfig& cfg = {});

struct AbortedDebate {
  int debate_index;
  std::string reason;
};

struct DebateSetResult {
  std::vector<DebateOutcome> outcomes;
  std::vector<AbortedDebate> aborted;
};

/// cfg.debates_per_question independent debates, each with its own judge.
/// Throws DebateSetFailedError when every debate aborts.
DebateSetResult run_debate_set(const ModelContext& ctx, const Question& question, DebateMode mode,
                               const DebateConfig& cfg = {});

}  // namespace stanceshift
