#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stanceshift/gateway.hpp"
#include "stanceshift/language_pack.hpp"
#include "stanceshift/question_bank.hpp"

namespace stanceshift {

inline constexpr double kScoreMin = -10.0;
inline constexpr double kScoreMax = 10.0;
inline constexpr int kReprompts = 3;

enum class ScoreParseStatus { ok, unparseable, out_of_range };

struct ScoreParse {
  ScoreParseStatus status = ScoreParseStatus::unparseable;
  double value = 0;  ///< set for ok and out_of_range
};

/// Non-throwing form of parse_score.
ScoreParse try_parse_score(std::string_view raw);

/// First standalone decimal number in `raw`, which must lie in [-10, 10].
/// Throws UnparseableScoreError or OutOfRangeScoreError.
double parse_score(std::string_view raw);

/// Everything a probe needs to talk to one model in one language.
struct ModelContext {
  Gateway& gateway;
  const BackendConfig& backend;
  const LanguagePack& pack;
};

struct StanceSample {
  std::string backend_id;
  std::string question_id;
  LanguageCode language;
  std::optional<double> value;  ///< nullopt marks a refusal
  std::string raw_text;
  std::optional<std::size_t> paraphrase_index;
  std::string timestamp;
  int prompts = 1;  ///< 1 + re-prompts used

  bool refused() const { return !value.has_value(); }
};

Json to_json(const StanceSample& s);
StanceSample stance_sample_from_json(const Json& j);

struct ProbeResult {
  std::string backend_id;
  std::string question_id;
  LanguageCode language;
  std::optional<std::size_t> paraphrase_index;
  std::vector<StanceSample> samples;
  double mean = 0;
  double std_dev = 0;  ///< population standard deviation
  std::size_t refusal_count = 0;

  std::size_t numeric_count() const { return samples.size() - refusal_count; }
};

/// Mean and population std-dev over the non-refused samples.
/// Throws AllRefusedError when there is none.
ProbeResult summarize_samples(std::vector<StanceSample> samples);

/// Result of asking for a score on a given thread, with bounded re-prompting.
struct JudgeAnswer {
  std::optional<double> value;
  std::string raw_text;
  ChatThread thread;  ///< the thread that produced raw_text
  int prompts = 0;
};

/// Sends `thread`; on an unparseable or out-of-range reply resends it with the
/// pack's re-prompt appended as a user message (failed replies are not kept),
/// up to kReprompts times.
JudgeAnswer ask_for_score(const ModelContext& ctx, const ChatThread& thread);

/// The stance thread for a statement: optional judge system message plus the stance prompt.
ChatThread stance_thread(const LanguagePack& pack, std::string_view statement);

StanceSample probe_once(const ModelContext& ctx, const Question& question,
                        std::optional<std::size_t> paraphrase_index = std::nullopt);

ProbeResult probe_repeat(const ModelContext& ctx, const Question& question, int n = 20,
                         std::optional<std::size_t> paraphrase_index = std::nullopt);

/// One ProbeResult per paraphrase of the question in the pack's language.
std::vector<ProbeResult> paraphrase_probe(const ModelContext& ctx, const Question& question, int n_per_variant = 20);

}  // namespace stanceshift
