#include "stanceshift/stance_probe.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "stanceshift/errors.hpp"

namespace stanceshift {

namespace {

// Folds Arabic-Indic, Extended Arabic-Indic and fullwidth digits, the Unicode
// minus sign, the fullwidth hyphen-minus and the Arabic decimal separator
// into ASCII. Everything else passes through byte for byte.
std::string fold_numerals(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  const auto u = [&](std::size_t i) { return static_cast<unsigned char>(in[i]); };
  for (std::size_t i = 0; i < in.size();) {
    if (i + 1 < in.size() && u(i) == 0xD9 && u(i + 1) >= 0xA0 && u(i + 1) <= 0xA9) {
      out += static_cast<char>('0' + (u(i + 1) - 0xA0));
      i += 2;
    } else if (i + 1 < in.size() && u(i) == 0xDB && u(i + 1) >= 0xB0 && u(i + 1) <= 0xB9) {
      out += static_cast<char>('0' + (u(i + 1) - 0xB0));
      i += 2;
    } else if (i + 1 < in.size() && u(i) == 0xD9 && u(i + 1) == 0xAB) {
      out += '.';
      i += 2;
    } else if (i + 2 < in.size() && u(i) == 0xEF && u(i + 1) == 0xBC && u(i + 2) >= 0x90 && u(i + 2) <= 0x99) {
      out += static_cast<char>('0' + (u(i + 2) - 0x90));
      i += 3;
    } else if (i + 2 < in.size() && u(i) == 0xEF && u(i + 1) == 0xBC && u(i + 2) == 0x8D) {
      out += '-';
      i += 3;
    } else if (i + 2 < in.size() && u(i) == 0xE2 && u(i + 1) == 0x88 && u(i + 2) == 0x92) {
      out += '-';
      i += 3;
    } else {
      out += in[i++];
    }
  }
  return out;
}

bool is_number_char(char c) { return (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.'; }

bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

// Accepts [+-]?digits(.digits)? exactly.
std::optional<double> as_decimal(std::string_view token) {
  std::size_t i = 0;
  if (i < token.size() && (token[i] == '+' || token[i] == '-')) ++i;
  const std::size_t int_start = i;
  while (i < token.size() && token[i] >= '0' && token[i] <= '9') ++i;
  if (i == int_start) return std::nullopt;
  if (i < token.size() && token[i] == '.') {
    const std::size_t frac_start = ++i;
    while (i < token.size() && token[i] >= '0' && token[i] <= '9') ++i;
    if (i == frac_start) return std::nullopt;
  }
  if (i != token.size()) return std::nullopt;
  std::string_view digits = token;
  if (digits.front() == '+') digits.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

}  // namespace

ScoreParse try_parse_score(std::string_view raw) {
  const std::string text = fold_numerals(raw);
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_number_char(text[i])) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < text.size() && is_number_char(text[i])) ++i;
    const std::size_t end = i;
    const bool glued = (start > 0 && is_word_char(text[start - 1])) || (end < text.size() && is_word_char(text[end]));
    if (glued) continue;
    std::string_view token(text.data() + start, end - start);
    while (!token.empty() && token.back() == '.') token.remove_suffix(1);
    if (auto value = as_decimal(token)) {
      if (*value == 0.0) *value = 0.0;
      if (*value < kScoreMin || *value > kScoreMax) return {ScoreParseStatus::out_of_range, *value};
      return {ScoreParseStatus::ok, *value};
    }
  }
  return {ScoreParseStatus::unparseable, 0};
}

double parse_score(std::string_view raw) {
  const auto parsed = try_parse_score(raw);
  switch (parsed.status) {
    case ScoreParseStatus::ok:
      return parsed.value;
    case ScoreParseStatus::out_of_range:
      throw OutOfRangeScoreError(fmt::format("score {} is outside [-10, 10]", format_score(parsed.value)), parsed.value);
    case ScoreParseStatus::unparseable:
      break;
  }
  throw UnparseableScoreError(fmt::format("no standalone number in reply '{}'", raw.substr(0, 80)));
}

// ---------------------------------------------------------------------------

Json to_json(const StanceSample& s) {
  Json j{{"backend_id", s.backend_id}, {"question_id", s.question_id}, {"language", s.language},
         {"value", s.value ? Json(*s.value) : Json(nullptr)},
         {"raw_text", s.raw_text},     {"timestamp", s.timestamp},     {"prompts", s.prompts}};
  j["paraphrase_index"] = s.paraphrase_index ? Json(*s.paraphrase_index) : Json(nullptr);
  return j;
}

StanceSample stance_sample_from_json(const Json& j) {
  StanceSample s;
  s.backend_id = j.value("backend_id", std::string());
  s.question_id = j.at("question_id").get<std::string>();
  s.language = j.at("language").get<std::string>();
  if (!j.at("value").is_null()) s.value = j.at("value").get<double>();
  s.raw_text = j.value("raw_text", std::string());
  if (j.contains("paraphrase_index") && !j.at("paraphrase_index").is_null()) {
    s.paraphrase_index = j.at("paraphrase_index").get<std::size_t>();
  }
  s.timestamp = j.value("timestamp", std::string());
  s.prompts = j.value("prompts", 1);
  return s;
}

ProbeResult summarize_samples(std::vector<StanceSample> samples) {
  ProbeResult r;
  if (!samples.empty()) {
    r.backend_id = samples.front().backend_id;
    r.question_id = samples.front().question_id;
    r.language = samples.front().language;
    r.paraphrase_index = samples.front().paraphrase_index;
  }
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.refused()) {
      ++r.refusal_count;
    } else {
      sum += *s.value;
      ++n;
    }
  }
  if (n == 0) throw AllRefusedError(r.question_id);
  r.mean = sum / static_cast<double>(n);
  double sq = 0;
  for (const auto& s : samples) {
    if (!s.refused()) sq += (*s.value - r.mean) * (*s.value - r.mean);
  }
  r.std_dev = std::sqrt(sq / static_cast<double>(n));
  r.samples = std::move(samples);
  return r;
}

// ---------------------------------------------------------------------------

ChatThread stance_thread(const LanguagePack& pack, std::string_view statement) {
  ChatThread t;
  if (!trim(pack.judge_system).empty()) t.system(pack.judge_system);
  t.user(pack.stance_message(statement));
  return t;
}

JudgeAnswer ask_for_score(const ModelContext& ctx, const ChatThread& thread) {
  JudgeAnswer answer;
  for (int attempt = 0; attempt <= kReprompts; ++attempt) {
    ChatThread t = thread;
    if (attempt > 0) t.user(ctx.pack.reprompt);
    const auto reply = ctx.gateway.complete(ctx.backend, t);
    answer.raw_text = reply.content;
    answer.thread = std::move(t);
    answer.prompts = attempt + 1;
    const auto parsed = try_parse_score(reply.content);
    if (parsed.status == ScoreParseStatus::ok) {
      answer.value = parsed.value;
      return answer;
    }
  }
  return answer;
}

StanceSample probe_once(const ModelContext& ctx, const Question& question,
                        std::optional<std::size_t> paraphrase_index) {
  const auto& statement = localized_text(question, ctx.pack.language, paraphrase_index);
  const auto answer = ask_for_score(ctx, stance_thread(ctx.pack, statement));
  StanceSample s;
  s.backend_id = ctx.backend.backend_id;
  s.question_id = question.id;
  s.language = ctx.pack.language;
  s.value = answer.value;
  s.raw_text = answer.raw_text;
  s.paraphrase_index = paraphrase_index;
  s.timestamp = now_iso();
  s.prompts = answer.prompts;
  return s;
}

ProbeResult probe_repeat(const ModelContext& ctx, const Question& question, int n,
                         std::optional<std::size_t> paraphrase_index) {
  if (n < 1) throw ValidationError("probe_repeat needs n >= 1");
  std::vector<StanceSample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) samples.push_back(probe_once(ctx, question, paraphrase_index));
  auto result = summarize_samples(std::move(samples));
  result.backend_id = ctx.backend.backend_id;
  result.question_id = question.id;
  result.language = ctx.pack.language;
  result.paraphrase_index = paraphrase_index;
  return result;
}

std::vector<ProbeResult> paraphrase_probe(const ModelContext& ctx, const Question& question, int n_per_variant) {
  const auto count = question.paraphrase_count(ctx.pack.language);
  if (count == 0) {
    throw MissingParaphraseError(
        fmt::format("question '{}' has no '{}' paraphrases", question.id, ctx.pack.language));
  }
  std::vector<ProbeResult> results;
  results.reserve(count);
  for (std::size_t i = 0; i < count; ++i) results.push_back(probe_repeat(ctx, question, n_per_variant, i));
  return results;
}

}  // namespace stanceshift
