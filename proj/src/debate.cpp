#include "stanceshift/debate.hpp"

#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stanceshift/errors.hpp"

namespace stanceshift {

void DebateConfig::validate() const {
  if (debates_per_question < 1) throw ValidationError("debates_per_question must be >= 1");
}

void validate(const DebateOutcome& o) {
  if (o.transcript.size() != kTurnOrder.size()) {
    throw ValidationError(fmt::format("transcript has {} turns; expected {}", o.transcript.size(), kDebateTurns));
  }
  for (std::size_t i = 0; i < kTurnOrder.size(); ++i) {
    const auto& t = o.transcript[i];
    const auto& slot = kTurnOrder[i];
    if (t.index != slot.index || t.side != slot.side || t.kind != slot.kind) {
      throw ValidationError(fmt::format("turn {} is ({}, {}, {})", i + 1, t.index, to_string(t.side), to_string(t.kind)));
    }
    if (trim(t.content).empty()) throw ValidationError(fmt::format("turn {} is empty", t.index));
  }
  for (double s : {o.pre_score, o.post_score}) {
    if (!(s >= kScoreMin && s <= kScoreMax)) throw ValidationError(fmt::format("score {} outside [-10, 10]", s));
  }
  if (o.shift != std::fabs(o.post_score - o.pre_score)) throw ValidationError("shift != |post - pre|");
  if ((o.mode == DebateMode::biased) != o.biased_side.has_value()) {
    throw ValidationError("biased_side must be present exactly for biased debates");
  }
}

Json to_json(const DebateOutcome& o) {
  Json turns = Json::array();
  for (const auto& t : o.transcript) {
    turns.push_back({{"index", t.index}, {"side", to_string(t.side)}, {"kind", to_string(t.kind)}, {"content", t.content}});
  }
  return Json{{"backend_id", o.backend_id},
              {"question_id", o.question_id},
              {"language", o.language},
              {"mode", to_string(o.mode)},
              {"debate_index", o.debate_index},
              {"pre_score", o.pre_score},
              {"post_score", o.post_score},
              {"shift", o.shift},
              {"biased_side", o.biased_side ? Json(to_string(*o.biased_side)) : Json(nullptr)},
              {"transcript", std::move(turns)},
              {"judge_raw_pre", o.judge_raw_pre},
              {"judge_raw_post", o.judge_raw_post}};
}

DebateOutcome debate_outcome_from_json(const Json& j) {
  DebateOutcome o;
  o.backend_id = j.value("backend_id", std::string());
  o.question_id = j.at("question_id").get<std::string>();
  o.language = j.at("language").get<std::string>();
  o.mode = debate_mode_from_string(j.at("mode").get<std::string>());
  o.debate_index = j.value("debate_index", 0);
  o.pre_score = j.at("pre_score").get<double>();
  o.post_score = j.at("post_score").get<double>();
  o.shift = j.at("shift").get<double>();
  if (j.contains("biased_side") && !j.at("biased_side").is_null()) {
    o.biased_side = side_from_string(j.at("biased_side").get<std::string>());
  }
  for (const auto& t : j.value("transcript", Json::array())) {
    o.transcript.push_back({t.at("index").get<int>(), side_from_string(t.at("side").get<std::string>()),
                            turn_kind_from_string(t.at("kind").get<std::string>()), t.at("content").get<std::string>()});
  }
  o.judge_raw_pre = j.value("judge_raw_pre", std::string());
  o.judge_raw_post = j.value("judge_raw_post", std::string());
  return o;
}

Side select_biased_side(double pre_score, const DebateConfig& cfg) {
  if (pre_score > 0) return Side::pro;
  if (pre_score < 0) return Side::con;
  return cfg.zero_pre_score_side;
}

std::string render_transcript(const LanguagePack& pack, const std::vector<DebateTurn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    if (!out.empty()) out += "\n\n";
    out += render_template(pack.opponent_turn, {{"label", pack.side_labels.at(t.side)}, {"content", t.content}});
  }
  return out;
}

namespace {

std::string opponent_message(const LanguagePack& pack, const DebateTurn& previous, TurnKind kind) {
  return render_template(pack.opponent_turn,
                         {{"label", pack.side_labels.at(previous.side)}, {"content", previous.content}}) +
         "\n\n" + pack.turn_instructions.at(kind);
}

}  // namespace

DebateOutcome run_debate(const ModelContext& ctx, const Question& question, DebateMode mode, int debate_index,
                         const DebateConfig& cfg) {
  cfg.validate();
  const auto& pack = ctx.pack;
  const auto& statement = localized_text(question, pack.language);

  const auto pre = ask_for_score(ctx, stance_thread(pack, statement));
  if (!pre.value) {
    throw DebateAbortedError(fmt::format("judge refused the pre-debate score for '{}' (last reply: '{}')", question.id,
                                         pre.raw_text.substr(0, 80)));
  }

  DebateOutcome out;
  out.backend_id = ctx.backend.backend_id;
  out.question_id = question.id;
  out.language = pack.language;
  out.mode = mode;
  out.debate_index = debate_index;
  out.pre_score = *pre.value;
  out.judge_raw_pre = pre.raw_text;
  if (mode == DebateMode::biased) out.biased_side = select_biased_side(out.pre_score, cfg);

  std::map<Side, ChatThread> debaters;
  for (Side side : {Side::pro, Side::con}) {
    ChatThread t;
    t.system(pack.debater_system(side, out.biased_side == side, statement));
    debaters.emplace(side, std::move(t));
  }

  for (const auto& slot : kTurnOrder) {
    auto& thread = debaters.at(slot.side);
    if (out.transcript.empty()) {
      thread.user(pack.turn_instructions.at(slot.kind));
    } else {
      thread.user(opponent_message(pack, out.transcript.back(), slot.kind));
    }
    auto reply = ctx.gateway.complete(ctx.backend, thread);
    thread.assistant(reply.content);
    out.transcript.push_back({slot.index, slot.side, slot.kind, std::move(reply.content)});
  }

  ChatThread judge = pre.thread;
  judge.assistant(pre.raw_text);
  std::string shown = render_transcript(pack, out.transcript);
  if (!trim(pack.transcript_intro).empty()) shown = pack.transcript_intro + "\n\n" + shown;
  judge.user(std::move(shown));
  judge.user(pack.judge_post_message(out.pre_score));

  const auto post = ask_for_score(ctx, judge);
  if (!post.value) {
    throw DebateAbortedError(fmt::format("judge refused the post-debate score for '{}' (last reply: '{}')",
                                         question.id, post.raw_text.substr(0, 80)));
  }
  out.post_score = *post.value;
  out.judge_raw_post = post.raw_text;
  out.shift = std::fabs(out.post_score - out.pre_score);
  return out;
}

DebateSetResult run_debate_set(const ModelContext& ctx, const Question& question, DebateMode mode,
                               const DebateConfig& cfg) {
  cfg.validate();
  DebateSetResult result;
  for (int i = 0; i < cfg.debates_per_question; ++i) {
    try {
      result.outcomes.push_back(run_debate(ctx, question, mode, i, cfg));
    } catch (const DebateAbortedError& e) {
      spdlog::warn("debate {} on '{}' aborted: {}", i, question.id, e.what());
      result.aborted.push_back({i, e.what()});
    }
  }
  if (result.outcomes.empty()) {
    throw DebateSetFailedError(
        fmt::format("all {} {} debates on '{}' aborted", cfg.debates_per_question, to_string(mode), question.id));
  }
  return result;
}

}  // namespace stanceshift
