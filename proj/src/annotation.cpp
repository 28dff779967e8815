#include "stanceshift/annotation.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "stanceshift/errors.hpp"

namespace fs = std::filesystem;

namespace stanceshift {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::pre:
      return "pre";
    case Phase::debate:
      return "debate";
    case Phase::post:
      return "post";
  }
  return "pre";
}

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::instructions:
      return "instructions";
    case SessionStatus::active:
      return "active";
    case SessionStatus::done:
      return "done";
  }
  return "instructions";
}

Phase phase_from_string(std::string_view s) {
  if (s == "pre") return Phase::pre;
  if (s == "debate") return Phase::debate;
  if (s == "post") return Phase::post;
  throw ValidationError(fmt::format("unknown phase '{}'", s));
}

// ---------------------------------------------------------------------------

namespace {

DisplayDebate display_debate_from_json(const Json& j, const std::string& where) {
  DisplayDebate d;
  d.question_id = j.value("question_id", std::string());
  d.statement = j.value("statement", std::string());
  if (j.contains("pre_score") && !j.at("pre_score").is_null()) d.pre_score = j.at("pre_score").get<double>();
  if (j.contains("post_score") && !j.at("post_score").is_null()) d.post_score = j.at("post_score").get<double>();
  const auto turns = j.at("turns").get<std::vector<std::string>>();
  if (turns.size() != kTurnOrder.size()) {
    throw ValidationError(fmt::format("{}: expected {} turns, found {}", where, kDebateTurns, turns.size()));
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    d.turns.push_back({kTurnOrder[i].index, kTurnOrder[i].side, kTurnOrder[i].kind, turns[i]});
  }
  return d;
}

Json display_debate_json(const DisplayDebate& d) {
  Json turns = Json::array();
  for (const auto& t : d.turns) turns.push_back(t.content);
  Json j{{"turns", std::move(turns)}};
  if (!d.question_id.empty()) j["question_id"] = d.question_id;
  if (!d.statement.empty()) j["statement"] = d.statement;
  if (d.pre_score) j["pre_score"] = *d.pre_score;
  if (d.post_score) j["post_score"] = *d.post_score;
  return j;
}

Json transcript_payload(const DisplayDebate& d, const std::map<Side, std::string>& labels) {
  Json turns = Json::array();
  for (const auto& t : d.turns) {
    turns.push_back({{"index", t.index},
                     {"side", to_string(t.side)},
                     {"kind", to_string(t.kind)},
                     {"label", labels.at(t.side)},
                     {"content", t.content}});
  }
  return turns;
}

std::string iso_from_us(std::int64_t us) { return iso_timestamp(Clock::time_point(std::chrono::microseconds(us))); }

Json opt_ts(const std::optional<std::int64_t>& us) { return us ? Json(iso_from_us(*us)) : Json(nullptr); }

}  // namespace

void StudyConfig::validate() const {
  if (trim(study_id).empty()) throw ValidationError("study_id is empty");
  stanceshift::validate(questions);
  if (questions.questions.size() != kStudyQuestions) {
    throw ValidationError(fmt::format("study '{}' has {} questions; expected {}", study_id, questions.questions.size(),
                                      kStudyQuestions));
  }
  if (questions.taxonomy.size() != kStudyTopics) {
    throw ValidationError(fmt::format("study '{}' has {} topics; expected {}", study_id, questions.taxonomy.size(),
                                      kStudyTopics));
  }
  for (const auto& topic : questions.taxonomy) {
    const auto n = std::count_if(questions.questions.begin(), questions.questions.end(),
                                 [&](const Question& q) { return q.category == topic; });
    if (n != 2) throw ValidationError(fmt::format("topic '{}' has {} questions; expected 2", topic, n));
  }
  for (const auto& q : questions.questions) {
    if (!q.has_language(language)) throw LanguageUnavailableError(q.id, language);
    auto it = debates.find(q.id);
    if (it == debates.end()) throw ValidationError(fmt::format("question '{}' has no debate to display", q.id));
    for (const auto& t : it->second.turns)
      if (trim(t.content).empty()) throw ValidationError(fmt::format("debate for '{}' has an empty turn", q.id));
  }
  if (context_samples.size() != kContextSamples) {
    throw ValidationError(fmt::format("study '{}' has {} context debates; expected {}", study_id,
                                      context_samples.size(), kContextSamples));
  }
}

StudyConfig study_config_from_json(const Json& j) {
  StudyConfig s;
  try {
    s.study_id = j.at("study_id").get<std::string>();
    s.language = j.value("language", std::string("en"));
    s.questions = question_set_from_json(j.at("questions"));
    s.instructions = j.value("instructions", std::vector<std::string>{});
    if (j.contains("side_labels")) {
      s.side_labels[Side::pro] = j.at("side_labels").at("pro").get<std::string>();
      s.side_labels[Side::con] = j.at("side_labels").at("con").get<std::string>();
    }
    for (std::size_t i = 0; i < j.at("context_samples").size(); ++i) {
      s.context_samples.push_back(display_debate_from_json(j.at("context_samples")[i], fmt::format("context_samples[{}]", i)));
    }
    for (const auto& [qid, d] : j.at("debates").items()) {
      auto debate = display_debate_from_json(d, "debates." + qid);
      debate.question_id = qid;
      s.debates.emplace(qid, std::move(debate));
    }
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("malformed study config: {}", e.what()));
  }
  for (auto& [qid, d] : s.debates) {
    if (const auto* q = s.questions.find(qid); q && d.statement.empty() && q->has_language(s.language)) {
      d.statement = q->texts.at(s.language);
    }
  }
  s.validate();
  return s;
}

Json to_json(const StudyConfig& s) {
  Json context = Json::array();
  for (const auto& d : s.context_samples) context.push_back(display_debate_json(d));
  Json debates = Json::object();
  for (const auto& [qid, d] : s.debates) debates[qid] = display_debate_json(d);
  return Json{{"study_id", s.study_id},
              {"language", s.language},
              {"questions", to_json(s.questions)},
              {"instructions", s.instructions},
              {"side_labels", {{"pro", s.side_labels.at(Side::pro)}, {"con", s.side_labels.at(Side::con)}}},
              {"context_samples", std::move(context)},
              {"debates", std::move(debates)}};
}

StudyConfig load_study_config(const fs::path& path) { return study_config_from_json(read_json_file(path)); }

Json to_json(const AnnotatorSession& s) {
  Json records = Json::array();
  for (const auto& r : s.records) {
    records.push_back({{"pre", r.pre ? Json(*r.pre) : Json(nullptr)},
                       {"post", r.post ? Json(*r.post) : Json(nullptr)},
                       {"pre_at", opt_ts(r.pre_at_us)},
                       {"debate_served_at", opt_ts(r.debate_served_at_us)},
                       {"post_at", opt_ts(r.post_at_us)}});
  }
  return Json{{"session_id", s.session_id},
              {"study_id", s.study_id},
              {"alias", s.alias},
              {"status", to_string(s.status)},
              {"cursor", {{"index", s.index}, {"phase", to_string(s.phase)}}},
              {"records", std::move(records)}};
}

std::string StudyExport::to_jsonl() const {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  out += Json{{"type", "topic_means"}, {"topics", topic_means}}.dump() + "\n";
  return out;
}

std::vector<HumanRecord> human_records_from_export(const std::string& jsonl) {
  std::vector<HumanRecord> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(fmt::format("annotation export line {}: {}", n, e.what()));
    }
    if (j.value("type", std::string()) != "record") continue;
    out.push_back({j.at("session_id").get<std::string>(), j.at("question_id").get<std::string>(),
                   j.at("pre").get<int>(), j.at("post").get<int>()});
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AnnotationService::StudyState {
  StudyConfig config;
  std::shared_mutex snapshot_mu;
  std::mutex log_mu;
  std::ofstream log;
  std::vector<std::string> session_ids;
};

struct AnnotationService::SessionSlot {
  std::mutex mu;
  AnnotatorSession session;
};

AnnotationService::AnnotationService(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  fs::create_directories(data_dir_);
}

AnnotationService::~AnnotationService() = default;

namespace {

std::string new_session_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  return fmt::format("{:016x}", rng());
}

std::int64_t now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now().time_since_epoch()).count();
}

// Applies a non-creation event to a session. Live requests are validated
// before their event is built, so this only replays known-good transitions.
void apply(AnnotatorSession& s, const Json& e, std::size_t question_count) {
  const auto kind = e.at("event").get<std::string>();
  const auto at = e.at("at_us").get<std::int64_t>();
  s.last_event_us = std::max(s.last_event_us, at);
  if (kind == "instructions_acknowledged") {
    s.status = SessionStatus::active;
    s.index = 0;
    s.phase = Phase::pre;
  } else if (kind == "debate_served") {
    s.records.at(e.at("index").get<std::size_t>()).debate_served_at_us = at;
    s.phase = Phase::post;
  } else if (kind == "score") {
    const auto idx = e.at("index").get<std::size_t>();
    auto& r = s.records.at(idx);
    if (phase_from_string(e.at("phase").get<std::string>()) == Phase::pre) {
      r.pre = e.at("value").get<int>();
      r.pre_at_us = at;
      s.phase = Phase::debate;
    } else {
      r.post = e.at("value").get<int>();
      r.post_at_us = at;
      if (idx + 1 >= question_count) {
        s.status = SessionStatus::done;
      } else {
        s.index = idx + 1;
        s.phase = Phase::pre;
      }
    }
  } else {
    throw ParseError(fmt::format("unknown annotation event '{}'", kind));
  }
}

}  // namespace

std::int64_t AnnotationService::stamp(AnnotatorSession& s) const { return std::max(now_us(), s.last_event_us + 1); }

void AnnotationService::append_event(StudyState& study, const Json& event) {
  std::lock_guard lock(study.log_mu);
  study.log << event.dump() << '\n';
  study.log.flush();
  if (!study.log) throw Error("failed writing annotation event log for study '" + study.config.study_id + "'");
}

void AnnotationService::add_study(StudyConfig config) {
  config.validate();
  std::unique_lock lock(registry_mu_);
  if (studies_.contains(config.study_id)) throw ValidationError("study '" + config.study_id + "' already registered");
  auto state = std::make_unique<StudyState>();
  state->config = std::move(config);
  const auto log_path = data_dir_ / (state->config.study_id + ".events.jsonl");
  const auto n_questions = state->config.questions.questions.size();

  if (fs::exists(log_path)) {
    std::ifstream in(log_path, std::ios::binary);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      Json e;
      try {
        e = Json::parse(line);
      } catch (const Json::parse_error&) {
        if (in.peek() == EOF) break;  // torn final write
        throw ParseError(fmt::format("{}:{}: malformed event", log_path.string(), line_no));
      }
      const auto sid = e.at("session_id").get<std::string>();
      if (e.at("event") == "session_created") {
        auto slot = std::make_unique<SessionSlot>();
        slot->session.session_id = sid;
        slot->session.study_id = state->config.study_id;
        slot->session.alias = e.value("alias", std::string());
        slot->session.records.resize(n_questions);
        slot->session.last_event_us = e.at("at_us").get<std::int64_t>();
        state->session_ids.push_back(sid);
        sessions_[sid] = std::move(slot);
      } else {
        auto it = sessions_.find(sid);
        if (it == sessions_.end()) throw ParseError(fmt::format("{}:{}: event for unknown session", log_path.string(), line_no));
        apply(it->second->session, e, n_questions);
      }
    }
  }
  state->log.open(log_path, std::ios::binary | std::ios::app);
  if (!state->log) throw Error("cannot open '" + log_path.string() + "'");
  studies_.emplace(state->config.study_id, std::move(state));
}

AnnotationService::StudyState& AnnotationService::study_state(const std::string& study_id) const {
  auto it = studies_.find(study_id);
  if (it == studies_.end()) throw NotFoundError("unknown study '" + study_id + "'");
  return *it->second;
}

AnnotationService::SessionSlot& AnnotationService::slot(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + session_id + "'");
  return *it->second;
}

const StudyConfig& AnnotationService::study(const std::string& study_id) const {
  std::shared_lock lock(registry_mu_);
  return study_state(study_id).config;
}

AnnotatorSession AnnotationService::create_session(const std::string& study_id, const std::string& alias) {
  std::unique_lock lock(registry_mu_);
  auto& st = study_state(study_id);
  std::shared_lock snapshot(st.snapshot_mu);
  auto slot = std::make_unique<SessionSlot>();
  auto& s = slot->session;
  do {
    s.session_id = new_session_id();
  } while (sessions_.contains(s.session_id));
  s.study_id = study_id;
  s.alias = alias;
  s.records.resize(st.config.questions.questions.size());
  s.last_event_us = stamp(s);
  append_event(st, Json{{"event", "session_created"}, {"session_id", s.session_id}, {"alias", alias}, {"at_us", s.last_event_us}});
  auto copy = s;
  st.session_ids.push_back(s.session_id);
  sessions_.emplace(s.session_id, std::move(slot));
  return copy;
}

AnnotatorSession AnnotationService::acknowledge_instructions(const std::string& session_id) {
  std::shared_lock lock(registry_mu_);
  auto& sl = slot(session_id);
  auto& st = study_state(sl.session.study_id);
  std::shared_lock snapshot(st.snapshot_mu);
  std::lock_guard guard(sl.mu);
  auto& s = sl.session;
  if (s.status != SessionStatus::instructions) throw SequenceError("instructions were already acknowledged");
  const Json e{{"event", "instructions_acknowledged"}, {"session_id", session_id}, {"at_us", stamp(s)}};
  append_event(st, e);
  apply(s, e, st.config.questions.questions.size());
  return s;
}

AnnotatorSession AnnotationService::session(const std::string& session_id) const {
  std::shared_lock lock(registry_mu_);
  auto& sl = slot(session_id);
  std::lock_guard guard(sl.mu);
  return sl.session;
}

Json AnnotationService::instructions_payload(const std::string& study_id) const {
  const auto& cfg = study_state(study_id).config;
  Json samples = Json::array();
  for (const auto& d : cfg.context_samples) {
    samples.push_back({{"statement", d.statement},
                       {"pre_score", d.pre_score ? Json(*d.pre_score) : Json(nullptr)},
                       {"post_score", d.post_score ? Json(*d.post_score) : Json(nullptr)},
                       {"transcript", transcript_payload(d, cfg.side_labels)}});
  }
  return Json{{"phase", "instructions"},
              {"language", cfg.language},
              {"instructions", cfg.instructions},
              {"total", cfg.questions.questions.size()},
              {"context_samples", std::move(samples)}};
}

Json AnnotationService::next(const std::string& session_id) {
  std::shared_lock lock(registry_mu_);
  auto& sl = slot(session_id);
  auto& st = study_state(sl.session.study_id);
  std::shared_lock snapshot(st.snapshot_mu);
  std::lock_guard guard(sl.mu);
  auto& s = sl.session;
  const auto& cfg = st.config;

  if (s.status == SessionStatus::instructions) {
    auto payload = instructions_payload(cfg.study_id);
    payload["status"] = "instructions";
    payload["session_id"] = s.session_id;
    return payload;
  }
  if (s.status == SessionStatus::done) {
    return Json{{"status", "done"}, {"phase", "done"}, {"session_id", s.session_id}};
  }

  const auto& q = cfg.questions.questions.at(s.index);
  Json payload{{"status", "active"},
               {"session_id", s.session_id},
               {"index", s.index},
               {"total", cfg.questions.questions.size()},
               {"question_id", q.id},
               {"topic", q.category},
               {"question", q.texts.at(cfg.language)}};
  if (s.phase == Phase::pre) {
    payload["phase"] = "pre";
    return payload;
  }
  payload["transcript"] = transcript_payload(cfg.debates.at(q.id), cfg.side_labels);
  if (s.phase == Phase::debate) {
    const Json e{{"event", "debate_served"}, {"session_id", s.session_id}, {"index", s.index}, {"at_us", stamp(s)}};
    append_event(st, e);
    apply(s, e, cfg.questions.questions.size());
    payload["phase"] = "debate";
    return payload;
  }
  payload["phase"] = "post";
  payload["pre"] = *s.records.at(s.index).pre;
  return payload;
}

AnnotatorSession AnnotationService::submit_score(const std::string& session_id, std::size_t index, Phase phase,
                                                 const Json& value) {
  int score = 0;
  if (value.is_number_integer()) {
    const auto v = value.get<long long>();
    if (v < -10 || v > 10) throw ValidationError(fmt::format("score {} is outside [-10, 10]", v));
    score = static_cast<int>(v);
  } else if (value.is_number_float()) {
    const double v = value.get<double>();
    if (v != static_cast<double>(static_cast<long long>(v))) throw ValidationError("score must be an integer");
    if (v < -10 || v > 10) throw ValidationError(fmt::format("score {} is outside [-10, 10]", v));
    score = static_cast<int>(v);
  } else {
    throw ValidationError("score must be an integer between -10 and 10");
  }
  if (phase == Phase::debate) throw ValidationError("the debate step takes no score");

  std::shared_lock lock(registry_mu_);
  auto& sl = slot(session_id);
  auto& st = study_state(sl.session.study_id);
  std::shared_lock snapshot(st.snapshot_mu);
  std::lock_guard guard(sl.mu);
  auto& s = sl.session;
  const auto n = st.config.questions.questions.size();
  if (index >= n) throw ValidationError(fmt::format("question index {} is out of range (0..{})", index, n - 1));
  const auto& r = s.records.at(index);
  if ((phase == Phase::pre && r.pre) || (phase == Phase::post && r.post)) {
    throw ImmutabilityError(fmt::format("the {} score of question {} is already stored", to_string(phase), index));
  }
  if (s.status == SessionStatus::instructions) throw SequenceError("instructions have not been acknowledged");
  if (s.status == SessionStatus::done) throw SequenceError("session is complete");
  if (index != s.index || phase != s.phase) {
    throw SequenceError(fmt::format("expected ({}, {}), got ({}, {})", s.index, to_string(s.phase), index, to_string(phase)));
  }
  const Json e{{"event", "score"}, {"session_id", session_id}, {"index", index},
               {"phase", to_string(phase)}, {"value", score},      {"at_us", stamp(s)}};
  append_event(st, e);
  apply(s, e, n);
  return s;
}

StudyExport AnnotationService::export_study(const std::string& study_id) const {
  std::shared_lock lock(registry_mu_);
  auto& st = study_state(study_id);
  std::unique_lock snapshot(st.snapshot_mu);
  const auto& qs = st.config.questions;

  StudyExport out;
  std::map<std::string, std::tuple<double, double, std::size_t>> sums;
  for (const auto& sid : st.session_ids) {
    auto& sl = *sessions_.at(sid);
    std::lock_guard guard(sl.mu);
    const auto& s = sl.session;
    if (s.status != SessionStatus::done) continue;
    for (std::size_t i = 0; i < qs.questions.size(); ++i) {
      const auto& q = qs.questions[i];
      const auto& r = s.records[i];
      out.records.push_back({{"type", "record"},
                             {"session_id", s.session_id},
                             {"alias", s.alias},
                             {"index", i},
                             {"question_id", q.id},
                             {"topic", q.category},
                             {"polarity", q.polarity},
                             {"pre", *r.pre},
                             {"post", *r.post},
                             {"pre_at", opt_ts(r.pre_at_us)},
                             {"debate_served_at", opt_ts(r.debate_served_at_us)},
                             {"post_at", opt_ts(r.post_at_us)},
                             {"pre_at_us", *r.pre_at_us},
                             {"debate_served_at_us", *r.debate_served_at_us},
                             {"post_at_us", *r.post_at_us}});
      auto& [pre, post, count] = sums[q.category];
      pre += q.polarity * *r.pre;
      post += q.polarity * *r.post;
      ++count;
    }
  }
  if (out.records.empty()) throw ExportError("study '" + study_id + "' has no completed session");
  out.topic_means = Json::array();
  for (const auto& topic : qs.taxonomy) {
    auto it = sums.find(topic);
    if (it == sums.end()) continue;
    const auto& [pre, post, count] = it->second;
    out.topic_means.push_back({{"topic", topic},
                               {"pre_mean", pre / static_cast<double>(count)},
                               {"post_mean", post / static_cast<double>(count)},
                               {"responses", count}});
  }
  return out;
}

}  // namespace stanceshift
