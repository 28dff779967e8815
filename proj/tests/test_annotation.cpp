#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "stanceshift/annotation_http.hpp"
#include "support.hpp"

using namespace stanceshift;
using support::TempDir;

namespace {

StudyConfig study() { return load_study_config(support::source_path("data/study_human16.json")); }

/// Drives one session through all 16 questions with the given scores.
void complete_session(AnnotationService& svc, const std::string& sid, const std::function<std::pair<int, int>(std::size_t)>& scores) {
  svc.acknowledge_instructions(sid);
  for (std::size_t i = 0; i < kStudyQuestions; ++i) {
    const auto [pre, post] = scores(i);
    svc.next(sid);
    svc.submit_score(sid, i, Phase::pre, pre);
    svc.next(sid);  // serves the debate
    svc.submit_score(sid, i, Phase::post, post);
  }
}

}  // namespace

TEST_CASE("study config validation") {
  const auto s = study();
  CHECK(s.questions.questions.size() == 16);
  CHECK(s.context_samples.size() == 2);
  CHECK(study_config_from_json(to_json(s)).debates.size() == 16);

  auto j = to_json(s);
  j["context_samples"].erase(0);
  CHECK_THROWS_AS(study_config_from_json(j), ValidationError);

  j = to_json(s);
  j["debates"].erase("sex-natural");
  CHECK_THROWS_AS(study_config_from_json(j), ValidationError);

  j = to_json(s);
  j["questions"]["questions"][0]["category"] = "Economy";  // three in Economy, one in Religion
  CHECK_THROWS_AS(study_config_from_json(j), ValidationError);
}

TEST_CASE("session flow") {
  TempDir tmp;
  AnnotationService svc(tmp.path());
  svc.add_study(study());

  CHECK_THROWS_AS(svc.create_session("nope", "a"), NotFoundError);

  auto s = svc.create_session("human16", "annotator-1");
  CHECK(s.status == SessionStatus::instructions);
  const auto first = svc.next(s.session_id);
  CHECK(first.at("phase") == "instructions");
  CHECK(first.at("context_samples").size() == 2);
  CHECK_THROWS_AS(svc.submit_score(s.session_id, 0, Phase::pre, 1), SequenceError);

  s = svc.acknowledge_instructions(s.session_id);
  CHECK(s.status == SessionStatus::active);
  CHECK(s.index == 0);
  CHECK(s.phase == Phase::pre);
  CHECK_THROWS_AS(svc.acknowledge_instructions(s.session_id), SequenceError);

  const auto pre_payload = svc.next(s.session_id);
  CHECK(pre_payload.at("phase") == "pre");
  CHECK_FALSE(pre_payload.contains("transcript"));
  // Blindness: no debate text anywhere in the serialized pre payload.
  const auto& debate = svc.study("human16").debates.at(pre_payload.at("question_id").get<std::string>());
  for (const auto& t : debate.turns) CHECK(pre_payload.dump().find(t.content) == std::string::npos);

  CHECK_THROWS_AS(svc.submit_score(s.session_id, 0, Phase::post, 3), SequenceError);
  CHECK_THROWS_AS(svc.submit_score(s.session_id, 0, Phase::pre, 11), ValidationError);
  CHECK_THROWS_AS(svc.submit_score(s.session_id, 0, Phase::pre, 2.5), ValidationError);
  CHECK_THROWS_AS(svc.submit_score(s.session_id, 0, Phase::pre, "4"), ValidationError);
  CHECK_THROWS_AS(svc.submit_score(s.session_id, 1, Phase::pre, 4), SequenceError);

  s = svc.submit_score(s.session_id, 0, Phase::pre, 4.0);  // integral floats are accepted
  CHECK(s.phase == Phase::debate);
  CHECK_THROWS_AS(svc.submit_score(s.session_id, 0, Phase::pre, 5), ImmutabilityError);

  const auto debate_payload = svc.next(s.session_id);
  CHECK(debate_payload.at("phase") == "debate");
  CHECK(debate_payload.at("transcript").size() == 4);
  CHECK(debate_payload.at("transcript")[0].at("side") == "pro");
  CHECK(svc.session(s.session_id).phase == Phase::post);

  const auto post_payload = svc.next(s.session_id);
  CHECK(post_payload.at("phase") == "post");
  CHECK(post_payload.at("pre") == 4);

  s = svc.submit_score(s.session_id, 0, Phase::post, -10);
  CHECK(s.index == 1);
  CHECK(s.phase == Phase::pre);
  CHECK(*s.records[0].pre == 4);
  CHECK(*s.records[0].post == -10);
  CHECK(*s.records[0].pre_at_us < *s.records[0].debate_served_at_us);
  CHECK(*s.records[0].debate_served_at_us < *s.records[0].post_at_us);
  CHECK_THROWS_AS(svc.submit_score(s.session_id, 0, Phase::post, 1), ImmutabilityError);
}

TEST_CASE("abortion question scored -10 twice gives zero shift") {
  TempDir tmp;
  AnnotationService svc(tmp.path());
  svc.add_study(study());
  const auto& qs = svc.study("human16").questions.questions;
  const auto abortion = static_cast<std::size_t>(
      std::find_if(qs.begin(), qs.end(), [](auto& q) { return q.id == "fem-abortion"; }) - qs.begin());
  const auto sid = svc.create_session("human16", "a").session_id;
  complete_session(svc, sid, [&](std::size_t i) { return i == abortion ? std::pair{-10, -10} : std::pair{1, 2}; });
  const auto s = svc.session(sid);
  CHECK(s.status == SessionStatus::done);
  CHECK(*s.records[abortion].pre == -10);
  CHECK(*s.records[abortion].post == -10);
  CHECK(svc.next(sid).at("phase") == "done");
  CHECK_THROWS_AS(svc.submit_score(sid, 15, Phase::post, 0), ImmutabilityError);
}

TEST_CASE("export") {
  TempDir tmp;
  AnnotationService svc(tmp.path());
  svc.add_study(study());
  CHECK_THROWS_AS(svc.export_study("human16"), ExportError);

  SUBCASE("one session gives 16 records") {
    const auto sid = svc.create_session("human16", "a").session_id;
    svc.create_session("human16", "unfinished");
    complete_session(svc, sid, [](std::size_t i) { return std::pair{static_cast<int>(i % 5), static_cast<int>(i % 5)}; });
    const auto ex = svc.export_study("human16");
    CHECK(ex.records.size() == 16);
    for (const auto& t : ex.topic_means) CHECK(t.at("pre_mean") == t.at("post_mean"));
    const auto humans = human_records_from_export(ex.to_jsonl());
    CHECK(humans.size() == 16);
  }
  SUBCASE("twenty sessions give 40 scores per topic") {
    std::vector<std::string> ids;
    for (int k = 0; k < 20; ++k) ids.push_back(svc.create_session("human16", fmt::format("a{}", k)).session_id);
    std::set<std::string> unique(ids.begin(), ids.end());
    CHECK(unique.size() == 20);
    for (std::size_t k = 0; k < ids.size(); ++k)
      complete_session(svc, ids[k], [&](std::size_t i) {
        return std::pair{static_cast<int>((i + k) % 21) - 10, static_cast<int>((i * k) % 21) - 10};
      });
    const auto ex = svc.export_study("human16");
    CHECK(ex.records.size() == 320);
    REQUIRE(ex.topic_means.size() == 8);
    for (const auto& t : ex.topic_means) CHECK(t.at("responses") == 40);

    // Topic means agree with the metrics module.
    const auto summary = human_model_summary(svc.study("human16").questions, human_records_from_export(ex.to_jsonl()), {});
    for (const auto& t : ex.topic_means) {
      const auto it = std::find_if(summary.topics.begin(), summary.topics.end(),
                                   [&](auto& s) { return s.topic == t.at("topic"); });
      REQUIRE(it != summary.topics.end());
      CHECK(*it->human_pre == doctest::Approx(t.at("pre_mean").get<double>()));
      CHECK(*it->human_post == doctest::Approx(t.at("post_mean").get<double>()));
    }
    for (const auto& r : ex.records) {
      CHECK(r.at("pre_at_us").get<std::int64_t>() < r.at("debate_served_at_us").get<std::int64_t>());
      CHECK(r.at("debate_served_at_us").get<std::int64_t>() < r.at("post_at_us").get<std::int64_t>());
    }
  }
}

TEST_CASE("sessions survive a restart") {
  TempDir tmp;
  std::string sid;
  {
    AnnotationService svc(tmp.path());
    svc.add_study(study());
    sid = svc.create_session("human16", "a").session_id;
    svc.acknowledge_instructions(sid);
    svc.submit_score(sid, 0, Phase::pre, 3);
    svc.next(sid);
  }
  AnnotationService svc(tmp.path());
  svc.add_study(study());
  const auto s = svc.session(sid);
  CHECK(s.status == SessionStatus::active);
  CHECK(s.phase == Phase::post);
  CHECK(*s.records[0].pre == 3);
  CHECK(s.records[0].debate_served_at_us.has_value());
  CHECK_THROWS_AS(svc.submit_score(sid, 0, Phase::pre, 4), ImmutabilityError);
  svc.submit_score(sid, 0, Phase::post, 5);
  CHECK(svc.session(sid).index == 1);
}

TEST_CASE("concurrent sessions stay independent") {
  TempDir tmp;
  AnnotationService svc(tmp.path());
  svc.add_study(study());
  std::vector<std::string> ids;
  for (int k = 0; k < 8; ++k) ids.push_back(svc.create_session("human16", fmt::format("a{}", k)).session_id);
  {
    std::vector<std::jthread> threads;
    for (std::size_t k = 0; k < ids.size(); ++k)
      threads.emplace_back([&, k] { complete_session(svc, ids[k], [&](std::size_t) { return std::pair{static_cast<int>(k), -static_cast<int>(k)}; }); });
    // Export races against the sessions; whatever it sees must be complete sessions only.
    threads.emplace_back([&] {
      for (int i = 0; i < 20; ++i) {
        try {
          CHECK(svc.export_study("human16").records.size() % 16 == 0);
        } catch (const ExportError&) {
        }
      }
    });
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto s = svc.session(ids[k]);
    CHECK(s.status == SessionStatus::done);
    for (const auto& r : s.records) CHECK(*r.pre == static_cast<int>(k));
  }
}

TEST_CASE("HTTP API") {
  TempDir tmp;
  std::filesystem::create_directories(tmp / "static");
  write_text_atomic(tmp / "static/index.html", "<html>ui</html>");
  AnnotationService svc(tmp / "data");
  svc.add_study(study());
  AnnotationServer server(svc, tmp / "static");
  const int port = server.bind_to_any_port();
  std::jthread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto post = [&](const std::string& path, const Json& body) { return cli.Post(path, body.dump(), "application/json"); };

  auto res = post("/api/sessions", {{"study_id", "human16"}, {"alias", "web"}});
  REQUIRE(res);
  CHECK(res->status == 201);
  const auto created = Json::parse(res->body);
  const auto sid = created.at("session").at("session_id").get<std::string>();
  CHECK(created.at("next").at("context_samples").size() == 2);

  CHECK(post("/api/sessions", {{"study_id", "missing"}})->status == 404);
  CHECK(post("/api/sessions", {{"alias", "x"}})->status == 400);
  CHECK(cli.Post("/api/sessions", "{not json", "application/json")->status == 400);
  CHECK(cli.Get("/api/sessions/ffff")->status == 404);

  CHECK(post("/api/sessions/" + sid + "/scores", {{"index", 0}, {"phase", "pre"}, {"value", 1}})->status == 409);
  CHECK(post("/api/sessions/" + sid + "/acknowledge", Json::object())->status == 200);

  res = cli.Get("/api/sessions/" + sid + "/next");
  REQUIRE(res);
  auto payload = Json::parse(res->body);
  CHECK(payload.at("phase") == "pre");
  CHECK(res->body.find("transcript") == std::string::npos);

  res = post("/api/sessions/" + sid + "/scores", {{"index", 0}, {"phase", "pre"}, {"value", 11}});
  CHECK(res->status == 400);
  CHECK(Json::parse(res->body).at("error") == "invalid");
  CHECK(post("/api/sessions/" + sid + "/scores", {{"index", 0}, {"phase", "post"}, {"value", 1}})->status == 409);
  CHECK(post("/api/sessions/" + sid + "/scores", {{"index", 0}, {"phase", "sideways"}, {"value", 1}})->status == 400);
  CHECK(post("/api/sessions/" + sid + "/scores", {{"index", 0}, {"phase", "pre"}, {"value", -3}})->status == 200);
  res = post("/api/sessions/" + sid + "/scores", {{"index", 0}, {"phase", "pre"}, {"value", 2}});
  CHECK(res->status == 409);
  CHECK(Json::parse(res->body).at("error") == "immutable");

  payload = Json::parse(cli.Get("/api/sessions/" + sid + "/next")->body);
  CHECK(payload.at("phase") == "debate");
  CHECK(payload.at("transcript").size() == 4);
  payload = Json::parse(cli.Get("/api/sessions/" + sid + "/next")->body);
  CHECK(payload.at("phase") == "post");
  CHECK(payload.at("pre") == -3);
  CHECK(post("/api/sessions/" + sid + "/scores", {{"index", 0}, {"phase", "post"}, {"value", -3}})->status == 200);

  CHECK(cli.Get("/api/studies/human16/export")->status == 409);
  CHECK(Json::parse(cli.Get("/api/sessions/" + sid)->body).at("cursor").at("index") == 1);
  CHECK(Json::parse(cli.Get("/api/studies/human16")->body).at("topics").size() == 8);

  for (std::size_t i = 1; i < kStudyQuestions; ++i) {
    cli.Get("/api/sessions/" + sid + "/next");
    REQUIRE(post("/api/sessions/" + sid + "/scores", {{"index", i}, {"phase", "pre"}, {"value", 0}})->status == 200);
    cli.Get("/api/sessions/" + sid + "/next");
    REQUIRE(post("/api/sessions/" + sid + "/scores", {{"index", i}, {"phase", "post"}, {"value", 1}})->status == 200);
  }
  res = cli.Get("/api/studies/human16/export");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "application/x-ndjson");
  CHECK(human_records_from_export(res->body).size() == 16);

  res = cli.Get("/index.html");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == "<html>ui</html>");
  server.stop();
}
