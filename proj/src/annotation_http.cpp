#include "stanceshift/annotation_http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "stanceshift/errors.hpp"

namespace stanceshift {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  send_json(res, status, Json{{"error", kind}, {"message", message}});
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const SequenceError& e) {
      send_error(res, 409, "out_of_sequence", e.what());
    } catch (const ImmutabilityError& e) {
      send_error(res, 409, "immutable", e.what());
    } catch (const ExportError& e) {
      send_error(res, 409, "nothing_to_export", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, "invalid", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "invalid", e.what());
    } catch (const LanguageUnavailableError& e) {
      send_error(res, 400, "invalid", e.what());
    } catch (const Json::exception& e) {
      send_error(res, 400, "invalid", e.what());
    } catch (const std::exception& e) {
      spdlog::error("annotation request {} {} failed: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal", e.what());
    }
  };
}

Json body_json(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    auto j = Json::parse(req.body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed JSON body: ") + e.what());
  }
}

std::size_t parse_index(const Json& j) {
  const auto& v = j.at("index");
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ValidationError("index must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service, std::filesystem::path static_dir)
    : service_(service), static_dir_(std::move(static_dir)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::install_routes() {
  auto& s = *server_;
  auto& svc = service_;

  s.Post("/api/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           const auto body = body_json(req);
           if (!body.contains("study_id") || !body.at("study_id").is_string()) throw ValidationError("study_id is required");
           const auto study_id = body.at("study_id").get<std::string>();
           const auto session = svc.create_session(study_id, body.value("alias", std::string()));
           send_json(res, 201, Json{{"session", to_json(session)}, {"next", svc.instructions_payload(study_id)}});
         }));

  s.Post(R"(/api/sessions/([0-9a-f]+)/acknowledge)",
         guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, to_json(svc.acknowledge_instructions(req.matches[1])));
         }));

  s.Get(R"(/api/sessions/([0-9a-f]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, to_json(svc.session(req.matches[1])));
        }));

  s.Get(R"(/api/sessions/([0-9a-f]+)/next)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, svc.next(req.matches[1]));
        }));

  s.Post(R"(/api/sessions/([0-9a-f]+)/scores)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           const auto body = body_json(req);
           if (!body.contains("index") || !body.contains("phase") || !body.contains("value")) {
             throw ValidationError("index, phase and value are required");
           }
           const auto phase = phase_from_string(body.at("phase").get<std::string>());
           send_json(res, 200, to_json(svc.submit_score(req.matches[1], parse_index(body), phase, body.at("value"))));
         }));

  s.Get(R"(/api/studies/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          const auto& st = svc.study(req.matches[1]);
          Json questions = Json::array();
          for (const auto& q : st.questions.questions) {
            questions.push_back({{"question_id", q.id}, {"topic", q.category}, {"question", q.texts.at(st.language)}});
          }
          send_json(res, 200,
                    Json{{"study_id", st.study_id},
                         {"language", st.language},
                         {"topics", st.questions.taxonomy},
                         {"questions", std::move(questions)}});
        }));

  s.Get(R"(/api/studies/([^/]+)/export)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
          res.status = 200;
          res.set_content(svc.export_study(req.matches[1]).to_jsonl(), "application/x-ndjson");
        }));

  if (!static_dir_.empty()) {
    if (!s.set_mount_point("/", static_dir_.string())) {
      spdlog::warn("static directory '{}' is not available; only the API is served", static_dir_.string());
    }
  }
}

int AnnotationServer::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool AnnotationServer::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }

bool AnnotationServer::listen_after_bind() { return server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void AnnotationServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace stanceshift
