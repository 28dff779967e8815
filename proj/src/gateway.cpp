#include "stanceshift/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "stanceshift/errors.hpp"

namespace stanceshift {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw ValidationError(fmt::format("unknown chat role '{}'", s));
}

ChatThread& ChatThread::system(std::string content) {
  messages.push_back({Role::system, std::move(content)});
  return *this;
}

ChatThread& ChatThread::user(std::string content) {
  messages.push_back({Role::user, std::move(content)});
  return *this;
}

ChatThread& ChatThread::assistant(std::string content) {
  messages.push_back({Role::assistant, std::move(content)});
  return *this;
}

void ChatThread::validate() const {
  if (messages.empty()) throw ValidationError("chat thread is empty");
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    if (trim(m.content).empty()) throw ValidationError(fmt::format("message {} has empty content", i));
    if (m.role == Role::system && i != 0) throw ValidationError("system message must be first and unique");
  }
}

bool ChatThread::has_assistant_message() const {
  for (const auto& m : messages)
    if (m.role == Role::assistant) return true;
  return false;
}

std::string ChatThread::concatenated() const {
  std::string out;
  for (const auto& m : messages) {
    out += to_string(m.role);
    out += ": ";
    out += m.content;
    out += '\n';
  }
  return out;
}

Json to_json(const ChatThread& thread) {
  Json arr = Json::array();
  for (const auto& m : thread.messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

ChatThread chat_thread_from_json(const Json& j) {
  ChatThread t;
  for (const auto& m : j) t.messages.push_back({role_from_string(m.at("role").get<std::string>()), m.at("content")});
  return t;
}

// ---------------------------------------------------------------------------

MockScript::MockScript(std::vector<MockRule> rules, std::string default_reply)
    : rules_(std::move(rules)), default_reply_(std::move(default_reply)), served_(rules_.size(), 0) {
  compiled_.reserve(rules_.size());
  for (const auto& r : rules_) {
    if (r.replies.empty()) throw ValidationError(fmt::format("mock rule '{}' has no replies", r.pattern));
    if (r.kind == MatchKind::regex) {
      try {
        compiled_.emplace_back(std::regex(r.pattern, std::regex::ECMAScript));
      } catch (const std::regex_error& e) {
        throw ValidationError(fmt::format("mock rule pattern '{}' is not a valid regex: {}", r.pattern, e.what()));
      }
    } else {
      compiled_.emplace_back(std::nullopt);
    }
  }
}

MatchKind match_kind_from_string(std::string_view s) {
  if (s == "substring") return MatchKind::substring;
  if (s == "regex") return MatchKind::regex;
  if (s == "exact") return MatchKind::exact;
  throw ParseError(fmt::format("unknown mock matcher kind '{}'", s));
}

std::string_view to_string(MatchKind k) {
  switch (k) {
    case MatchKind::substring:
      return "substring";
    case MatchKind::regex:
      return "regex";
    case MatchKind::exact:
      return "exact";
  }
  return "substring";
}

std::shared_ptr<MockScript> MockScript::from_json(const Json& j) {
  std::vector<MockRule> rules;
  try {
    for (const auto& r : j.value("rules", Json::array())) {
      MockRule rule;
      rule.kind = match_kind_from_string(r.value("kind", std::string("substring")));
      rule.pattern = r.at("match").get<std::string>();
      if (r.contains("replies")) {
        rule.replies = r.at("replies").get<std::vector<std::string>>();
      } else {
        rule.replies = {r.at("reply").get<std::string>()};
      }
      rules.push_back(std::move(rule));
    }
    return std::make_shared<MockScript>(std::move(rules), j.value("default_reply", std::string("0")));
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("malformed mock script: {}", e.what()));
  }
}

Json MockScript::to_json() const {
  Json rules = Json::array();
  for (const auto& r : rules_) {
    Json item{{"kind", stanceshift::to_string(r.kind)}, {"match", r.pattern}};
    if (r.replies.size() == 1) {
      item["reply"] = r.replies.front();
    } else {
      item["replies"] = r.replies;
    }
    rules.push_back(std::move(item));
  }
  return Json{{"rules", std::move(rules)}, {"default_reply", default_reply_}};
}

bool MockScript::matches(std::size_t rule, const std::string& text) const {
  const auto& r = rules_[rule];
  switch (r.kind) {
    case MatchKind::substring:
      return text.find(r.pattern) != std::string::npos;
    case MatchKind::exact:
      return text == r.pattern;
    case MatchKind::regex:
      return std::regex_search(text, *compiled_[rule]);
  }
  return false;
}

std::string MockScript::respond(const ChatThread& thread) {
  const std::string text = thread.concatenated();
  std::lock_guard lock(mu_);
  log_.push_back(thread);
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (matches(i, text)) {
      const auto& replies = rules_[i].replies;
      return replies[served_[i]++ % replies.size()];
    }
  }
  return default_reply_;
}

std::vector<ChatThread> MockScript::call_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t MockScript::call_count() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

// ---------------------------------------------------------------------------

void BackendConfig::validate() const {
  if (trim(backend_id).empty()) throw ConfigurationError("backend_id is empty");
  if (kind == BackendKind::live) {
    if (trim(endpoint_url).empty()) throw ConfigurationError(fmt::format("backend '{}': endpoint_url is empty", backend_id));
    if (trim(auth_env_var).empty()) throw ConfigurationError(fmt::format("backend '{}': auth_env_var is empty", backend_id));
  } else if (!mock) {
    throw ConfigurationError(fmt::format("backend '{}': mock backend without a script", backend_id));
  }
  if (temperature && !(*temperature >= 0.0)) throw ConfigurationError(fmt::format("backend '{}': temperature must be >= 0", backend_id));
  if (max_retries < 0 || max_retries > 10) throw ConfigurationError(fmt::format("backend '{}': max_retries must be in [0, 10]", backend_id));
  if (max_output_tokens <= 0) throw ConfigurationError(fmt::format("backend '{}': max_output_tokens must be positive", backend_id));
  if (rate_limit.max_in_flight <= 0) throw ConfigurationError(fmt::format("backend '{}': rate_limit.max_in_flight must be positive", backend_id));
  if (rate_limit.min_interval.count() < 0) throw ConfigurationError(fmt::format("backend '{}': rate_limit.min_interval_ms must be >= 0", backend_id));
  if (request_timeout.count() <= 0) throw ConfigurationError(fmt::format("backend '{}': request_timeout must be positive", backend_id));
}

BackendConfig backend_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  BackendConfig cfg;
  try {
    cfg.backend_id = j.at("backend_id").get<std::string>();
    const auto kind = j.value("kind", std::string("mock"));
    if (kind == "live") {
      cfg.kind = BackendKind::live;
    } else if (kind == "mock") {
      cfg.kind = BackendKind::mock;
    } else {
      throw ParseError(fmt::format("backend '{}': unknown kind '{}'", cfg.backend_id, kind));
    }
    cfg.endpoint_url = j.value("endpoint_url", std::string());
    cfg.model_name = j.value("model_name", cfg.backend_id);
    if (j.contains("temperature") && !j.at("temperature").is_null()) cfg.temperature = j.at("temperature").get<double>();
    cfg.max_output_tokens = j.value("max_output_tokens", cfg.max_output_tokens);
    cfg.request_timeout = std::chrono::milliseconds(
        static_cast<long long>(j.value("request_timeout_s", 60.0) * 1000.0));
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    if (j.contains("rate_limit")) {
      const auto& rl = j.at("rate_limit");
      cfg.rate_limit.max_in_flight = rl.value("max_in_flight", cfg.rate_limit.max_in_flight);
      cfg.rate_limit.min_interval = std::chrono::milliseconds(rl.value("min_interval_ms", 0));
    }
    cfg.auth_env_var = j.value("auth_env_var", std::string());
    if (j.contains("mock_script")) {
      cfg.mock = MockScript::from_json(j.at("mock_script"));
    } else if (j.contains("mock_script_file")) {
      auto p = std::filesystem::path(j.at("mock_script_file").get<std::string>());
      if (p.is_relative()) p = base_dir / p;
      cfg.mock = MockScript::from_json(read_json_file(p));
    }
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("malformed backend entry: {}", e.what()));
  }
  cfg.validate();
  return cfg;
}

Json to_json(const BackendConfig& cfg) {
  Json j{{"backend_id", cfg.backend_id},
         {"kind", cfg.kind == BackendKind::live ? "live" : "mock"},
         {"model_name", cfg.model_name},
         {"max_output_tokens", cfg.max_output_tokens},
         {"request_timeout_s", static_cast<double>(cfg.request_timeout.count()) / 1000.0},
         {"max_retries", cfg.max_retries},
         {"rate_limit",
          {{"max_in_flight", cfg.rate_limit.max_in_flight}, {"min_interval_ms", cfg.rate_limit.min_interval.count()}}}};
  if (cfg.temperature) j["temperature"] = *cfg.temperature;
  if (cfg.kind == BackendKind::live) {
    j["endpoint_url"] = cfg.endpoint_url;
    j["auth_env_var"] = cfg.auth_env_var;
  } else if (cfg.mock) {
    j["mock_script"] = cfg.mock->to_json();
  }
  return j;
}

BackendConfig make_mock(std::shared_ptr<MockScript> script, std::string backend_id) {
  BackendConfig cfg;
  cfg.backend_id = std::move(backend_id);
  cfg.kind = BackendKind::mock;
  cfg.model_name = cfg.backend_id;
  cfg.mock = std::move(script);
  return cfg;
}

// ---------------------------------------------------------------------------

Json chat_request_body(const BackendConfig& cfg, const ChatThread& thread) {
  Json body{{"model", cfg.model_name}, {"messages", to_json(thread)}, {"max_tokens", cfg.max_output_tokens}};
  if (cfg.temperature) body["temperature"] = *cfg.temperature;
  return body;
}

TransportResult HttpTransport::send(const BackendConfig& cfg, const ChatThread& thread, const std::string& credential) {
  // Split "scheme://host[:port]/base" into the client origin and the path prefix.
  std::string url = cfg.endpoint_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string base = path_start == std::string::npos ? "" : url.substr(path_start);

  httplib::Client client(origin);
  const auto timeout = cfg.request_timeout;
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                static_cast<long>((timeout.count() % 1000) * 1000));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                          static_cast<long>((timeout.count() % 1000) * 1000));
  client.set_bearer_token_auth(credential);

  auto res = client.Post(base + "/chat/completions", chat_request_body(cfg, thread).dump(), "application/json");
  if (!res) return {0, {}, httplib::to_string(res.error())};
  if (res->status != 200) return {res->status, {}, res->body.substr(0, 512)};
  try {
    const auto body = Json::parse(res->body);
    const auto& content = body.at("choices").at(0).at("message").at("content");
    return {200, content.is_string() ? content.get<std::string>() : std::string(), {}};
  } catch (const Json::exception& e) {
    return {res->status, {}, fmt::format("malformed completion body: {}", e.what())};
  }
}

// ---------------------------------------------------------------------------

AdmissionGate::AdmissionGate(int max_in_flight, std::chrono::milliseconds min_interval)
    : max_in_flight_(max_in_flight), min_interval_(min_interval) {}

AdmissionGate::Ticket AdmissionGate::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    if (in_flight_ < max_in_flight_) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= next_start_) {
        ++in_flight_;
        next_start_ = now + min_interval_;
        return Ticket(this);
      }
      cv_.wait_until(lock, next_start_);
    } else {
      cv_.wait(lock);
    }
  }
}

void AdmissionGate::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_all();
}

int AdmissionGate::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

CaptureSink::CaptureSink(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::app) {
  if (!out_) throw Error("cannot open capture file '" + path.string() + "'");
}

void CaptureSink::record(const std::string& backend_id, const ChatThread& thread, const Reply& reply) {
  const Json line{{"timestamp", now_iso()}, {"backend_id", backend_id}, {"thread", to_json(thread)},
                  {"reply", reply.content},  {"latency_ms", reply.latency_ms}, {"attempts", reply.attempt_count}};
  std::lock_guard lock(mu_);
  out_ << line.dump() << '\n';
  out_.flush();
}

// ---------------------------------------------------------------------------

namespace {

bool is_transient(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

Gateway::Gateway(GatewayOptions options, std::shared_ptr<Transport> transport)
    : options_(std::move(options)),
      transport_(transport ? std::move(transport) : std::make_shared<HttpTransport>()),
      rng_(options_.jitter_seed) {
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::chrono::milliseconds Gateway::backoff_delay(int retry) {
  const double cap = static_cast<double>(options_.backoff_base.count()) * std::pow(options_.backoff_factor, retry);
  std::lock_guard lock(rng_mu_);
  std::uniform_real_distribution<double> dist(0.0, cap);
  return std::chrono::milliseconds(static_cast<long long>(dist(rng_)));
}

AdmissionGate& Gateway::gate_for(const BackendConfig& cfg) {
  std::lock_guard lock(gates_mu_);
  auto& slot = gates_[cfg.backend_id];
  if (!slot) slot = std::make_unique<AdmissionGate>(cfg.rate_limit.max_in_flight, cfg.rate_limit.min_interval);
  return *slot;
}

Reply Gateway::complete(const BackendConfig& cfg, const ChatThread& thread) {
  cfg.validate();
  thread.validate();
  std::string credential;
  if (cfg.kind == BackendKind::live) {
    const char* value = std::getenv(cfg.auth_env_var.c_str());
    if (!value || !*value) {
      throw ConfigurationError(
          fmt::format("backend '{}': credential variable '{}' is not set", cfg.backend_id, cfg.auth_env_var));
    }
    credential = value;
  }

  auto& gate = gate_for(cfg);
  const auto started = std::chrono::steady_clock::now();
  int last_status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= cfg.max_retries + 1; ++attempt) {
    if (attempt > 1 && cfg.kind == BackendKind::live) options_.sleep(backoff_delay(attempt - 2));
    TransportResult result;
    {
      auto ticket = gate.acquire();
      if (cfg.kind == BackendKind::mock) {
        result = {200, cfg.mock->respond(thread), {}};
      } else {
        result = transport_->send(cfg, thread, credential);
      }
    }
    last_status = result.status;
    if (result.status == 200) {
      if (!trim(result.content).empty()) {
        Reply reply;
        reply.content = std::move(result.content);
        reply.backend_id = cfg.backend_id;
        reply.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        reply.attempt_count = attempt;
        if (options_.capture) options_.capture->record(cfg.backend_id, thread, reply);
        return reply;
      }
      last_error = "empty reply";
      continue;
    }
    last_error = result.error;
    if (!is_transient(result.status)) break;
  }
  if (last_status == 200) {
    throw EmptyReplyError(fmt::format("backend '{}' returned only empty replies", cfg.backend_id));
  }
  throw BackendUnavailableError(
      fmt::format("backend '{}' unavailable (status {}): {}", cfg.backend_id, last_status, last_error), last_status);
}

Reply complete(const BackendConfig& cfg, const ChatThread& thread) {
  static Gateway gateway;
  return gateway.complete(cfg, thread);
}

}  // namespace stanceshift
