#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "stanceshift/util.hpp"

namespace stanceshift {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct Message {
  Role role;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct ChatThread {
  std::vector<Message> messages;

  ChatThread& system(std::string content);
  ChatThread& user(std::string content);
  ChatThread& assistant(std::string content);

  /// Throws ValidationError: roles valid, contents nonempty, at most one leading system message.
  void validate() const;
  bool has_assistant_message() const;
  /// "role: content" lines; what mock matchers run against.
  std::string concatenated() const;

  friend bool operator==(const ChatThread&, const ChatThread&) = default;
};

Json to_json(const ChatThread& thread);
ChatThread chat_thread_from_json(const Json& j);

enum class MatchKind { substring, regex, exact };

std::string_view to_string(MatchKind k);
MatchKind match_kind_from_string(std::string_view s);

/// `replies` are served in order on successive matches and wrap around.
struct MockRule {
  MatchKind kind = MatchKind::substring;
  std::string pattern;
  std::vector<std::string> replies;
};

/// Deterministic scripted backend. First matching rule wins; otherwise the
/// default reply. Every call is appended to the call log.
class MockScript {
 public:
  MockScript(std::vector<MockRule> rules, std::string default_reply);

  static std::shared_ptr<MockScript> from_json(const Json& j);
  Json to_json() const;

  std::string respond(const ChatThread& thread);

  std::vector<ChatThread> call_log() const;
  std::size_t call_count() const;
  const std::vector<MockRule>& rules() const noexcept { return rules_; }
  const std::string& default_reply() const noexcept { return default_reply_; }

 private:
  bool matches(std::size_t rule, const std::string& text) const;

  std::vector<MockRule> rules_;
  std::vector<std::optional<std::regex>> compiled_;
  std::string default_reply_;
  mutable std::mutex mu_;
  std::vector<std::size_t> served_;
  std::vector<ChatThread> log_;
};

enum class BackendKind { live, mock };

struct RateLimit {
  int max_in_flight = 4;
  std::chrono::milliseconds min_interval{0};
};

struct BackendConfig {
  std::string backend_id;
  BackendKind kind = BackendKind::mock;
  std::string endpoint_url;
  std::string model_name;
  /// Omitted from requests when unset so the provider default applies.
  std::optional<double> temperature;
  int max_output_tokens = 1024;
  std::chrono::milliseconds request_timeout{60'000};
  int max_retries = 3;
  RateLimit rate_limit;
  std::string auth_env_var;
  std::shared_ptr<MockScript> mock;

  void validate() const;
};

/// Parses a backend entry of the run config. `base_dir` resolves `mock_script_file`.
BackendConfig backend_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
Json to_json(const BackendConfig& cfg);

BackendConfig make_mock(std::shared_ptr<MockScript> script, std::string backend_id = "mock");

struct Reply {
  std::string content;
  std::string backend_id;
  double latency_ms = 0;
  int attempt_count = 0;
};

/// One attempt's raw outcome. `status` is the HTTP status, or 0 when the
/// request never produced one.
struct TransportResult {
  int status = 0;
  std::string content;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResult send(const BackendConfig& cfg, const ChatThread& thread, const std::string& credential) = 0;
};

/// POST {endpoint_url}/chat/completions with a bearer credential.
class HttpTransport : public Transport {
 public:
  TransportResult send(const BackendConfig& cfg, const ChatThread& thread, const std::string& credential) override;
};

/// Request body sent by HttpTransport.
Json chat_request_body(const BackendConfig& cfg, const ChatThread& thread);

/// Caps in-flight requests and spaces request starts by a minimum interval.
class AdmissionGate {
 public:
  AdmissionGate(int max_in_flight, std::chrono::milliseconds min_interval);

  class Ticket {
   public:
    explicit Ticket(AdmissionGate* gate) : gate_(gate) {}
    Ticket(Ticket&& other) noexcept : gate_(std::exchange(other.gate_, nullptr)) {}
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;
    Ticket& operator=(Ticket&&) = delete;
    ~Ticket() {
      if (gate_) gate_->release();
    }

   private:
    AdmissionGate* gate_;
  };

  Ticket acquire();
  int in_flight() const;

 private:
  void release();

  const int max_in_flight_;
  const std::chrono::milliseconds min_interval_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  std::chrono::steady_clock::time_point next_start_{};
};

/// Appends one JSON line per exchange; safe for concurrent writers.
class CaptureSink {
 public:
  explicit CaptureSink(const std::filesystem::path& path);
  void record(const std::string& backend_id, const ChatThread& thread, const Reply& reply);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct GatewayOptions {
  std::chrono::milliseconds backoff_base{1000};
  double backoff_factor = 2.0;
  std::uint64_t jitter_seed = 0x5eed;
  /// Replaces std::this_thread::sleep_for, mainly for tests.
  std::function<void(std::chrono::milliseconds)> sleep;
  std::shared_ptr<CaptureSink> capture;
};

/// Routes completions to the mock script or the live transport, with retries
/// (exponential backoff, full jitter) and a per-backend admission gate.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {}, std::shared_ptr<Transport> transport = nullptr);

  Reply complete(const BackendConfig& cfg, const ChatThread& thread);

  /// Delay before retry number `retry` (0-based), drawn uniformly from [0, base * factor^retry].
  std::chrono::milliseconds backoff_delay(int retry);

 private:
  AdmissionGate& gate_for(const BackendConfig& cfg);

  GatewayOptions options_;
  std::shared_ptr<Transport> transport_;
  std::mutex gates_mu_;
  std::map<std::string, std::unique_ptr<AdmissionGate>> gates_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

/// Completes through a process-wide default gateway.
Reply complete(const BackendConfig& cfg, const ChatThread& thread);

}  // namespace stanceshift
