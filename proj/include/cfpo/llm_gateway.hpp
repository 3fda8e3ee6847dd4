#pragma once

/**
 * Unified access to the optimizer and target models.
 *
 * A Backend turns a chat request into text. Concrete backends:
 *  - HttpBackend: OpenAI-compatible chat-completions endpoint;
 *  - ScriptedBackend: in-process function, for tests and demos;
 *  - ReplayBackend: serves recorded responses keyed by request hash and
 *    never touches the network (MissingFixture on unknown requests);
 *  - RecordingBackend: wraps a live backend and persists every exchange.
 *
 * The Gateway layers retry with exponential backoff on transient failures
 * and books every response into a UsageLedger under the caller's
 * operation label.
 */

#include "cfpo/errors.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cfpo {

struct GenerationParams {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 256;
  long seed = 42;
  std::optional<std::string> stop;
  double repetition_penalty = 1.0;
};

void validate_params(const GenerationParams& params);

/// Optimizer defaults: top_p=1.0, max_tokens=4096, temperature=1.0, seed=42.
GenerationParams optimizer_default_params();
/// Evaluator defaults: top_p=0.1, max_tokens=256, temperature=0.0, stop="\n".
GenerationParams evaluator_default_params();

struct ChatMessage {
  std::string role;
  std::string content;
};

struct BackendRequest {
  std::vector<ChatMessage> messages;
  GenerationParams params;
  std::string backend_id;
};

struct BackendResponse {
  std::string text;
  long tokens_in = 0;
  long tokens_out = 0;
  double latency_ms = 0.0;
};

/// Stable key over (normalized messages, params, backend id); drives the
/// replay fixture lookup.
std::string request_hash(const BackendRequest& req);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendResponse complete(const BackendRequest& req) = 0;
  virtual std::string id() const = 0;
};

class ScriptedBackend : public Backend {
 public:
  using Script = std::function<std::string(const BackendRequest&)>;

  ScriptedBackend(std::string id, Script script) : id_(std::move(id)), script_(std::move(script)) {}

  BackendResponse complete(const BackendRequest& req) override;
  std::string id() const override { return id_; }

  /// Word-count based token approximation used when no provider metadata
  /// exists (flagged as approximate in the ledger semantics).
  static long approx_tokens(const std::string& text);

 private:
  std::string id_;
  Script script_;
};

struct HttpBackendConfig {
  std::string base_url;       // e.g. http://host:port
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string auth_env;       // environment variable holding the bearer token
  int timeout_seconds = 120;
  std::string backend_id;     // defaults to model when empty
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  BackendResponse complete(const BackendRequest& req) override;
  std::string id() const override { return config_.backend_id; }

 private:
  HttpBackendConfig config_;
};

class ReplayBackend : public Backend {
 public:
  ReplayBackend(std::string id, std::string fixture_path);

  BackendResponse complete(const BackendRequest& req) override;
  std::string id() const override { return id_; }

  std::size_t size() const { return entries_.size(); }

 private:
  std::string id_;
  std::map<std::string, BackendResponse> entries_;
};

class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::string fixture_path);

  BackendResponse complete(const BackendRequest& req) override;
  std::string id() const override { return inner_->id(); }

 private:
  void persist() const;

  std::shared_ptr<Backend> inner_;
  std::string fixture_path_;
  nlohmann::ordered_json entries_;
  std::mutex mutex_;
};

/// Returns a recording wrapper around a live backend; the resulting fixture
/// file drives a ReplayBackend bit-exactly.
std::shared_ptr<Backend> record_session(std::shared_ptr<Backend> live, const std::string& fixture_path);

// Operation labels used for cost accounting.
namespace oplabel {
inline constexpr const char* kCaseDiagnose = "Case-diagnose";
inline constexpr const char* kApplyFeedback = "Apply Feedback";
inline constexpr const char* kGenVariation = "Gen Variation";
inline constexpr const char* kGenFormat = "Gen Format";
inline constexpr const char* kGenFormatFields = "Gen Format Code";
inline constexpr const char* kEvaluate = "Evaluate";
}  // namespace oplabel

class UsageLedger {
 public:
  UsageLedger() = default;
  UsageLedger(const UsageLedger& other);
  UsageLedger& operator=(const UsageLedger& other);

  struct Bucket {
    long calls = 0;
    long tokens_in = 0;
    long tokens_out = 0;
  };

  void set_round(int round);
  void add(const std::string& label, long tokens_in, long tokens_out);

  std::map<std::string, Bucket> per_operation() const;
  std::map<int, std::map<std::string, Bucket>> per_round() const;
  Bucket totals() const;

  nlohmann::ordered_json to_json() const;
  static UsageLedger from_json(const nlohmann::json& j);

 private:
  mutable std::mutex mutex_;
  int current_round_ = 0;
  std::map<std::string, Bucket> ops_;
  std::map<int, std::map<std::string, Bucket>> rounds_;
};

/// Per-operation and total tokens/calls; optional cost estimate from unit
/// prices per 1k tokens.
nlohmann::ordered_json usage_report(const UsageLedger& ledger, double usd_per_1k_in = 0.0,
                                    double usd_per_1k_out = 0.0);
std::string format_usage_table(const UsageLedger& ledger);

struct RetryPolicy {
  int max_retries = 3;
  int base_delay_ms = 250;
  int max_delay_ms = 4000;
  /// Injectable for tests; defaults to a real sleep.
  std::function<void(int)> sleep_ms;
};

/// A backend plus retry and accounting. Shared by every caller that talks
/// to one model.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, UsageLedger* ledger, RetryPolicy retry = {});

  BackendResponse complete(const std::string& op_label, std::vector<ChatMessage> messages,
                           const GenerationParams& params);

  std::string backend_id() const { return backend_->id(); }
  Backend& backend() { return *backend_; }

 private:
  std::shared_ptr<Backend> backend_;
  UsageLedger* ledger_;
  RetryPolicy retry_;
};

}  // namespace cfpo
