#include "cfpo/llm_gateway.hpp"

#include "cfpo/util.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace cfpo {

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

BackendResponse response_from_json(const nlohmann::json& j) {
  BackendResponse r;
  r.text = j.at("text").get<std::string>();
  r.tokens_in = j.value("tokens_in", 0L);
  r.tokens_out = j.value("tokens_out", 0L);
  return r;
}

nlohmann::ordered_json response_to_json(const BackendResponse& r) {
  return {{"text", r.text}, {"tokens_in", r.tokens_in}, {"tokens_out", r.tokens_out}};
}

}  // namespace

void validate_params(const GenerationParams& params) {
  if (params.max_tokens < 1) fail(Errc::ConfigError, "max_tokens must be >= 1");
  if (params.temperature < 0.0) fail(Errc::ConfigError, "temperature must be >= 0");
  if (params.top_p <= 0.0 || params.top_p > 1.0) fail(Errc::ConfigError, "top_p must be in (0,1]");
}

GenerationParams optimizer_default_params() {
  GenerationParams p;
  p.temperature = 1.0;
  p.top_p = 1.0;
  p.max_tokens = 4096;
  p.seed = 42;
  return p;
}

GenerationParams evaluator_default_params() {
  GenerationParams p;
  p.temperature = 0.0;
  p.top_p = 0.1;
  p.max_tokens = 256;
  p.seed = 42;
  p.stop = "\n";
  p.repetition_penalty = 1.0;
  return p;
}

std::string request_hash(const BackendRequest& req) {
  std::uint64_t h = kFnvOffset;
  auto mix = [&h](std::string_view part) {
    h = fnv1a(part, h);
    h = fnv1a("\x1f", h);
  };
  mix(req.backend_id);
  for (const ChatMessage& m : req.messages) {
    mix(m.role);
    mix(m.content);
  }
  mix(format_double(req.params.temperature));
  mix(format_double(req.params.top_p));
  mix(std::to_string(req.params.max_tokens));
  mix(std::to_string(req.params.seed));
  mix(req.params.stop.has_value() ? "stop:" + *req.params.stop : "nostop");
  mix(format_double(req.params.repetition_penalty));
  return to_hex(h);
}

// --- ScriptedBackend ---

long ScriptedBackend::approx_tokens(const std::string& text) {
  long words = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return (words * 4 + 2) / 3;
}

BackendResponse ScriptedBackend::complete(const BackendRequest& req) {
  std::string prompt;
  for (const ChatMessage& m : req.messages) prompt += m.content;
  BackendResponse r;
  r.text = script_(req);
  r.tokens_in = approx_tokens(prompt);
  r.tokens_out = approx_tokens(r.text);
  return r;
}

// --- HttpBackend ---

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.backend_id.empty()) config_.backend_id = config_.model;
  if (config_.base_url.empty()) fail(Errc::ConfigError, "http backend needs a base_url");
}

BackendResponse HttpBackend::complete(const BackendRequest& req) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["temperature"] = req.params.temperature;
  body["top_p"] = req.params.top_p;
  body["max_tokens"] = req.params.max_tokens;
  body["seed"] = req.params.seed;
  if (req.params.stop.has_value()) body["stop"] = *req.params.stop;
  auto& messages = body["messages"];
  messages = nlohmann::json::array();
  for (const ChatMessage& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.auth_env.empty()) {
    const char* token = std::getenv(config_.auth_env.c_str());
    if (token == nullptr) fail(Errc::Fatal, "auth env var not set: " + config_.auth_env);
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  auto t0 = std::chrono::steady_clock::now();
  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  auto t1 = std::chrono::steady_clock::now();

  if (!res) fail(Errc::Timeout, "no response from " + config_.base_url);
  if (res->status == 429) fail(Errc::RateLimited, "429 from " + config_.base_url);
  if (res->status >= 500) fail(Errc::BackendError, "server error " + std::to_string(res->status));
  if (res->status >= 400) fail(Errc::Fatal, "request rejected: " + std::to_string(res->status) + " " + res->body);

  BackendResponse out;
  try {
    nlohmann::json j = nlohmann::json::parse(res->body);
    out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
      out.tokens_in = j["usage"].value("prompt_tokens", 0L);
      out.tokens_out = j["usage"].value("completion_tokens", 0L);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::BackendError, std::string("malformed completion response: ") + e.what());
  }
  out.latency_ms =
      std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count();
  return out;
}

// --- ReplayBackend ---

ReplayBackend::ReplayBackend(std::string id, std::string fixture_path) : id_(std::move(id)) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(fixture_path));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, "fixture " + fixture_path + ": " + e.what());
  }
  for (auto& [key, value] : j.at("entries").items()) entries_[key] = response_from_json(value);
}

BackendResponse ReplayBackend::complete(const BackendRequest& req) {
  auto it = entries_.find(request_hash(req));
  if (it == entries_.end())
    fail(Errc::MissingFixture, "no recorded response for request " + request_hash(req));
  return it->second;
}

// --- RecordingBackend ---

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::string fixture_path)
    : inner_(std::move(inner)), fixture_path_(std::move(fixture_path)) {
  if (std::filesystem::exists(fixture_path_)) {
    entries_ = nlohmann::ordered_json::parse(read_file(fixture_path_)).at("entries");
  } else {
    entries_ = nlohmann::ordered_json::object();
  }
}

BackendResponse RecordingBackend::complete(const BackendRequest& req) {
  const std::string key = request_hash(req);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (entries_.contains(key)) return response_from_json(entries_.at(key));
  }
  BackendResponse res = inner_->complete(req);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_[key] = response_to_json(res);
    persist();
  }
  return res;
}

void RecordingBackend::persist() const {
  // Several recorders (optimizer and target) may share one fixture file;
  // merge with what is already on disk so neither clobbers the other.
  nlohmann::ordered_json merged = nlohmann::ordered_json::object();
  if (std::filesystem::exists(fixture_path_)) {
    try {
      merged = nlohmann::ordered_json::parse(read_file(fixture_path_)).at("entries");
    } catch (const std::exception&) {
      merged = nlohmann::ordered_json::object();
    }
  }
  for (const auto& [key, value] : entries_.items()) merged[key] = value;
  nlohmann::ordered_json j;
  j["entries"] = merged;
  write_file(fixture_path_, j.dump(2) + "\n");
}

std::shared_ptr<Backend> record_session(std::shared_ptr<Backend> live, const std::string& fixture_path) {
  return std::make_shared<RecordingBackend>(std::move(live), fixture_path);
}

// --- UsageLedger ---

UsageLedger::UsageLedger(const UsageLedger& other) {
  std::lock_guard<std::mutex> lock(other.mutex_);
  current_round_ = other.current_round_;
  ops_ = other.ops_;
  rounds_ = other.rounds_;
}

UsageLedger& UsageLedger::operator=(const UsageLedger& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  current_round_ = other.current_round_;
  ops_ = other.ops_;
  rounds_ = other.rounds_;
  return *this;
}

void UsageLedger::set_round(int round) {
  std::lock_guard<std::mutex> lock(mutex_);
  current_round_ = round;
}

void UsageLedger::add(const std::string& label, long tokens_in, long tokens_out) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto bump = [&](Bucket& b) {
    b.calls += 1;
    b.tokens_in += tokens_in;
    b.tokens_out += tokens_out;
  };
  bump(ops_[label]);
  bump(rounds_[current_round_][label]);
}

std::map<std::string, UsageLedger::Bucket> UsageLedger::per_operation() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return ops_;
}

std::map<int, std::map<std::string, UsageLedger::Bucket>> UsageLedger::per_round() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return rounds_;
}

UsageLedger::Bucket UsageLedger::totals() const {
  std::lock_guard<std::mutex> lock(mutex_);
  Bucket total;
  for (const auto& [_, b] : ops_) {
    total.calls += b.calls;
    total.tokens_in += b.tokens_in;
    total.tokens_out += b.tokens_out;
  }
  return total;
}

nlohmann::ordered_json UsageLedger::to_json() const {
  std::lock_guard<std::mutex> lock(mutex_);
  nlohmann::ordered_json j;
  j["current_round"] = current_round_;
  auto bucket_json = [](const Bucket& b) {
    return nlohmann::ordered_json{
        {"calls", b.calls}, {"tokens_in", b.tokens_in}, {"tokens_out", b.tokens_out}};
  };
  auto& ops = j["operations"];
  ops = nlohmann::ordered_json::object();
  for (const auto& [label, b] : ops_) ops[label] = bucket_json(b);
  auto& rounds = j["rounds"];
  rounds = nlohmann::ordered_json::object();
  for (const auto& [round, labels] : rounds_) {
    auto& rj = rounds[std::to_string(round)];
    rj = nlohmann::ordered_json::object();
    for (const auto& [label, b] : labels) rj[label] = bucket_json(b);
  }
  return j;
}

UsageLedger UsageLedger::from_json(const nlohmann::json& j) {
  UsageLedger ledger;
  ledger.current_round_ = j.value("current_round", 0);
  auto parse_bucket = [](const nlohmann::json& b) {
    Bucket out;
    out.calls = b.value("calls", 0L);
    out.tokens_in = b.value("tokens_in", 0L);
    out.tokens_out = b.value("tokens_out", 0L);
    return out;
  };
  if (j.contains("operations"))
    for (auto& [label, b] : j["operations"].items()) ledger.ops_[label] = parse_bucket(b);
  if (j.contains("rounds"))
    for (auto& [round, labels] : j["rounds"].items())
      for (auto& [label, b] : labels.items())
        ledger.rounds_[std::stoi(round)][label] = parse_bucket(b);
  return ledger;
}

nlohmann::ordered_json usage_report(const UsageLedger& ledger, double usd_per_1k_in,
                                    double usd_per_1k_out) {
  nlohmann::ordered_json j;
  auto& ops = j["operations"];
  ops = nlohmann::ordered_json::object();
  for (const auto& [label, b] : ledger.per_operation()) {
    ops[label] = {{"calls", b.calls}, {"tokens_in", b.tokens_in}, {"tokens_out", b.tokens_out}};
  }
  auto total = ledger.totals();
  j["total"] = {{"calls", total.calls}, {"tokens_in", total.tokens_in}, {"tokens_out", total.tokens_out}};
  if (usd_per_1k_in > 0.0 || usd_per_1k_out > 0.0) {
    j["estimated_cost_usd"] = total.tokens_in / 1000.0 * usd_per_1k_in +
                              total.tokens_out / 1000.0 * usd_per_1k_out;
  }
  return j;
}

std::string format_usage_table(const UsageLedger& ledger) {
  std::ostringstream out;
  out << "Operation              Calls    Tokens in   Tokens out\n";
  for (const auto& [label, b] : ledger.per_operation()) {
    out << label;
    for (std::size_t i = label.size(); i < 22; ++i) out << ' ';
    out << ' ' << b.calls << "\t" << b.tokens_in << "\t" << b.tokens_out << "\n";
  }
  auto total = ledger.totals();
  out << "Total                  " << total.calls << "\t" << total.tokens_in << "\t"
      << total.tokens_out << "\n";
  return out.str();
}

// --- Gateway ---

Gateway::Gateway(std::shared_ptr<Backend> backend, UsageLedger* ledger, RetryPolicy retry)
    : backend_(std::move(backend)), ledger_(ledger), retry_(std::move(retry)) {
  if (!retry_.sleep_ms) {
    retry_.sleep_ms = [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
  }
}

BackendResponse Gateway::complete(const std::string& op_label, std::vector<ChatMessage> messages,
                                  const GenerationParams& params) {
  validate_params(params);
  BackendRequest req{std::move(messages), params, backend_->id()};

  int attempt = 0;
  int delay = retry_.base_delay_ms;
  for (;;) {
    try {
      BackendResponse res = backend_->complete(req);
      if (ledger_ != nullptr) ledger_->add(op_label, res.tokens_in, res.tokens_out);
      return res;
    } catch (const Error& e) {
      const bool transient = e.code() == Errc::Timeout || e.code() == Errc::RateLimited ||
                             e.code() == Errc::BackendError;
      if (!transient || attempt >= retry_.max_retries) throw;
      retry_.sleep_ms(delay);
      delay = std::min(delay * 2, retry_.max_delay_ms);
      ++attempt;
    }
  }
}

}  // namespace cfpo
