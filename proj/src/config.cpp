#include "cfpo/config.hpp"

#include "cfpo/errors.hpp"
#include "cfpo/util.hpp"

#include <json.hpp>

namespace cfpo {

using nlohmann::json;

const char* run_mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::Live: return "live";
    case RunMode::Record: return "record";
    case RunMode::Replay: return "replay";
  }
  fail(Errc::ConfigError, "unknown run mode");
}

std::optional<RunMode> parse_run_mode(const std::string& name) {
  if (name == "live") return RunMode::Live;
  if (name == "record") return RunMode::Record;
  if (name == "replay") return RunMode::Replay;
  return std::nullopt;
}

namespace {

HttpBackendConfig parse_http_backend(const json& j, const std::string& section) {
  HttpBackendConfig cfg;
  cfg.base_url = j.value("base_url", "");
  cfg.path = j.value("path", cfg.path);
  cfg.model = j.value("model", "");
  cfg.auth_env = j.value("auth_env", "");
  cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
  cfg.backend_id = j.value("id", cfg.model);
  if (cfg.backend_id.empty())
    fail(Errc::ConfigError, section + ": either `id` or `model` is required");
  return cfg;
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& section) {
  if (!j.contains(key)) fail(Errc::ConfigError, section + ": missing required key `" + key + "`");
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    fail(Errc::ConfigError, section + ": key `" + key + "` has the wrong type");
  }
}

}  // namespace

RunManifest load_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }

  RunManifest m;
  m.config_path = path;

  const json& task = j.contains("task") ? j.at("task") : json::object();
  m.task_name = task.value("name", "task");
  const std::string kind_name = task.value("kind", "reasoning");
  auto kind = parse_task_kind(kind_name);
  if (!kind) fail(Errc::ConfigError, "task.kind: unknown kind `" + kind_name + "`");
  m.search.task.kind = *kind;
  m.search.task.dataset_path = require<std::string>(task, "dataset", "task");
  m.search.task.heldout_path = task.value("heldout", "");
  m.search.task.task_intention = task.value("intention", "solve the given task");
  m.search.task.eval_subset_size = task.value("eval_subset_size", 40);

  if (j.contains("search")) {
    const json& s = j.at("search");
    m.search.beam_width = s.value("beam_width", m.search.beam_width);
    m.search.k_formats = s.value("k_formats", m.search.k_formats);
    m.search.max_rounds = s.value("max_rounds", m.search.max_rounds);
    m.search.patience = s.value("patience", m.search.patience);
    m.search.alpha = s.value("alpha", m.search.alpha);
    m.search.eval_batch = s.value("eval_batch", m.search.eval_batch);
    m.search.seed = s.value("seed", m.search.seed);
    m.search.enable_format_generation =
        s.value("enable_format_generation", m.search.enable_format_generation);
  }

  const json& backends = j.contains("backends") ? j.at("backends") : json::object();
  const std::string mode_name = backends.value("mode", "replay");
  auto mode = parse_run_mode(mode_name);
  if (!mode) fail(Errc::ConfigError, "backends.mode: unknown mode `" + mode_name + "`");
  m.mode = *mode;
  m.fixture_path = backends.value("fixture", "");
  if (m.mode != RunMode::Live && m.fixture_path.empty())
    fail(Errc::ConfigError, "backends.fixture is required in record/replay mode");
  if (m.mode != RunMode::Replay) {
    m.optimizer_http = parse_http_backend(
        backends.contains("optimizer") ? backends.at("optimizer") : json::object(),
        "backends.optimizer");
    m.target_http = parse_http_backend(
        backends.contains("target") ? backends.at("target") : json::object(), "backends.target");
    if (m.optimizer_http.base_url.empty() || m.target_http.base_url.empty())
      fail(Errc::ConfigError, "backends: base_url required for optimizer and target in live/record mode");
  } else {
    // Replay needs only the ids to address fixture entries.
    m.optimizer_http.backend_id =
        backends.contains("optimizer") ? backends.at("optimizer").value("id", "optimizer")
                                       : "optimizer";
    m.target_http.backend_id =
        backends.contains("target") ? backends.at("target").value("id", "target") : "target";
  }

  m.output_dir = j.value("output_dir", m.output_dir);

  const json& init = j.contains("initial_prompt") ? j.at("initial_prompt") : json::object();
  m.initial.content.task_instruction = init.value("task_instruction", "");
  m.initial.content.task_detail = init.value("task_detail", "");
  m.initial.content.output_format = init.value("output_format", "");
  if (init.contains("examples")) {
    for (const json& e : init.at("examples")) {
      Example ex{require<std::string>(e, "question", "initial_prompt.examples"),
                 require<std::string>(e, "answer", "initial_prompt.examples")};
      validate_example(ex);
      m.initial.content.examples.push_back(std::move(ex));
    }
  }
  m.initial.renderer_name = init.value("renderer", "Directly_Joint");
  m.initial.query_format_name = init.value("query_format", "QA");
  m.initial.mutation_label = "initial";

  const std::vector<FormatSpec> builtins = builtin_formats();
  find_format(builtins, m.initial.renderer_name);  // throws UnknownFormat
  find_format(builtins, m.initial.query_format_name);

  validate_config(m.search);
  return m;
}

BackendPair make_backends(const RunManifest& manifest) {
  BackendPair pair;
  switch (manifest.mode) {
    case RunMode::Replay:
      pair.optimizer = std::make_shared<ReplayBackend>(manifest.optimizer_http.backend_id,
                                                       manifest.fixture_path);
      pair.target =
          std::make_shared<ReplayBackend>(manifest.target_http.backend_id, manifest.fixture_path);
      break;
    case RunMode::Live:
      pair.optimizer = std::make_shared<HttpBackend>(manifest.optimizer_http);
      pair.target = std::make_shared<HttpBackend>(manifest.target_http);
      break;
    case RunMode::Record:
      pair.optimizer = record_session(std::make_shared<HttpBackend>(manifest.optimizer_http),
                                      manifest.fixture_path);
      pair.target = record_session(std::make_shared<HttpBackend>(manifest.target_http),
                                   manifest.fixture_path);
      break;
  }
  return pair;
}

}  // namespace cfpo
