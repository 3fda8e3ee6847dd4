#pragma once

/**
 * Run configuration: one JSON file with sections per module. Environment
 * variables are consulted only for backend credentials (via auth_env);
 * everything else lives in the file so a run is reproducible from it.
 */

#include "cfpo/llm_gateway.hpp"
#include "cfpo/orchestrator.hpp"

#include <memory>
#include <string>

namespace cfpo {

enum class RunMode { Live, Record, Replay };
const char* run_mode_name(RunMode mode);
std::optional<RunMode> parse_run_mode(const std::string& name);

struct RunManifest {
  std::string config_path;
  std::string task_name;
  RunMode mode = RunMode::Replay;
  std::string output_dir = "runs/default";
  std::string fixture_path;  // replay source / record destination
  HttpBackendConfig optimizer_http;
  HttpBackendConfig target_http;
  SearchConfig search;
  PromptCandidate initial;
};

/// Parses and validates a config file; throws ConfigError with a
/// field-level message, IoError when unreadable.
RunManifest load_manifest(const std::string& path);

/// Builds the optimizer/target backends for the manifest's mode. In replay
/// mode no network object is constructed at all; in record mode the live
/// backends are wrapped so every response lands in the fixture file.
struct BackendPair {
  std::shared_ptr<Backend> optimizer;
  std::shared_ptr<Backend> target;
};
BackendPair make_backends(const RunManifest& manifest);

}  // namespace cfpo
