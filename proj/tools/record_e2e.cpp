// Regenerates the bundled end-to-end replay fixture and its golden outputs.
//
// Runs the optimization loop described by tests/fixtures/e2e_config.json
// against the deterministic scripted backends, recording every exchange into
// the replay fixture. `cfpo optimize` in replay mode then reproduces the run
// bit-exactly without any model behind it.
//
// Usage: run from the repository root; rerun whenever templates, seeds, or
// the loop's call pattern change, and commit the refreshed fixture files.

#include "cfpo/config.hpp"
#include "cfpo/orchestrator.hpp"
#include "cfpo/util.hpp"

#include "support/mock_backends.hpp"

#include <cstdio>
#include <filesystem>
#include <map>

using namespace cfpo;

int main() {
  const std::string fixture = "tests/fixtures/e2e_replay.json";
  std::filesystem::remove(fixture);

  RunManifest manifest = load_manifest("tests/fixtures/e2e_config.json");
  manifest.output_dir = "tests/fixtures/e2e_golden";
  std::filesystem::remove_all(manifest.output_dir);

  std::map<std::string, std::string> gold;
  for (const DatasetRecord& r : load_dataset(manifest.search.task.dataset_path))
    gold[r.query] = r.gold;
  for (const DatasetRecord& r : load_dataset(manifest.search.task.heldout_path))
    gold[r.query] = r.gold;

  auto optimizer_backend = record_session(
      std::make_shared<ScriptedBackend>("optimizer", testsupport::scripted_optimizer()), fixture);
  auto target_backend = record_session(
      std::make_shared<ScriptedBackend>("target", testsupport::scripted_target(gold)), fixture);

  UsageLedger ledger;
  Gateway optimizer(optimizer_backend, &ledger);
  Gateway target(target_backend, &ledger);
  LlmEvaluator evaluator(manifest.search.task, target);

  RunState state;
  state.pool = seeded_pool(manifest.search.alpha);
  const RunResult result = run(state, manifest.search, manifest.initial, evaluator, optimizer,
                               target, ledger, manifest.output_dir);

  std::printf("recorded %s\n", fixture.c_str());
  std::printf("golden outputs in %s\n", manifest.output_dir.c_str());
  std::printf("rounds=%d best=%.4f heldout=%.4f\n", result.rounds_executed,
              result.best.eval_score.value_or(0.0), result.heldout_score.value_or(-1.0));
  return 0;
}
