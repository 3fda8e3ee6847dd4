#include "cfpo/config.hpp"
#include "cfpo/errors.hpp"
#include "cfpo/landscape.hpp"
#include "cfpo/orchestrator.hpp"
#include "cfpo/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace cfpo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int classify_error(const Error& e) {
  switch (e.code()) {
    case Errc::ConfigError:
    case Errc::IoError:
    case Errc::UnknownFormat:
    case Errc::ParseError:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

int cmd_optimize(const std::string& config_path, const std::string& output_override) {
  RunManifest manifest = load_manifest(config_path);
  if (!output_override.empty()) manifest.output_dir = output_override;

  // Fail on a missing dataset before any backend is touched.
  if (!fs::exists(manifest.search.task.dataset_path))
    fail(Errc::IoError, "dataset not found: " + manifest.search.task.dataset_path);

  BackendPair backends = make_backends(manifest);
  UsageLedger ledger;
  Gateway optimizer(backends.optimizer, &ledger);
  Gateway target(backends.target, &ledger);
  LlmEvaluator evaluator(manifest.search.task, target);

  RunState state;
  state.pool = seeded_pool(manifest.search.alpha);
  const std::string checkpoint_path = manifest.output_dir + "/checkpoint.json";
  if (fs::exists(checkpoint_path)) {
    load_checkpoint(state, ledger, checkpoint_path);
    std::cout << "resuming from round " << state.next_round << "\n";
  }

  RunResult result = run(state, manifest.search, manifest.initial, evaluator, optimizer, target,
                         ledger, manifest.output_dir);

  std::cout << "final prompt: " << manifest.output_dir << "/final_prompt.txt\n";
  std::cout << "best score: " << result.best.eval_score.value_or(0.0) << "\n";
  if (result.heldout_score) std::cout << "held-out score: " << *result.heldout_score << "\n";
  std::cout << "rounds: " << result.rounds_executed
            << (result.stopped_early ? " (stopped early)" : "") << "\n";
  return kExitOk;
}

int cmd_ablate(const AblationConfig& cfg, const std::string& csv_path) {
  const std::vector<StrategySummary> summaries = run_ablation(cfg);
  std::string csv = "strategy,mean_final_metric,se_final_metric,mean_discovery_round\n";
  for (const StrategySummary& s : summaries) {
    std::printf("%-8s mean_final=%.5f se=%.5f mean_discovery_round=%.2f\n",
                strategy_name(s.strategy), s.mean_final_metric, s.se_final_metric,
                s.mean_discovery_round);
    csv += std::string(strategy_name(s.strategy)) + "," + std::to_string(s.mean_final_metric) +
           "," + std::to_string(s.se_final_metric) + "," +
           std::to_string(s.mean_discovery_round) + "\n";
  }
  if (!csv_path.empty()) write_file(csv_path, csv);
  return kExitOk;
}

int cmd_report(const std::string& run_dir) {
  const std::string checkpoint_path = run_dir + "/checkpoint.json";
  if (!fs::exists(checkpoint_path))
    fail(Errc::MissingRun, "no checkpoint in run directory: " + run_dir);
  RunState state;
  UsageLedger ledger;
  load_checkpoint(state, ledger, checkpoint_path);

  std::cout << convergence_csv(state.logs);
  std::cout << "\n" << format_usage_table(ledger);
  return kExitOk;
}

int cmd_validate(const std::string& config_path) {
  RunManifest manifest = load_manifest(config_path);
  std::cout << "config ok: task=" << manifest.task_name << " mode=" << run_mode_name(manifest.mode)
            << " dataset=" << manifest.search.task.dataset_path << "\n";
  return kExitOk;
}

int cmd_render_preview(const std::string& config_path, const std::string& query) {
  RunManifest manifest = load_manifest(config_path);
  const std::vector<FormatSpec> builtins = builtin_formats();
  const FormatSpec& renderer = find_format(builtins, manifest.initial.renderer_name);
  const FormatSpec& qf = find_format(builtins, manifest.initial.query_format_name);
  const std::optional<std::string> q =
      query.empty() ? std::nullopt : std::optional<std::string>(query);
  std::cout << render_prompt(manifest.initial.content, renderer, qf, q).text << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint content/format prompt optimizer"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  auto* optimize = app.add_subcommand("optimize", "Run the full optimization loop");
  optimize->add_option("--config", config_path, "Config file")->required();
  optimize->add_option("--output", output_dir, "Override output directory");

  AblationConfig ablate_cfg;
  std::string ablate_csv;
  auto* ablate = app.add_subcommand("ablate-selection",
                                    "Compare UCT / greedy / random format selection on a synthetic landscape");
  ablate->add_option("--trials", ablate_cfg.trials, "Trials per strategy");
  ablate->add_option("--rounds", ablate_cfg.rounds, "Selection rounds per trial");
  ablate->add_option("--formats", ablate_cfg.n_formats, "Formats on the landscape");
  ablate->add_option("--k", ablate_cfg.k, "Formats selected per round");
  ablate->add_option("--alpha", ablate_cfg.alpha, "UCT exploration weight");
  ablate->add_option("--noise", ablate_cfg.noise_scale, "Evaluation noise scale");
  ablate->add_option("--seed", ablate_cfg.seed, "Base seed");
  ablate->add_option("--csv", ablate_csv, "Also write the report as CSV");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Convergence CSV and usage table for a run directory");
  report->add_option("run_dir", run_dir, "Run directory")->required();

  auto* validate = app.add_subcommand("validate-config", "Parse and validate a config file");
  validate->add_option("--config", config_path, "Config file")->required();

  std::string preview_query;
  auto* preview = app.add_subcommand("render-preview", "Render the initial prompt from a config");
  preview->add_option("--config", config_path, "Config file")->required();
  preview->add_option("--query", preview_query, "Optional query to substitute");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (optimize->parsed()) return cmd_optimize(config_path, output_dir);
    if (ablate->parsed()) return cmd_ablate(ablate_cfg, ablate_csv);
    if (report->parsed()) return cmd_report(run_dir);
    if (validate->parsed()) return cmd_validate(config_path);
    if (preview->parsed()) return cmd_render_preview(config_path, preview_query);
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return classify_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
