#pragma once

/**
 * The integrated content/format optimization loop.
 *
 * Each round: every beam member proposes content revisions (diagnosis-driven
 * plus Monte-Carlo), every revision runs one format-search call against the
 * shared pool, and all scored candidates plus the re-scored incumbents are
 * ranked; the top beam_width survive. The loop stops early after `patience`
 * rounds without improvement of the running best score.
 *
 * All randomness is derived statelessly from the run seed and structural
 * tags (round index, purpose), so a resumed run continues bit-exactly
 * without serializing generator state.
 */

#include "cfpo/content_search.hpp"
#include "cfpo/evaluation.hpp"
#include "cfpo/format_search.hpp"
#include "cfpo/llm_gateway.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cfpo {

struct PromptCandidate {
  ContentState content;
  std::string renderer_name;
  std::string query_format_name;
  std::optional<double> eval_score;  // accuracy of this exact pair on the round batch
  std::string parent_fingerprint;
  std::string mutation_label;  // "initial", "feedback", "monte_carlo", "incumbent"
};

struct SearchConfig {
  int beam_width = 8;
  int k_formats = 4;   // per search_format call: k selected + up to k generated
  int max_rounds = 20;
  int patience = 5;
  double alpha = 1e-3;
  int eval_batch = 40;
  int diagnosis_correct = 5;    // cases shown per class in the diagnosis prompt
  int diagnosis_incorrect = 5;
  std::uint64_t seed = 42;
  bool enable_format_generation = true;
  TaskSpec task;
};

void validate_config(const SearchConfig& cfg);

/// One pool interaction inside search_format, kept for trace conformance
/// checks: which formats were evaluated, with what measured metric, and
/// which pair won.
struct FormatSearchTrace {
  std::vector<std::string> selected;   // F_select names
  std::vector<std::string> generated;  // F_gen names admitted this call
  std::vector<std::pair<std::string, double>> evaluated;  // name -> measured m
  std::string incumbent_renderer;
  std::string incumbent_query_format;
  std::string chosen_renderer;
  std::string chosen_query_format;
  double chosen_score = 0.0;
};

struct RoundLog {
  int round_index = 0;
  int candidates_evaluated = 0;
  double round_best = 0.0;  // best eval_score measured this round
  double best_score = 0.0;  // running maximum; non-decreasing across rounds
  double content_gain = 0.0;
  double format_gain = 0.0;
  std::vector<FormatSearchTrace> format_traces;
};

/// Measures one (content, renderer, query format) triple on a batch.
/// Abstracted so the synthetic-landscape harness and tests can bypass the
/// evaluator model.
class CandidateEvaluator {
 public:
  virtual ~CandidateEvaluator() = default;
  virtual double measure(const ContentState& content, const FormatSpec& renderer,
                         const FormatSpec& qf, const std::vector<DatasetRecord>& batch) = 0;
  /// Case-level detail of the most recent measure() call, when the
  /// implementation produces one; drives case diagnosis.
  virtual const EvalReport* last_report() const { return nullptr; }
};

/// The production evaluator: renders each batch query and asks the target
/// model, scoring by normalized exact match.
class LlmEvaluator : public CandidateEvaluator {
 public:
  LlmEvaluator(TaskSpec task, Gateway& target) : task_(std::move(task)), target_(&target) {}
  double measure(const ContentState& content, const FormatSpec& renderer, const FormatSpec& qf,
                 const std::vector<DatasetRecord>& batch) override;
  const EvalReport* last_report() const override { return &last_report_; }

 private:
  TaskSpec task_;
  Gateway* target_;
  EvalReport last_report_;
};

struct RunState {
  int next_round = 0;
  std::vector<PromptCandidate> beam;
  FormatPool pool{1e-3};
  double best_score = 0.0;
  int stall_rounds = 0;
  std::vector<RoundLog> logs;
};

/// One format-search call: top-k by UCT plus up to k freshly generated
/// formats, each evaluated on (content, batch) paired with the incumbent
/// counterpart of the other kind; Q/N updated per evaluation; returns the
/// measured-argmax pair. With zero valid generated formats the selected set
/// alone is used.
struct FormatChoice {
  std::string renderer_name;
  std::string query_format_name;
  double score = 0.0;
};
FormatChoice search_format(const ContentState& content, FormatPool& pool, const SearchConfig& cfg,
                           const std::vector<DatasetRecord>& batch, CandidateEvaluator& evaluator,
                           Gateway* optimizer, const std::string& incumbent_renderer,
                           const std::string& incumbent_qf, FormatSearchTrace* trace = nullptr);

/// Visits every pool entry once against the initial content, establishing
/// Q = m(c0, f), N = 1. Called exactly once per run.
void initialize_pool(FormatPool& pool, const ContentState& initial,
                     const std::string& initial_renderer, const std::string& initial_qf,
                     const std::vector<DatasetRecord>& batch, CandidateEvaluator& evaluator);

RoundLog run_round(RunState& state, const SearchConfig& cfg,
                   const std::vector<DatasetRecord>& dataset, CandidateEvaluator& evaluator,
                   Gateway& optimizer, Gateway& target, UsageLedger& ledger);

struct RunResult {
  PromptCandidate best;
  std::vector<RoundLog> logs;
  int rounds_executed = 0;
  bool stopped_early = false;
  std::optional<double> heldout_score;
};

/// Full loop from an initial candidate. When run_dir is non-empty, a
/// checkpoint is written after every round plus final artifacts (prompt
/// text, convergence CSV, ledger, pool). When `resume_from` was loaded into
/// `state`, the loop continues from state.next_round.
RunResult run(RunState& state, const SearchConfig& cfg, const PromptCandidate& initial,
              CandidateEvaluator& evaluator, Gateway& optimizer, Gateway& target,
              UsageLedger& ledger, const std::string& run_dir = "");

inline constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json candidate_to_json(const PromptCandidate& c);
PromptCandidate candidate_from_json(const nlohmann::json& j);

void save_checkpoint(const RunState& state, const UsageLedger& ledger, const std::string& path);
/// Throws VersionMismatch on unknown version or corrupt structure; IoError
/// on an unreadable file.
void load_checkpoint(RunState& state, UsageLedger& ledger, const std::string& path);

/// Renders the winning prompt (query slot left as a placeholder).
std::string final_prompt_text(const PromptCandidate& candidate, const FormatPool& pool);

std::string convergence_csv(const std::vector<RoundLog>& logs);

}  // namespace cfpo
