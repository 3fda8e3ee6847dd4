#pragma once

/**
 * Task adapters, dataset handling and the exact-match metric m(c, f).
 *
 * Datasets are line-delimited JSON records with "query" and "gold" fields.
 * Evaluation renders every query under a (content, renderer, query format)
 * triple, queries the target model, extracts the answer with the query
 * format's rule and scores exact match after task-specific normalization.
 */

#include "cfpo/llm_gateway.hpp"
#include "cfpo/prompt_model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cfpo {

struct DatasetRecord {
  std::string query;
  std::string gold;
};

struct TaskSpec {
  TaskKind kind = TaskKind::Reasoning;
  std::string dataset_path;
  int eval_subset_size = 40;
  std::string task_intention;
  std::string heldout_path;  // optional test file for final re-scoring
  GenerationParams eval_params = evaluator_default_params();
};

struct CaseResult {
  std::string query;
  std::string gold;
  std::string raw_output;
  std::optional<std::string> extracted;
  bool correct = false;
};

struct EvalReport {
  std::vector<CaseResult> cases;
  double accuracy = 0.0;
  long tokens_in = 0;
  long tokens_out = 0;
};

struct CaseBundle {
  std::vector<CaseResult> correct;
  std::vector<CaseResult> incorrect;
};

/// Rejects malformed lines with their line number.
std::vector<DatasetRecord> load_dataset(const std::string& path);

/// Uniform sample without replacement, reproducible from the seed.
std::vector<DatasetRecord> sample_batch(const std::vector<DatasetRecord>& data, int size,
                                        std::uint64_t seed);

/// Trim everywhere; case-fold classification labels; strip a trailing
/// period from numeric answers. Idempotent.
std::string normalize_answer(const std::string& answer, TaskKind kind);

bool answers_match(const std::string& extracted, const std::string& gold, TaskKind kind);

EvalReport evaluate(const ContentState& content, const FormatSpec& pr, const FormatSpec& qf,
                    const TaskSpec& task, const std::vector<DatasetRecord>& batch, Gateway& target);

/// Uniform per-class samples clamped to availability; seed-reproducible.
CaseBundle partition_cases(const EvalReport& report, int n_correct, int n_incorrect,
                           std::uint64_t seed);

}  // namespace cfpo
