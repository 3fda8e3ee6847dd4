#pragma once

/**
 * Dynamic format pool with UCT selection and LLM-assisted generation.
 *
 * Every format spec carries a cumulative score Q and a visit count N; a
 * visit adds a metric value in [0,1] to Q and bumps N by one, so
 * 0 <= Q <= N always holds. Selection ranks visited entries by
 * Q/N + alpha * sqrt(total_visits / N) with a deterministic tie-break.
 *
 * New formats are proposed by the optimizer model in two steps (describe,
 * then field definition), parsed from <START>/<END> blocks, validated
 * against the DSL (name hygiene, exact re-rendering of the proposed
 * sample, round-trip extraction) and only then admitted with Q=0, N=0.
 */

#include "cfpo/llm_gateway.hpp"
#include "cfpo/prompt_model.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cfpo {

struct FormatPoolEntry {
  FormatSpec spec;
  double q = 0.0;
  long n = 0;
};

double uct_score(const FormatPoolEntry& entry, long total_visits, double alpha);

class FormatPool {
 public:
  explicit FormatPool(double alpha = 1e-3);

  double alpha() const { return alpha_; }

  /// Name must be hygienic and unique within its kind.
  void add(FormatSpec spec, double q = 0.0, long n = 0);
  bool contains(ComponentKind kind, const std::string& name) const;
  const FormatPoolEntry& entry(ComponentKind kind, const std::string& name) const;
  const FormatSpec& spec(ComponentKind kind, const std::string& name) const;

  /// Q += m, N += 1 for the named entry; m must lie in [0,1].
  void update(const std::string& name, double m);

  std::vector<const FormatPoolEntry*> entries(ComponentKind kind) const;
  long total_visits(ComponentKind kind) const;
  std::size_t size() const { return entries_.size(); }

  nlohmann::ordered_json to_json() const;
  static FormatPool from_json(const nlohmann::json& j);

 private:
  FormatPoolEntry& mutable_entry(const std::string& name);

  double alpha_;
  std::vector<FormatPoolEntry> entries_;
};

/// Seeds a pool with the built-in catalog, all unvisited.
FormatPool seeded_pool(double alpha = 1e-3);

/// Top-k visited specs of one kind by UCT; ties break by (N asc, name asc).
std::vector<FormatSpec> select_top_k(const FormatPool& pool, ComponentKind kind, int k);

struct GeneratedFormatProposal {
  std::string name;
  std::string description;
  std::string rendered_sample;
  std::optional<nlohmann::json> dsl_fields;
};

enum class FormatGenStep { Describe, Fields };

/// Builds the generation meta-prompt for one kind. The pool catalog and two
/// reference renderings are interpolated; step Fields additionally needs the
/// step-one proposal.
std::string build_format_generation_prompt(const FormatPool& pool, const Example& sample,
                                           FormatGenStep step, ComponentKind kind,
                                           const std::string& task_intention,
                                           const GeneratedFormatProposal* proposal = nullptr);

/// Parses a step-one response: single <START>/<END> block containing
/// <Format name: ...>, <Description: ...> and the rendered sample.
GeneratedFormatProposal parse_format_proposal(const std::string& response);

/// Parses a step-two response: same block shape with a JSON field object.
nlohmann::json parse_format_fields(const std::string& response);

/// Builds a FormatSpec of `kind` from parsed DSL fields.
FormatSpec spec_from_fields(const std::string& name, const std::string& description,
                            ComponentKind kind, const nlohmann::json& fields);

struct FormatGenStats {
  int attempted = 0;
  int admitted = 0;
  int rejected = 0;
};

/// Runs the two-step generation protocol up to k times. Valid proposals are
/// added to the pool with Q=0, N=0; malformed or non-reproducing proposals
/// are retried once and then dropped.
std::vector<FormatSpec> generate_formats(FormatPool& pool, ComponentKind kind, int k,
                                         const Example& sample, const std::string& task_intention,
                                         Gateway& optimizer, FormatGenStats* stats = nullptr);

nlohmann::ordered_json format_spec_to_json(const FormatSpec& spec);
FormatSpec format_spec_from_json(const nlohmann::json& j);

/// Human-editable catalog file: one record per spec.
void save_format_catalog(const std::vector<FormatSpec>& specs, const std::string& path);
std::vector<FormatSpec> load_format_catalog(const std::string& path);

}  // namespace cfpo
