#pragma once

/**
 * Component-wise content optimization: case-diagnosis from correct and
 * incorrect evaluation cases, feedback application per component,
 * Monte-Carlo semantic variation, and the single-action example-set edit,
 * all driven by meta-prompts with <START>/<END> response contracts.
 *
 * Parsing of optimizer responses is deliberately lenient: malformed blocks
 * are skipped, unknown segment names are dropped, and the loop never aborts
 * on bad optimizer output.
 */

#include "cfpo/evaluation.hpp"
#include "cfpo/llm_gateway.hpp"
#include "cfpo/meta.hpp"
#include "cfpo/prompt_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cfpo {

struct DiagnosisSuggestion {
  ComponentKind component = ComponentKind::TaskInstruction;  // content-based only
  std::string suggestion;
};

struct MutationPlan {
  int round_index = 0;
  int max_components = 4;        // [1,4], follows the linear schedule
  int num_feedback_candidates = 4;
  int num_mc_candidates = 4;
};

/// Number of components modifiable in a round: linear from 4 down to 1.
int component_schedule(int round_index, int total_rounds);

/// Canonical example-set rendering used inside meta-prompts; the response
/// parser accepts the same shape back.
std::string render_examples_canonical(const std::vector<Example>& examples);
std::vector<Example> parse_examples_canonical(const std::string& text);

/// Whole-example add/delete/modify edit distance between two ordered sets,
/// or -1 when the lists differ by more than one such action.
int example_edit_distance(const std::vector<Example>& before, const std::vector<Example>& after);

/// Throws NoFailures when the bundle has no incorrect case.
std::string build_diagnosis_prompt(const MetaContext& ctx, const CaseBundle& cases, int n_components);

/// One suggestion per well-formed block; never throws on arbitrary text.
std::vector<DiagnosisSuggestion> parse_diagnosis(const std::string& response);

/// Generates up to n_variants revisions of the suggested component; each
/// returned state differs from `content` only in that component. Example
/// revisions obey the single-action rule.
std::vector<ContentState> apply_feedback(const ContentState& content, const MetaContext& ctx,
                                         const DiagnosisSuggestion& suggestion, int n_variants,
                                         Gateway& optimizer);

/// Semantic variation of one component; same targeted-edit contract.
std::vector<ContentState> monte_carlo_variants(const ContentState& content, const MetaContext& ctx,
                                               ComponentKind component, int n_variants,
                                               Gateway& optimizer);

/// Union of feedback-driven and Monte-Carlo candidates for one round,
/// deduplicated by content fingerprint; never returns the unmodified input.
std::vector<ContentState> propose_contents(const ContentState& content, const MetaContext& ctx,
                                           const CaseBundle& cases, const MutationPlan& plan,
                                           Gateway& optimizer, std::uint64_t seed);

}  // namespace cfpo
