#include "cfpo/content_search.hpp"

#include "cfpo/util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

namespace cfpo {

namespace {

const std::array<ComponentKind, 4> kMutableKinds = {
    ComponentKind::TaskInstruction, ComponentKind::TaskDetail, ComponentKind::OutputFormat,
    ComponentKind::FewShotExamples};

std::string strip_outer_newlines(const std::string& text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && (text[begin] == '\n' || text[begin] == '\r')) ++begin;
  while (end > begin && (text[end - 1] == '\n' || text[end - 1] == '\r')) --end;
  return text.substr(begin, end - begin);
}

std::vector<std::string> extract_blocks(const std::string& response) {
  std::vector<std::string> blocks;
  const std::string kStart = "<START>";
  const std::string kEnd = "<END>";
  std::size_t pos = 0;
  while ((pos = response.find(kStart, pos)) != std::string::npos) {
    std::size_t end = response.find(kEnd, pos);
    if (end == std::string::npos) break;  // unterminated tail is skipped
    blocks.push_back(
        strip_outer_newlines(response.substr(pos + kStart.size(), end - pos - kStart.size())));
    pos = end + kEnd.size();
  }
  return blocks;
}

std::string render_case(const CaseResult& c) {
  return "Question: " + c.query + "\nExpected answer: " + c.gold +
         "\nModel answer: " + (c.raw_output.empty() ? "(no output)" : c.raw_output);
}

std::string render_cases(const std::vector<CaseResult>& cases) {
  if (cases.empty()) return "None.";
  std::string out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += render_case(cases[i]);
  }
  return out;
}

long derived_call_seed(const ContentState& content, ComponentKind component, int index,
                       const char* purpose) {
  const std::uint64_t h = derive_seed(
      fnv1a(content_fingerprint(content)),
      {purpose, component_name(component), std::to_string(index)});
  return static_cast<long>(h & 0x7fffffffUL);
}

bool all_examples_valid(const std::vector<Example>& examples) {
  for (const Example& e : examples) {
    if (trim(e.question).empty() || trim(e.answer).empty()) return false;
  }
  return true;
}

/// Accepts an example-set revision only if it is a valid non-empty set one
/// whole-example action away from the current set.
bool admissible_example_edit(const std::vector<Example>& before, const std::vector<Example>& after) {
  if (after.empty() || !all_examples_valid(after)) return false;
  return example_edit_distance(before, after) == 1;
}

}  // namespace

int component_schedule(int round_index, int total_rounds) {
  if (total_rounds < 1) fail(Errc::ConfigError, "total_rounds must be >= 1");
  if (round_index < 0 || round_index >= total_rounds)
    fail(Errc::ConfigError, "round_index out of range");
  if (total_rounds == 1) return 4;
  const double value =
      4.0 - 3.0 * static_cast<double>(round_index) / static_cast<double>(total_rounds - 1);
  return std::clamp(static_cast<int>(std::lround(value)), 1, 4);
}

std::string render_examples_canonical(const std::vector<Example>& examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Question: " + examples[i].question + "\nAnswer: " + examples[i].answer;
  }
  return out;
}

std::vector<Example> parse_examples_canonical(const std::string& text) {
  std::vector<Example> examples;
  Example current;
  enum class State { None, Question, Answer } state = State::None;

  auto flush = [&]() {
    if (state == State::Answer) {
      current.question = trim(current.question);
      current.answer = trim(current.answer);
      examples.push_back(current);
    }
    current = Example{};
  };

  for (const std::string& line : split_lines(text)) {
    if (starts_with(line, "Question:")) {
      flush();
      current.question = trim(line.substr(9));
      state = State::Question;
    } else if (starts_with(line, "Answer:") && state == State::Question) {
      current.answer = trim(line.substr(7));
      state = State::Answer;
    } else if (state == State::Question) {
      current.question += "\n" + line;
    } else if (state == State::Answer) {
      current.answer += "\n" + line;
    }
  }
  flush();
  return examples;
}

int example_edit_distance(const std::vector<Example>& before, const std::vector<Example>& after) {
  auto equal = [](const Example& a, const Example& b) {
    return a.question == b.question && a.answer == b.answer;
  };

  if (before.size() == after.size()) {
    int differing = 0;
    for (std::size_t i = 0; i < before.size(); ++i)
      if (!equal(before[i], after[i])) ++differing;
    return differing <= 1 ? differing : -1;
  }

  const std::vector<Example>* longer = &after;
  const std::vector<Example>* shorter = &before;
  if (before.size() > after.size()) std::swap(longer, shorter);
  if (longer->size() != shorter->size() + 1) return -1;

  // One insertion somewhere, order otherwise preserved.
  std::size_t li = 0;
  std::size_t si = 0;
  bool skipped = false;
  while (li < longer->size()) {
    if (si < shorter->size() && equal((*longer)[li], (*shorter)[si])) {
      ++li;
      ++si;
    } else if (!skipped) {
      skipped = true;
      ++li;
    } else {
      return -1;
    }
  }
  return si == shorter->size() ? 1 : -1;
}

std::string build_diagnosis_prompt(const MetaContext& ctx, const CaseBundle& cases,
                                   int n_components) {
  if (cases.incorrect.empty())
    fail(Errc::NoFailures, "diagnosis needs at least one incorrect case");
  return templates::Store::defaults().render(
      templates::kDiagnosis,
      {{"META PROMPT HEADER", render_meta_header(ctx)},
       {"INCORRECT CASES", render_cases(cases.incorrect)},
       {"CORRECT CASES", render_cases(cases.correct)},
       {"NUM OF DIAGNOSED COMPONENTS", std::to_string(n_components)}});
}

std::vector<DiagnosisSuggestion> parse_diagnosis(const std::string& response) {
  std::vector<DiagnosisSuggestion> suggestions;
  for (std::string block : extract_blocks(response)) {
    const std::string prefix = "<Prompt segment:";
    if (!starts_with(block, prefix)) continue;
    std::size_t close = block.find('>');
    if (close == std::string::npos) continue;
    const std::string segment = trim(block.substr(prefix.size(), close - prefix.size()));
    auto component = parse_component_name(segment);
    if (!component || !is_content_kind(*component) || *component == ComponentKind::Query)
      continue;  // unknown or non-mutable segment names are dropped
    DiagnosisSuggestion s;
    s.component = *component;
    s.suggestion = strip_outer_newlines(block.substr(close + 1));
    if (s.suggestion.empty()) continue;
    suggestions.push_back(std::move(s));
  }
  return suggestions;
}

namespace {

std::vector<ContentState> parse_text_variants(const ContentState& content, ComponentKind component,
                                              const std::string& response, int n_variants) {
  std::vector<ContentState> out;
  for (const std::string& block : extract_blocks(response)) {
    if (static_cast<int>(out.size()) >= n_variants) break;
    if (block.empty() || block == component_text(content, component)) continue;
    out.push_back(with_component(content, component, block));
  }
  return out;
}

std::vector<ContentState> parse_example_variants(const ContentState& content,
                                                 const std::string& response, int n_variants) {
  std::vector<ContentState> out;
  for (const std::string& block : extract_blocks(response)) {
    if (static_cast<int>(out.size()) >= n_variants) break;
    std::vector<Example> revised = parse_examples_canonical(block);
    if (!admissible_example_edit(content.examples, revised)) continue;
    ContentState candidate = content;
    candidate.examples = std::move(revised);
    out.push_back(std::move(candidate));
  }
  return out;
}

}  // namespace

std::vector<ContentState> apply_feedback(const ContentState& content, const MetaContext& ctx,
                                         const DiagnosisSuggestion& suggestion, int n_variants,
                                         Gateway& optimizer) {
  if (!is_content_kind(suggestion.component) || suggestion.component == ComponentKind::Query)
    fail(Errc::WrongKind, "feedback targets content components only");
  if (n_variants < 1) fail(Errc::ConfigError, "n_variants must be >= 1");

  const bool examples = suggestion.component == ComponentKind::FewShotExamples;
  const auto& store = templates::Store::defaults();
  std::string prompt;
  if (examples) {
    prompt = store.render(templates::kFeedbackExamples,
                          {{"META PROMPT HEADER", render_meta_header(ctx)},
                           {"CURRENT IN-CONTEXT EXAMPLES IN PROMPT",
                            render_examples_canonical(content.examples)},
                           {"GENERATED DIAGNOSES", suggestion.suggestion},
                           {"NUMBER OF GENERATED EXAMPLES", std::to_string(n_variants)}});
  } else {
    prompt = store.render(templates::kFeedback,
                          {{"META PROMPT HEADER", render_meta_header(ctx)},
                           {"COMPONENT NAME", component_name(suggestion.component)},
                           {"CURRENT CONTENT FOR THE COMPONENT",
                            component_text(content, suggestion.component)},
                           {"GENERATED DIAGNOSES", suggestion.suggestion},
                           {"NUMBER OF GENERATED CONTENT", std::to_string(n_variants)}});
  }

  GenerationParams params = optimizer_default_params();
  params.seed = derived_call_seed(content, suggestion.component, 0, "feedback");

  // One retry when the response yields nothing usable, then fewer variants.
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto response = optimizer.complete(oplabel::kApplyFeedback, {{"user", prompt}}, params);
    std::vector<ContentState> variants =
        examples ? parse_example_variants(content, response.text, n_variants)
                 : parse_text_variants(content, suggestion.component, response.text, n_variants);
    if (!variants.empty() || attempt == 1) return variants;
    params.seed += 1;
  }
  return {};
}

std::vector<ContentState> monte_carlo_variants(const ContentState& content, const MetaContext& ctx,
                                               ComponentKind component, int n_variants,
                                               Gateway& optimizer) {
  if (!is_content_kind(component) || component == ComponentKind::Query)
    fail(Errc::WrongKind, "Monte-Carlo variation targets content components only");
  if (n_variants < 1) fail(Errc::ConfigError, "n_variants must be >= 1");

  const bool examples = component == ComponentKind::FewShotExamples;
  const auto& store = templates::Store::defaults();
  std::string prompt;
  if (examples) {
    prompt = store.render(templates::kMonteCarloExamples,
                          {{"META PROMPT HEADER", render_meta_header(ctx)},
                           {"CURRENT IN-CONTEXT EXAMPLES IN PROMPT",
                            render_examples_canonical(content.examples)}});
  } else {
    prompt = store.render(templates::kMonteCarlo,
                          {{"META PROMPT HEADER", render_meta_header(ctx)},
                           {"COMPONENT NAME", component_name(component)},
                           {"CURRENT CONTENT FOR THE COMPONENT", component_text(content, component)}});
  }

  std::vector<ContentState> out;
  for (int i = 0; i < n_variants; ++i) {
    GenerationParams params = optimizer_default_params();
    params.seed = derived_call_seed(content, component, i, "monte_carlo");
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto response = optimizer.complete(oplabel::kGenVariation, {{"user", prompt}}, params);
      // The variation meta-prompt does not mandate encapsulation; accept a
      // single block or the raw completion.
      std::vector<std::string> blocks = extract_blocks(response.text);
      const std::string body =
          blocks.empty() ? strip_outer_newlines(trim(response.text)) : blocks.front();
      if (examples) {
        std::vector<Example> revised = parse_examples_canonical(body);
        if (admissible_example_edit(content.examples, revised)) {
          ContentState candidate = content;
          candidate.examples = std::move(revised);
          out.push_back(std::move(candidate));
          break;
        }
      } else if (!body.empty() && body != component_text(content, component)) {
        out.push_back(with_component(content, component, body));
        break;
      }
      params.seed += 1000003;  // retry with a fresh sampling seed
    }
  }
  return out;
}

std::vector<ContentState> propose_contents(const ContentState& content, const MetaContext& ctx,
                                           const CaseBundle& cases, const MutationPlan& plan,
                                           Gateway& optimizer, std::uint64_t seed) {
  if (plan.max_components < 1 || plan.max_components > 4)
    fail(Errc::ConfigError, "max_components must lie in [1,4]");

  std::vector<ContentState> candidates;

  // Feedback-driven side: skipped entirely when every case passed.
  if (!cases.incorrect.empty() && plan.num_feedback_candidates > 0) {
    const std::string prompt = build_diagnosis_prompt(ctx, cases, plan.max_components);
    GenerationParams params = optimizer_default_params();
    params.seed = derived_call_seed(content, ComponentKind::TaskInstruction, plan.round_index, "diagnosis");
    auto response = optimizer.complete(oplabel::kCaseDiagnose, {{"user", prompt}}, params);

    std::vector<DiagnosisSuggestion> suggestions = parse_diagnosis(response.text);
    std::vector<DiagnosisSuggestion> selected;
    for (const DiagnosisSuggestion& s : suggestions) {
      if (static_cast<int>(selected.size()) >= plan.max_components) break;
      bool duplicate = false;
      for (const DiagnosisSuggestion& prior : selected) duplicate |= prior.component == s.component;
      if (!duplicate) selected.push_back(s);
    }

    // Per-component variant lists are merged index-wise, so candidate i
    // applies revision i of every diagnosed component at once.
    std::map<ComponentKind, std::vector<ContentState>> variants_by_component;
    for (const DiagnosisSuggestion& s : selected) {
      variants_by_component[s.component] =
          apply_feedback(content, ctx, s, plan.num_feedback_candidates, optimizer);
    }
    for (int i = 0; i < plan.num_feedback_candidates; ++i) {
      ContentState merged = content;
      bool touched = false;
      for (const auto& [component, variants] : variants_by_component) {
        if (i >= static_cast<int>(variants.size())) continue;
        if (component == ComponentKind::FewShotExamples) {
          merged.examples = variants[static_cast<std::size_t>(i)].examples;
        } else {
          merged = with_component(std::move(merged), component,
                                  component_text(variants[static_cast<std::size_t>(i)], component));
        }
        touched = true;
      }
      if (touched) candidates.push_back(std::move(merged));
    }
  }

  // Monte-Carlo side: components drawn uniformly, independent of diagnosis.
  if (plan.num_mc_candidates > 0) {
    auto rng = make_rng(derive_seed(seed, {"mc-components", std::to_string(plan.round_index)}));
    std::map<ComponentKind, int> picks;
    for (int j = 0; j < plan.num_mc_candidates; ++j) {
      ComponentKind kind = kMutableKinds[rng_below(rng, kMutableKinds.size())];
      if (kind == ComponentKind::FewShotExamples && content.examples.empty())
        kind = ComponentKind::TaskInstruction;
      picks[kind] += 1;
    }
    for (const auto& [kind, count] : picks) {
      for (ContentState& variant : monte_carlo_variants(content, ctx, kind, count, optimizer))
        candidates.push_back(std::move(variant));
    }
  }

  // Deterministic merge: sort by fingerprint, drop duplicates and the input.
  const std::string input_fingerprint = content_fingerprint(content);
  std::sort(candidates.begin(), candidates.end(), [](const ContentState& a, const ContentState& b) {
    return content_fingerprint(a) < content_fingerprint(b);
  });
  std::vector<ContentState> out;
  std::string last;
  for (ContentState& candidate : candidates) {
    const std::string fp = content_fingerprint(candidate);
    if (fp == input_fingerprint || fp == last) continue;
    last = fp;
    out.push_back(std::move(candidate));
  }
  return out;
}

}  // namespace cfpo
