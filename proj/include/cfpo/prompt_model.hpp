#pragma once

/**
 * Structured prompt template and format DSL.
 *
 * A prompt is assembled from five content components (task instruction, task
 * detail, output format, few-shot examples, query) by two format rules:
 *  - a QueryFormat, which renders individual question/answer pairs
 *    (labels, casing, label template, separators) and knows how to extract
 *    the answer back out of text rendered with it;
 *  - a PromptRenderer, which wraps each non-empty component in a section
 *    template and joins the sections in fixed order.
 *
 * Rendering is pure and byte-deterministic; all spacing is explicit in the
 * DSL fields, nothing is implicitly trimmed.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cfpo {

enum class ComponentKind {
  TaskInstruction,
  TaskDetail,
  OutputFormat,
  FewShotExamples,
  Query,
  PromptRenderer,
  QueryFormat,
};

bool is_content_kind(ComponentKind kind);
const char* component_name(ComponentKind kind);
/// Parses a segment name as it may appear in optimizer output
/// ("EXAMPLES", "Task Instruction", "FEW-SHOT_EXAMPLES", ...). Content kinds only.
std::optional<ComponentKind> parse_component_name(const std::string& name);

enum class TaskKind { Classification, MultipleChoice, Reasoning };
const char* task_kind_name(TaskKind kind);
std::optional<TaskKind> parse_task_kind(const std::string& name);

struct Example {
  std::string question;
  std::string answer;

  bool operator==(const Example&) const = default;
};

/// Throws InvalidExample when either field is empty after trimming.
void validate_example(const Example& example);

struct ContentState {
  std::string task_instruction;
  std::string task_detail;
  std::string output_format;
  std::vector<Example> examples;
  std::string query_slot = "{{Query placeholder}}";

  bool operator==(const ContentState&) const = default;
};

const std::string& component_text(const ContentState& content, ComponentKind kind);
ContentState with_component(ContentState content, ComponentKind kind, std::string text);

/// Stable hex fingerprint over every content field.
std::string content_fingerprint(const ContentState& content);

enum class Casing { None, Upper, Lower, Title };
const char* casing_name(Casing casing);
std::optional<Casing> parse_casing(const std::string& name);
std::string apply_casing(const std::string& text, Casing casing);

enum class ExtractionStrategy { DirectMatch, LabelScan, Pattern };
const char* extraction_strategy_name(ExtractionStrategy s);
std::optional<ExtractionStrategy> parse_extraction_strategy(const std::string& name);

struct ExtractionRule {
  ExtractionStrategy strategy = ExtractionStrategy::LabelScan;
  std::string marker;  // pattern anchor for reasoning answers; empty = default

  bool operator==(const ExtractionRule&) const = default;
};

/// Rendering rule for one question/answer pair. `label_template` must
/// contain the `{label}` placeholder; e.g. "[{label}]:\n" renders the
/// question label "Question" as "[Question]:\n".
struct QueryFormatProgram {
  std::string question_label = "Q";
  std::string answer_label = "A";
  Casing label_casing = Casing::None;
  std::string label_template = "{label}: ";
  std::string qa_separator = "\n\n";     // between question block and answer block
  std::string block_separator = "\n\n";  // between consecutive examples
  ExtractionRule extraction;

  bool operator==(const QueryFormatProgram&) const = default;
};

/// Aggregation rule for the whole prompt. `section_template` may use
/// `{heading}` and `{body}`; any other placeholder is rejected at render
/// time. Headings default to the component display names.
struct RendererProgram {
  std::string section_template = "{body}";
  std::string joiner = "\n\n";
  std::map<ComponentKind, std::string> headings;

  bool operator==(const RendererProgram&) const = default;
};

struct FormatSpec {
  std::string name;
  ComponentKind kind = ComponentKind::QueryFormat;
  std::string description;
  std::variant<RendererProgram, QueryFormatProgram> program;

  const QueryFormatProgram& query_program() const;
  const RendererProgram& renderer_program() const;
};

/// `[A-Za-z0-9_]+`
bool valid_format_name(const std::string& name);

struct RenderedPrompt {
  std::string text;
  std::string renderer_name;
  std::string query_format_name;
  std::string content_fingerprint;
};

/// Renders a full example (question and answer) with a QueryFormat.
std::string render_query(const Example& example, const FormatSpec& qf);

/// Renders a query-only block: the question, the qa separator, and the
/// decorated answer label with trailing whitespace removed, so the model's
/// completion starts the answer body.
std::string render_query(const std::string& question, const FormatSpec& qf);

/// Assembles the complete prompt. Sections appear in fixed order: task
/// instruction, task detail, output format, examples, query. Empty
/// components are omitted. When `query` is absent, the content's query
/// slot marker is emitted verbatim (preview/fixture form).
RenderedPrompt render_prompt(const ContentState& content, const FormatSpec& pr, const FormatSpec& qf,
                             const std::optional<std::string>& query);

/// Recovers the answer from model output rendered (or completed) under
/// `qf`. Reasoning tasks additionally locate the anchor marker and return
/// the trailing number. Throws NoAnswerFound when nothing can be recovered.
std::string extract_answer(const std::string& raw_output, const FormatSpec& qf, TaskKind task);

/// The seed format pool transcribed from the built-in catalog: five prompt
/// renderers and nine query formats, all round-trip clean.
std::vector<FormatSpec> builtin_formats();

const FormatSpec& find_format(const std::vector<FormatSpec>& formats, const std::string& name);

}  // namespace cfpo
