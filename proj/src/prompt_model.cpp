#include "cfpo/prompt_model.hpp"

#include "cfpo/errors.hpp"
#include "cfpo/util.hpp"

#include <array>
#include <cctype>

namespace cfpo {

namespace {

constexpr const char* kDefaultReasoningMarker = "The answer is";

const std::array<ComponentKind, 5> kContentOrder = {
    ComponentKind::TaskInstruction, ComponentKind::TaskDetail, ComponentKind::OutputFormat,
    ComponentKind::FewShotExamples, ComponentKind::Query};

std::string normalize_segment_key(const std::string& name) {
  std::string key;
  for (char c : name) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) key.push_back(static_cast<char>(std::tolower(u)));
  }
  return key;
}

/// Expands a template whose only legal placeholders are the given ones.
/// Placeholder values are substituted literally (no re-scan), so braces
/// inside content never trip the expander.
std::string expand(const std::string& tmpl, const std::map<std::string, std::string>& slots,
                   const std::string& format_name) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    out.append(tmpl, pos, open - pos);
    std::size_t close = tmpl.find('}', open);
    if (close == std::string::npos)
      fail(Errc::UnrenderableFormat, "unterminated placeholder in format '" + format_name + "'");
    std::string key = tmpl.substr(open + 1, close - open - 1);
    auto it = slots.find(key);
    if (it == slots.end())
      fail(Errc::UnrenderableFormat, "unknown placeholder '{" + key + "}' in format '" + format_name + "'");
    out += it->second;
    pos = close + 1;
  }
  return out;
}

std::string decorated_label(const QueryFormatProgram& p, const std::string& label,
                            const std::string& format_name) {
  return expand(p.label_template, {{"label", apply_casing(label, p.label_casing)}}, format_name);
}

const QueryFormatProgram& require_query_format(const FormatSpec& qf) {
  if (qf.kind != ComponentKind::QueryFormat)
    fail(Errc::WrongKind, "'" + qf.name + "' is not a QueryFormat");
  return qf.query_program();
}

std::string first_line(const std::string& text) {
  std::size_t nl = text.find('\n');
  return nl == std::string::npos ? text : text.substr(0, nl);
}

/// Pulls the trailing numeric answer out of the text following the marker.
std::string trailing_number(const std::string& tail) {
  std::string t = trim(tail);
  if (!t.empty() && t.front() == ':') t = ltrim(t.substr(1));
  if (!t.empty() && t.back() == '.') t = rtrim(t.substr(0, t.size() - 1));
  // Strip decoration common in math outputs.
  t = replace_all(t, "\\boxed{", "");
  t = replace_all(t, "$", "");
  t = replace_all(t, ",", "");
  while (!t.empty() && t.back() == '}') t.pop_back();
  std::string number;
  for (char c : t) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isdigit(u) || c == '-' || c == '.' || c == '/') {
      number.push_back(c);
    } else if (!number.empty()) {
      break;
    }
  }
  if (number.empty()) return trim(t);
  return number;
}

FormatSpec make_query_format(std::string name, std::string description, QueryFormatProgram program) {
  FormatSpec spec;
  spec.name = std::move(name);
  spec.kind = ComponentKind::QueryFormat;
  spec.description = std::move(description);
  spec.program = std::move(program);
  return spec;
}

FormatSpec make_renderer(std::string name, std::string description, RendererProgram program) {
  FormatSpec spec;
  spec.name = std::move(name);
  spec.kind = ComponentKind::PromptRenderer;
  spec.description = std::move(description);
  spec.program = std::move(program);
  return spec;
}

std::map<ComponentKind, std::string> section_headings() {
  return {{ComponentKind::TaskInstruction, "Task Instruction"},
          {ComponentKind::TaskDetail, "Task Detail"},
          {ComponentKind::OutputFormat, "Output Format"},
          {ComponentKind::FewShotExamples, "Examples"},
          {ComponentKind::Query, "Query"}};
}

}  // namespace

bool is_content_kind(ComponentKind kind) {
  return kind != ComponentKind::PromptRenderer && kind != ComponentKind::QueryFormat;
}

const char* component_name(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::TaskInstruction: return "TASK INSTRUCTION";
    case ComponentKind::TaskDetail: return "TASK DETAIL";
    case ComponentKind::OutputFormat: return "OUTPUT FORMAT";
    case ComponentKind::FewShotExamples: return "EXAMPLES";
    case ComponentKind::Query: return "QUERY";
    case ComponentKind::PromptRenderer: return "PROMPT RENDERER";
    case ComponentKind::QueryFormat: return "QUERY FORMAT";
  }
  return "UNKNOWN";
}

std::optional<ComponentKind> parse_component_name(const std::string& name) {
  const std::string key = normalize_segment_key(name);
  if (key == "taskinstruction" || key == "instruction") return ComponentKind::TaskInstruction;
  if (key == "taskdetail" || key == "detail") return ComponentKind::TaskDetail;
  if (key == "outputformat") return ComponentKind::OutputFormat;
  if (key == "examples" || key == "fewshotexamples" || key == "example")
    return ComponentKind::FewShotExamples;
  if (key == "query") return ComponentKind::Query;
  return std::nullopt;
}

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Classification: return "classification";
    case TaskKind::MultipleChoice: return "multiple_choice";
    case TaskKind::Reasoning: return "reasoning";
  }
  return "unknown";
}

std::optional<TaskKind> parse_task_kind(const std::string& name) {
  const std::string key = normalize_segment_key(name);
  if (key == "classification") return TaskKind::Classification;
  if (key == "multiplechoice") return TaskKind::MultipleChoice;
  if (key == "reasoning") return TaskKind::Reasoning;
  return std::nullopt;
}

void validate_example(const Example& example) {
  if (trim(example.question).empty())
    fail(Errc::InvalidExample, "example question is empty");
  if (trim(example.answer).empty())
    fail(Errc::InvalidExample, "example answer is empty");
}

const std::string& component_text(const ContentState& content, ComponentKind kind) {
  switch (kind) {
    case ComponentKind::TaskInstruction: return content.task_instruction;
    case ComponentKind::TaskDetail: return content.task_detail;
    case ComponentKind::OutputFormat: return content.output_format;
    default: break;
  }
  fail(Errc::WrongKind, std::string("no text field for component ") + component_name(kind));
}

ContentState with_component(ContentState content, ComponentKind kind, std::string text) {
  switch (kind) {
    case ComponentKind::TaskInstruction: content.task_instruction = std::move(text); break;
    case ComponentKind::TaskDetail: content.task_detail = std::move(text); break;
    case ComponentKind::OutputFormat: content.output_format = std::move(text); break;
    default: fail(Errc::WrongKind, std::string("cannot set text on ") + component_name(kind));
  }
  return content;
}

std::string content_fingerprint(const ContentState& content) {
  std::uint64_t h = kFnvOffset;
  auto mix = [&h](std::string_view part) {
    h = fnv1a(part, h);
    h = fnv1a("\x1f", h);
  };
  mix(content.task_instruction);
  mix(content.task_detail);
  mix(content.output_format);
  for (const Example& e : content.examples) {
    mix(e.question);
    mix(e.answer);
  }
  mix(content.query_slot);
  return to_hex(h);
}

const char* casing_name(Casing casing) {
  switch (casing) {
    case Casing::None: return "none";
    case Casing::Upper: return "upper";
    case Casing::Lower: return "lower";
    case Casing::Title: return "title";
  }
  return "none";
}

std::optional<Casing> parse_casing(const std::string& name) {
  const std::string key = to_lower(trim(name));
  if (key == "none" || key.empty()) return Casing::None;
  if (key == "upper") return Casing::Upper;
  if (key == "lower") return Casing::Lower;
  if (key == "title") return Casing::Title;
  return std::nullopt;
}

std::string apply_casing(const std::string& text, Casing casing) {
  switch (casing) {
    case Casing::None: return text;
    case Casing::Upper: return to_upper(text);
    case Casing::Lower: return to_lower(text);
    case Casing::Title: return title_case(text);
  }
  return text;
}

const char* extraction_strategy_name(ExtractionStrategy s) {
  switch (s) {
    case ExtractionStrategy::DirectMatch: return "direct_match";
    case ExtractionStrategy::LabelScan: return "label_scan";
    case ExtractionStrategy::Pattern: return "pattern";
  }
  return "label_scan";
}

std::optional<ExtractionStrategy> parse_extraction_strategy(const std::string& name) {
  const std::string key = to_lower(trim(name));
  if (key == "direct_match") return ExtractionStrategy::DirectMatch;
  if (key == "label_scan" || key.empty()) return ExtractionStrategy::LabelScan;
  if (key == "pattern") return ExtractionStrategy::Pattern;
  return std::nullopt;
}

const QueryFormatProgram& FormatSpec::query_program() const {
  const auto* p = std::get_if<QueryFormatProgram>(&program);
  if (p == nullptr) fail(Errc::WrongKind, "'" + name + "' has no query format program");
  return *p;
}

const RendererProgram& FormatSpec::renderer_program() const {
  const auto* p = std::get_if<RendererProgram>(&program);
  if (p == nullptr) fail(Errc::WrongKind, "'" + name + "' has no renderer program");
  return *p;
}

bool valid_format_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    unsigned char u = static_cast<unsigned char>(c);
    if (!std::isalnum(u) && c != '_') return false;
  }
  return true;
}

std::string render_query(const Example& example, const FormatSpec& qf) {
  const QueryFormatProgram& p = require_query_format(qf);
  validate_example(example);
  return decorated_label(p, p.question_label, qf.name) + example.question + p.qa_separator +
         decorated_label(p, p.answer_label, qf.name) + example.answer;
}

std::string render_query(const std::string& question, const FormatSpec& qf) {
  const QueryFormatProgram& p = require_query_format(qf);
  if (trim(question).empty()) fail(Errc::InvalidExample, "query question is empty");
  return decorated_label(p, p.question_label, qf.name) + question + p.qa_separator +
         rtrim(decorated_label(p, p.answer_label, qf.name));
}

RenderedPrompt render_prompt(const ContentState& content, const FormatSpec& pr, const FormatSpec& qf,
                             const std::optional<std::string>& query) {
  if (pr.kind != ComponentKind::PromptRenderer)
    fail(Errc::WrongKind, "'" + pr.name + "' is not a PromptRenderer");
  require_query_format(qf);
  const RendererProgram& rp = pr.renderer_program();

  auto heading_for = [&rp](ComponentKind kind) -> std::string {
    auto it = rp.headings.find(kind);
    if (it != rp.headings.end()) return it->second;
    auto defaults = section_headings();
    return defaults.at(kind);
  };

  std::vector<std::string> sections;
  for (ComponentKind kind : kContentOrder) {
    std::string body;
    switch (kind) {
      case ComponentKind::FewShotExamples: {
        const QueryFormatProgram& qp = qf.query_program();
        for (std::size_t i = 0; i < content.examples.size(); ++i) {
          if (i > 0) body += qp.block_separator;
          body += render_query(content.examples[i], qf);
        }
        break;
      }
      case ComponentKind::Query:
        body = query.has_value() ? render_query(*query, qf) : content.query_slot;
        break;
      default:
        body = component_text(content, kind);
        break;
    }
    if (body.empty()) continue;
    sections.push_back(expand(rp.section_template, {{"heading", heading_for(kind)}, {"body", body}}, pr.name));
  }

  RenderedPrompt out;
  std::string text;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i > 0) text += rp.joiner;
    text += sections[i];
  }
  out.text = std::move(text);
  out.renderer_name = pr.name;
  out.query_format_name = qf.name;
  out.content_fingerprint = content_fingerprint(content);
  return out;
}

std::string extract_answer(const std::string& raw_output, const FormatSpec& qf, TaskKind task) {
  const QueryFormatProgram& p = require_query_format(qf);

  std::string region = raw_output;
  if (p.extraction.strategy == ExtractionStrategy::LabelScan) {
    const std::string full = decorated_label(p, p.answer_label, qf.name);
    const std::string anchored = p.qa_separator + full;
    std::size_t pos = raw_output.find(anchored);
    if (pos != std::string::npos) {
      region = raw_output.substr(pos + anchored.size());
    } else if ((pos = raw_output.find(full)) != std::string::npos) {
      region = raw_output.substr(pos + full.size());
    } else {
      const std::string bare = rtrim(full);
      pos = raw_output.find(bare);
      if (pos != std::string::npos) region = ltrim(raw_output.substr(pos + bare.size()));
    }
  }

  if (task == TaskKind::Reasoning || p.extraction.strategy == ExtractionStrategy::Pattern) {
    const std::string marker =
        p.extraction.marker.empty() ? kDefaultReasoningMarker : p.extraction.marker;
    std::size_t pos = region.rfind(marker);
    if (pos == std::string::npos)
      fail(Errc::NoAnswerFound, "marker '" + marker + "' not found in output");
    std::string answer = trailing_number(region.substr(pos + marker.size()));
    if (answer.empty()) fail(Errc::NoAnswerFound, "no value after marker");
    return answer;
  }

  std::string answer = trim(first_line(ltrim(region)));
  if (answer.empty()) fail(Errc::NoAnswerFound, "empty answer region");
  return answer;
}

std::vector<FormatSpec> builtin_formats() {
  std::vector<FormatSpec> out;

  // --- Prompt renderers ---
  out.push_back(make_renderer("Directly_Joint",
                              "Plain sections joined by blank lines, no headings.",
                              {.section_template = "{body}", .joiner = "\n\n", .headings = {}}));
  out.push_back(make_renderer(
      "Markdown_Sections", "Markdown second-level headings per section.",
      {.section_template = "## {heading}\n{body}", .joiner = "\n\n", .headings = {}}));
  out.push_back(make_renderer(
      "Concise_Bullet_Points", "One dash-prefixed bullet per section.",
      {.section_template = "- {heading}: {body}", .joiner = "\n\n", .headings = {}}));
  out.push_back(make_renderer(
      "Tabular_Sections", "Two-column table row per section.",
      {.section_template = "| {heading} | {body} |", .joiner = "\n", .headings = {}}));
  out.push_back(make_renderer(
      "Checklist_Sections", "Checklist item with bold heading per section.",
      {.section_template = "- [ ] **{heading}**\n{body}", .joiner = "\n\n", .headings = {}}));

  // --- Query formats ---
  out.push_back(make_query_format(
      "QA", "Short Q/A labels separated by blank lines.",
      {.question_label = "Q", .answer_label = "A", .label_casing = Casing::None,
       .label_template = "{label}: ", .qa_separator = "\n\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "Question_Answer", "Full Question/Answer labels, answer on the next line.",
      {.question_label = "Question", .answer_label = "Answer", .label_casing = Casing::None,
       .label_template = "{label}: ", .qa_separator = "\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "Instruction_Response", "Markdown instruction/response headers.",
      {.question_label = "Instruction", .answer_label = "Response", .label_casing = Casing::None,
       .label_template = "### {label}:\n", .qa_separator = "\n\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "Input_Output", "Input/Output labels on consecutive lines.",
      {.question_label = "Input", .answer_label = "Output", .label_casing = Casing::None,
       .label_template = "{label}: ", .qa_separator = "\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "MultiChoice_QA", "Question/Answer labels for multiple-choice queries with inline options.",
      {.question_label = "Question", .answer_label = "Answer", .label_casing = Casing::None,
       .label_template = "{label}: ", .qa_separator = "\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "QA_Brackets_Colon_Newline", "Bracketed labels with colon, body on the next line.",
      {.question_label = "Question", .answer_label = "Answer", .label_casing = Casing::None,
       .label_template = "[{label}]:\n", .qa_separator = "\n\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "QA_CapsBold_ColonNewline", "Bold uppercase labels with colon, body on the next line.",
      {.question_label = "Question", .answer_label = "Answer", .label_casing = Casing::Upper,
       .label_template = "**{label}**:\n", .qa_separator = "\n\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "QA_Titlecase_Separator", "Title-cased labels separated from the body by double bars.",
      {.question_label = "Question", .answer_label = "Answer", .label_casing = Casing::Title,
       .label_template = "{label} || ", .qa_separator = "\n", .block_separator = "\n\n"}));
  out.push_back(make_query_format(
      "Highlight_Separator_Case", "Uppercase labels with an angle-bracket separator.",
      {.question_label = "Question", .answer_label = "Answer", .label_casing = Casing::Upper,
       .label_template = "{label} > ", .qa_separator = "\n", .block_separator = "\n\n"}));

  return out;
}

const FormatSpec& find_format(const std::vector<FormatSpec>& formats, const std::string& name) {
  for (const FormatSpec& spec : formats) {
    if (spec.name == name) return spec;
  }
  fail(Errc::UnknownFormat, "no format named '" + name + "'");
}

}  // namespace cfpo
