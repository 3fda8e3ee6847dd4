#include "cfpo/templates.hpp"

#include "cfpo/errors.hpp"
#include "cfpo/util.hpp"

#include <cctype>
#include <filesystem>
#include <set>

namespace cfpo::templates {

namespace {

const char* kHeaderText =
    R"(I'm trying to write a prompt to [TASK INTENTION].
The current prompt consists of several key components, including:
[DESCRIPTION OF COMPONENTS]

The complete prompt is as follows:
"""[CURRENT PROMPT]""")";

const char* kDiagnosisText =
    R"([META PROMPT HEADER]

Upon evaluating the current prompt, this prompt gets the following examples wrong:
[INCORRECT CASES]

Meanwhile, this prompt gets the following examples correct:
[CORRECT CASES]

Please review the provided examples of correct and incorrect answers, and identify [NUM OF DIAGNOSED COMPONENTS] specific area for improvement in the prompts. Each suggestion should focus on A SPECIFIC segment of the prompt that needs optimization. For each suggestion, provide a comprehensive explanation that encapsulates all the evaluation results. If you believe the EXAMPLES segment needs improvement, you may suggest one example that can be added, removed, or altered to enhance the EXAMPLES segment based on the examples given. If you think there is no need for improvement, do not return any prompt segment.
Please encapsulate each suggestion using the following format:

<START>
<Prompt segment: [Segment name]>
[Suggestion goes here]
<END>)";

const char* kFeedbackText =
    R"([META PROMPT HEADER]

The existing [COMPONENT NAME] segment contains:
[CURRENT CONTENT FOR THE COMPONENT]

Here are some suggestions for improving the [COMPONENT NAME] segments:
[GENERATED DIAGNOSES]

Based on the above information, I wrote [NUMBER OF GENERATED CONTENT] distinct and improved versions of the [COMPONENT NAME] segment within the prompt.
Each revised segment is encapsulated between <START> and <END>. In case this segment is an empty string, generate a suitable one referring to the suggestion.
The [NUMBER OF GENERATED CONTENT] revised [COMPONENT NAME] segments are:)";

const char* kFeedbackExamplesText =
    R"([META PROMPT HEADER]

The existing EXAMPLES segment contains:
[CURRENT IN-CONTEXT EXAMPLES IN PROMPT]

Here are some suggestions for enhancing the EXAMPLES segment:
[GENERATED DIAGNOSES]

Based on the above information, I have crafted [NUMBER OF GENERATED EXAMPLES] improved version of the EXAMPLES segment within the prompt. Each revision represents ONLY ONE of the following specific actions:
1. Addition: Incorporating one new example into the existing set.
2. Deletion: Eliminating one single example from the current set.
3. Modification: Changing the content of an example while maintaining its contextual relevance.
Each example consists of a line starting with "Question:" and a line starting with "Answer:". Please present the results without indicating which action was taken. Each refined EXAMPLES segment is marked by <START> and <END>.

The [NUMBER OF GENERATED EXAMPLES] revised EXAMPLES are:)";

const char* kMonteCarloText =
    R"([META PROMPT HEADER]

Please create a different version of [COMPONENT NAME] segment without changing its semantic meaning. In case this segment is an empty string, generate a suitable one. The existing [COMPONENT NAME] segment contains:
[CURRENT CONTENT FOR THE COMPONENT]

The varied [COMPONENT NAME] segment is as follows:)";

const char* kMonteCarloExamplesText =
    R"([META PROMPT HEADER]

The existing EXAMPLE set contains:
[CURRENT IN-CONTEXT EXAMPLES IN PROMPT]

Please generate a variation of the EXAMPLES set within the prompt while keeping the semantic meaning. The revision should represent ONLY ONE of the following specific actions:
1. Addition: Incorporating one new example into the existing set.
2. Deletion: Eliminating one single example from the current set.
3. Modification: Changing the content of an example while maintaining its contextual relevance.
Each example consists of a line starting with "Question:" and a line starting with "Answer:". Please present the results without indicating which action was taken. The varied EXAMPLES segment is as follows:)";

const char* kFormatDescribeQueryText =
    R"([META PROMPT HEADER]

We have some preset QUERY_FORMAT candidates, here are our whole search pool:
[ALL EXISTING QUERY FORMATS DESCRIPTION]

Here are two examples from our QUERY_FORMAT candidates as for your reference:
<Format name: Question-Answer>
[RENDERED EXAMPLE 1]

<Format name: Instruction-Response>
[RENDERED EXAMPLE 2]

Please generate ONE new format for the QUERY_FORMAT segment, its description and render the provided example using this new format. The new format could either be a completely new format or a variation of an existing format.

If you choose to generate a completely new format, please ensure that the new format is conventional, structured, and aligned with commonly used query formats. Avoid overly creative or unconventional formats that deviate significantly from standard practices. The new format should be distinct from the existing formats.

The variation can focus on two parts, CASING and SEPARATOR:

CASING refers to both the capitalization of the text (e.g., f(x) = x.title(), f(x) = x.upper(), f(x) = x.lower()) and the specific wording or phrasing used (e.g., changing "question" to "instruction" or "input").

SEPARATOR: the punctuation or symbols used to separate the question and answer, there are some candidates as for your reference {'', ' ', '\n', '--', ';\n', ' ||', '<sep>', ' \n', ':', '.'}.

Note that focus solely on the format itself without altering the content of the question and answer. The format should remain focused on the existing structure (e.g., Question/Answer or Instruction/Response) without modifying the content or introducing any new sections. Avoid the use of underlines or any unconventional formatting styles among words. The format name should only include alphanumeric characters and underscores. Special characters such as `|`, `!`, `#`, `@`, and spaces should be avoided.

Please encapsulate the new query format using the following format:

<START>
<Format name: [format name]>
<Description: [format description]>
[The example rendered by the newly generated format]
<END>)";

const char* kFormatDescribeRendererText =
    R"([META PROMPT HEADER]

We have some preset PROMPT_RENDERER candidates, here are our whole search pool:
[ALL EXISTING PROMPT RENDERERS DESCRIPTION]

Here are two examples from our PROMPT_RENDERER candidates as for your reference:
<Format name: Directly-Joint>
[RENDERED EXAMPLE 1]

<Format name: Markdown-Sections>
[RENDERED EXAMPLE 2]

Please generate ONE new format for the PROMPT_RENDERER segment, its description and render the provided sections using this new format. The PROMPT_RENDERER aggregates the prompt sections (such as Task Instruction, Task Detail, Examples and Query) into the final prompt string. The new format could either be a completely new format or a variation of an existing format, varying the section heading decoration or the separator between sections.

Note that focus solely on the format itself without altering the content of the sections. The format name should only include alphanumeric characters and underscores. Special characters such as `|`, `!`, `#`, `@`, and spaces should be avoided.

Please encapsulate the new format using the following format:

<START>
<Format name: [format name]>
<Description: [format description]>
[The sections rendered by the newly generated format]
<END>)";

const char* kFormatFieldsQueryText =
    R"([META PROMPT HEADER]

We have some preset QUERY_FORMAT candidates, here are our whole search pool:
[ALL EXISTING QUERY FORMATS DESCRIPTION]

Here are two field definitions from our QUERY_FORMAT candidates as for your reference:
<Format name: Question-Answer>
[REFERENCE FIELDS 1]

<Format name: Instruction-Response>
[REFERENCE FIELDS 2]

Here is the example rendered by the new format:
[RENDERED RESULTS]

Please generate the field definition of the new QUERY_FORMAT so it reproduces the rendered example exactly. The field definition is a single JSON object with the keys "question_label", "answer_label", "casing" (one of none, upper, lower, title), "label_template" (must contain the placeholder {label}), "qa_separator" and "block_separator". Output the JSON object directly without any Markdown syntax or language identifiers.

Please encapsulate the field definition using the following format:

<START>
<Format name: [FORMAT NAME]>
<Description: [FORMAT DESCRIPTION]>
[The JSON field definition]
<END>)";

const char* kFormatFieldsRendererText =
    R"([META PROMPT HEADER]

We have some preset PROMPT_RENDERER candidates, here are our whole search pool:
[ALL EXISTING PROMPT RENDERERS DESCRIPTION]

Here are two field definitions from our PROMPT_RENDERER candidates as for your reference:
<Format name: Directly-Joint>
[REFERENCE FIELDS 1]

<Format name: Markdown-Sections>
[REFERENCE FIELDS 2]

Here is the example rendered by the new format:
[RENDERED RESULTS]

Please generate the field definition of the new PROMPT_RENDERER so it reproduces the rendered example exactly. The field definition is a single JSON object with the keys "section_template" (may use the placeholders {heading} and {body}) and "joiner". Output the JSON object directly without any Markdown syntax or language identifiers.

Please encapsulate the field definition using the following format:

<START>
<Format name: [FORMAT NAME]>
<Description: [FORMAT DESCRIPTION]>
[The JSON field definition]
<END>)";

bool is_placeholder_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return (std::isupper(u) != 0) || (std::isdigit(u) != 0) || c == ' ' || c == '_' || c == '-';
}

}  // namespace

std::vector<std::string> scan_placeholders(const std::string& text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string::npos) {
    std::size_t close = text.find(']', pos);
    if (close == std::string::npos) break;
    std::string inner = text.substr(pos + 1, close - pos - 1);
    bool all_caps = !inner.empty() && std::isupper(static_cast<unsigned char>(inner.front()));
    for (char c : inner) all_caps = all_caps && is_placeholder_char(c);
    if (all_caps && seen.insert(inner).second) out.push_back(inner);
    pos = close + 1;
  }
  return out;
}

Store::Store() {
  texts_ = {
      {kHeader, kHeaderText},
      {kDiagnosis, kDiagnosisText},
      {kFeedback, kFeedbackText},
      {kFeedbackExamples, kFeedbackExamplesText},
      {kMonteCarlo, kMonteCarloText},
      {kMonteCarloExamples, kMonteCarloExamplesText},
      {kFormatDescribeQuery, kFormatDescribeQueryText},
      {kFormatDescribeRenderer, kFormatDescribeRendererText},
      {kFormatFieldsQuery, kFormatFieldsQueryText},
      {kFormatFieldsRenderer, kFormatFieldsRendererText},
  };
}

void Store::load_overrides(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(Errc::IoError, "template directory not found: " + dir);
  for (auto& [name, text] : texts_) {
    fs::path candidate = fs::path(dir) / (name + ".txt");
    if (fs::is_regular_file(candidate)) text = read_file(candidate.string());
  }
}

const std::string& Store::text(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) fail(Errc::ConfigError, "unknown template '" + name + "'");
  return it->second;
}

std::vector<std::string> Store::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : texts_) out.push_back(name);
  return out;
}

std::string Store::render(const std::string& name, const std::map<std::string, std::string>& bindings) const {
  std::string out = text(name);
  for (const std::string& placeholder : scan_placeholders(out)) {
    auto it = bindings.find(placeholder);
    if (it == bindings.end())
      fail(Errc::ConfigError, "unbound placeholder [" + placeholder + "] in template '" + name + "'");
    out = replace_all(std::move(out), "[" + placeholder + "]", it->second);
  }
  return out;
}

std::vector<std::string> Store::placeholders(const std::string& name) const {
  return scan_placeholders(text(name));
}

const Store& Store::defaults() {
  static const Store store;
  return store;
}

}  // namespace cfpo::templates
