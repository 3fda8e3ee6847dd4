#pragma once

/**
 * Meta-prompt templates used by the content and format optimizers.
 *
 * Templates are plain text with [ALL CAPS] placeholders. The default set is
 * compiled in; individual templates can be overridden from a directory of
 * .txt files named after the template. Rendering fails on any placeholder
 * left unbound, and a lint helper lists the placeholders of each template
 * so the test suite can verify every one is bindable.
 */

#include <map>
#include <string>
#include <vector>

namespace cfpo::templates {

inline constexpr const char* kHeader = "meta_header";
inline constexpr const char* kDiagnosis = "case_diagnosis";
inline constexpr const char* kFeedback = "apply_feedback";
inline constexpr const char* kFeedbackExamples = "apply_feedback_examples";
inline constexpr const char* kMonteCarlo = "monte_carlo";
inline constexpr const char* kMonteCarloExamples = "monte_carlo_examples";
inline constexpr const char* kFormatDescribeQuery = "format_describe_query";
inline constexpr const char* kFormatDescribeRenderer = "format_describe_renderer";
inline constexpr const char* kFormatFieldsQuery = "format_fields_query";
inline constexpr const char* kFormatFieldsRenderer = "format_fields_renderer";

class Store {
 public:
  Store();

  /// Replaces defaults with <name>.txt files found under `dir` (best-effort;
  /// files for unknown names are ignored).
  void load_overrides(const std::string& dir);

  const std::string& text(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Substitutes every [PLACEHOLDER] with its binding; throws
  /// MalformedResponse-free ConfigError when a placeholder is unbound.
  std::string render(const std::string& name, const std::map<std::string, std::string>& bindings) const;

  /// All [ALL CAPS] placeholders appearing in the named template.
  std::vector<std::string> placeholders(const std::string& name) const;

  static const Store& defaults();

 private:
  std::map<std::string, std::string> texts_;
};

/// Extracts [ALL CAPS] placeholder names from raw template text.
std::vector<std::string> scan_placeholders(const std::string& text);

}  // namespace cfpo::templates
