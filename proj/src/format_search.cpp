#include "cfpo/format_search.hpp"

#include "cfpo/meta.hpp"
#include "cfpo/util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cfpo {

namespace {

std::string strip_outer_newlines(const std::string& text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && (text[begin] == '\n' || text[begin] == '\r')) ++begin;
  while (end > begin && (text[end - 1] == '\n' || text[end - 1] == '\r')) --end;
  return text.substr(begin, end - begin);
}

/// Extracts the single <START>...<END> block of a generation response.
std::string single_block(const std::string& response) {
  const std::string kStart = "<START>";
  const std::string kEnd = "<END>";
  std::size_t s = response.find(kStart);
  if (s == std::string::npos) fail(Errc::MalformedResponse, "no <START> block");
  std::size_t e = response.find(kEnd, s);
  if (e == std::string::npos) fail(Errc::MalformedResponse, "unterminated <START> block");
  if (response.find(kStart, s + kStart.size()) != std::string::npos)
    fail(Errc::MalformedResponse, "more than one <START> block");
  return strip_outer_newlines(response.substr(s + kStart.size(), e - s - kStart.size()));
}

/// Reads a `<Tag: value>` line at the head of `block`, advancing it.
std::string take_tag_line(std::string& block, const std::string& tag) {
  const std::string prefix = "<" + tag + ":";
  if (!starts_with(block, prefix)) fail(Errc::MalformedResponse, "expected <" + tag + ": ...>");
  std::size_t close = block.find('>');
  if (close == std::string::npos) fail(Errc::MalformedResponse, "unterminated tag " + tag);
  std::string value = trim(block.substr(prefix.size(), close - prefix.size()));
  std::size_t next = close + 1;
  if (next < block.size() && block[next] == '\n') ++next;
  block = block.substr(next);
  return value;
}

nlohmann::ordered_json query_fields_json(const QueryFormatProgram& p) {
  return {{"question_label", p.question_label},
          {"answer_label", p.answer_label},
          {"casing", casing_name(p.label_casing)},
          {"label_template", p.label_template},
          {"qa_separator", p.qa_separator},
          {"block_separator", p.block_separator}};
}

nlohmann::ordered_json renderer_fields_json(const RendererProgram& p) {
  nlohmann::ordered_json j = {{"section_template", p.section_template}, {"joiner", p.joiner}};
  if (!p.headings.empty()) {
    auto& h = j["headings"];
    h = nlohmann::ordered_json::object();
    for (const auto& [kind, heading] : p.headings) h[component_name(kind)] = heading;
  }
  return j;
}

std::string pool_catalog_text(const FormatPool& pool, ComponentKind kind) {
  std::ostringstream out;
  for (const FormatPoolEntry* entry : pool.entries(kind)) {
    out << "- " << entry->spec.name << ": " << entry->spec.description;
    if (entry->n > 0) {
      out << " (mean score " << entry->q / static_cast<double>(entry->n) << ", visits " << entry->n
          << ")";
    } else {
      out << " (unvisited)";
    }
    out << "\n";
  }
  return rtrim(out.str());
}

/// Small fixed content used to demonstrate renderer programs.
std::pair<ContentState, std::string> renderer_demo(const Example& sample) {
  ContentState content;
  content.task_instruction = "Answer the presented question.";
  content.task_detail = "Work through the question step by step before answering.";
  content.examples = {sample};
  return {content, sample.question};
}

const FormatSpec& builtin(const std::string& name) {
  static const std::vector<FormatSpec> catalog = builtin_formats();
  return find_format(catalog, name);
}

std::string reference_rendering(ComponentKind kind, const Example& sample, int index) {
  if (kind == ComponentKind::QueryFormat) {
    return render_query(sample, builtin(index == 0 ? "Question_Answer" : "Instruction_Response"));
  }
  auto [content, query] = renderer_demo(sample);
  const FormatSpec& pr = builtin(index == 0 ? "Directly_Joint" : "Markdown_Sections");
  return render_prompt(content, pr, builtin("Question_Answer"), query).text;
}

std::string reference_fields(ComponentKind kind, int index) {
  if (kind == ComponentKind::QueryFormat) {
    const FormatSpec& spec = builtin(index == 0 ? "Question_Answer" : "Instruction_Response");
    return query_fields_json(spec.query_program()).dump(2);
  }
  const FormatSpec& spec = builtin(index == 0 ? "Directly_Joint" : "Markdown_Sections");
  return renderer_fields_json(spec.renderer_program()).dump(2);
}

}  // namespace

double uct_score(const FormatPoolEntry& entry, long total_visits, double alpha) {
  if (entry.n < 1) fail(Errc::UnvisitedEntry, "uct_score on unvisited format '" + entry.spec.name + "'");
  if (total_visits < entry.n) fail(Errc::MetricOutOfRange, "total_visits below entry visits");
  const double n = static_cast<double>(entry.n);
  return entry.q / n + alpha * std::sqrt(static_cast<double>(total_visits) / n);
}

FormatPool::FormatPool(double alpha) : alpha_(alpha) {
  if (alpha < 0.0) fail(Errc::ConfigError, "alpha must be >= 0");
}

void FormatPool::add(FormatSpec spec, double q, long n) {
  if (!valid_format_name(spec.name))
    fail(Errc::MalformedResponse, "format name '" + spec.name + "' fails hygiene");
  if (contains(spec.kind, spec.name))
    fail(Errc::MalformedResponse, "duplicate format name '" + spec.name + "'");
  if (n < 0 || q < 0.0 || q > static_cast<double>(n) + 1e-12)
    fail(Errc::MetricOutOfRange, "pool entry must satisfy 0 <= Q <= N");
  entries_.push_back(FormatPoolEntry{std::move(spec), q, n});
}

bool FormatPool::contains(ComponentKind kind, const std::string& name) const {
  for (const FormatPoolEntry& e : entries_)
    if (e.spec.kind == kind && e.spec.name == name) return true;
  return false;
}

const FormatPoolEntry& FormatPool::entry(ComponentKind kind, const std::string& name) const {
  for (const FormatPoolEntry& e : entries_)
    if (e.spec.kind == kind && e.spec.name == name) return e;
  fail(Errc::UnknownFormat, "no pool entry named '" + name + "'");
}

const FormatSpec& FormatPool::spec(ComponentKind kind, const std::string& name) const {
  return entry(kind, name).spec;
}

FormatPoolEntry& FormatPool::mutable_entry(const std::string& name) {
  for (FormatPoolEntry& e : entries_)
    if (e.spec.name == name) return e;
  fail(Errc::UnknownFormat, "no pool entry named '" + name + "'");
}

void FormatPool::update(const std::string& name, double m) {
  if (m < 0.0 || m > 1.0) fail(Errc::MetricOutOfRange, "metric value outside [0,1]");
  FormatPoolEntry& e = mutable_entry(name);
  e.q += m;
  e.n += 1;
}

std::vector<const FormatPoolEntry*> FormatPool::entries(ComponentKind kind) const {
  std::vector<const FormatPoolEntry*> out;
  for (const FormatPoolEntry& e : entries_)
    if (e.spec.kind == kind) out.push_back(&e);
  return out;
}

long FormatPool::total_visits(ComponentKind kind) const {
  long total = 0;
  for (const FormatPoolEntry& e : entries_)
    if (e.spec.kind == kind) total += e.n;
  return total;
}

nlohmann::ordered_json FormatPool::to_json() const {
  nlohmann::ordered_json j;
  j["alpha"] = alpha_;
  auto& entries = j["entries"];
  entries = nlohmann::ordered_json::array();
  for (const FormatPoolEntry& e : entries_) {
    nlohmann::ordered_json ej = format_spec_to_json(e.spec);
    ej["q"] = e.q;
    ej["n"] = e.n;
    entries.push_back(std::move(ej));
  }
  return j;
}

FormatPool FormatPool::from_json(const nlohmann::json& j) {
  FormatPool pool(j.value("alpha", 1e-3));
  for (const auto& ej : j.at("entries")) {
    pool.add(format_spec_from_json(ej), ej.value("q", 0.0), ej.value("n", 0L));
  }
  return pool;
}

FormatPool seeded_pool(double alpha) {
  FormatPool pool(alpha);
  for (FormatSpec& spec : builtin_formats()) pool.add(std::move(spec));
  return pool;
}

std::vector<FormatSpec> select_top_k(const FormatPool& pool, ComponentKind kind, int k) {
  if (k < 1) fail(Errc::ConfigError, "k must be >= 1");
  std::vector<const FormatPoolEntry*> visited;
  for (const FormatPoolEntry* e : pool.entries(kind))
    if (e->n >= 1) visited.push_back(e);
  if (visited.empty()) fail(Errc::EmptyPool, "no visited entries of requested kind");

  const long total = pool.total_visits(kind);
  const double alpha = pool.alpha();
  std::stable_sort(visited.begin(), visited.end(),
                   [&](const FormatPoolEntry* a, const FormatPoolEntry* b) {
                     const double ua = uct_score(*a, total, alpha);
                     const double ub = uct_score(*b, total, alpha);
                     if (ua != ub) return ua > ub;
                     if (a->n != b->n) return a->n < b->n;
                     return a->spec.name < b->spec.name;
                   });

  std::vector<FormatSpec> out;
  for (std::size_t i = 0; i < std::min<std::size_t>(visited.size(), static_cast<std::size_t>(k)); ++i)
    out.push_back(visited[i]->spec);
  return out;
}

std::string build_format_generation_prompt(const FormatPool& pool, const Example& sample,
                                           FormatGenStep step, ComponentKind kind,
                                           const std::string& task_intention,
                                           const GeneratedFormatProposal* proposal) {
  if (pool.entries(kind).empty()) fail(Errc::EmptyPool, "format generation needs a non-empty pool");
  validate_example(sample);
  const bool query_kind = kind == ComponentKind::QueryFormat;

  MetaContext ctx;
  ctx.task_intention = task_intention;
  ctx.current_prompt = reference_rendering(kind, sample, 0);
  const std::string header = render_meta_header(ctx);
  const std::string catalog = pool_catalog_text(pool, kind);

  const auto& store = templates::Store::defaults();
  if (step == FormatGenStep::Describe) {
    const std::string name = query_kind ? templates::kFormatDescribeQuery : templates::kFormatDescribeRenderer;
    return store.render(name,
                        {{"META PROMPT HEADER", header},
                         {query_kind ? "ALL EXISTING QUERY FORMATS DESCRIPTION"
                                     : "ALL EXISTING PROMPT RENDERERS DESCRIPTION",
                          catalog},
                         {"RENDERED EXAMPLE 1", reference_rendering(kind, sample, 0)},
                         {"RENDERED EXAMPLE 2", reference_rendering(kind, sample, 1)}});
  }

  if (proposal == nullptr) fail(Errc::ConfigError, "field generation needs the step-one proposal");
  const std::string name = query_kind ? templates::kFormatFieldsQuery : templates::kFormatFieldsRenderer;
  return store.render(name,
                      {{"META PROMPT HEADER", header},
                       {query_kind ? "ALL EXISTING QUERY FORMATS DESCRIPTION"
                                   : "ALL EXISTING PROMPT RENDERERS DESCRIPTION",
                        catalog},
                       {"REFERENCE FIELDS 1", reference_fields(kind, 0)},
                       {"REFERENCE FIELDS 2", reference_fields(kind, 1)},
                       {"RENDERED RESULTS", proposal->rendered_sample},
                       {"FORMAT NAME", proposal->name},
                       {"FORMAT DESCRIPTION", proposal->description}});
}

GeneratedFormatProposal parse_format_proposal(const std::string& response) {
  std::string block = single_block(response);
  GeneratedFormatProposal proposal;
  proposal.name = take_tag_line(block, "Format name");
  proposal.description = take_tag_line(block, "Description");
  proposal.rendered_sample = strip_outer_newlines(block);
  if (!valid_format_name(proposal.name))
    fail(Errc::MalformedResponse, "format name '" + proposal.name + "' fails hygiene");
  return proposal;
}

nlohmann::json parse_format_fields(const std::string& response) {
  std::string block = single_block(response);
  take_tag_line(block, "Format name");
  take_tag_line(block, "Description");
  try {
    return nlohmann::json::parse(block);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::MalformedResponse, std::string("field definition is not valid JSON: ") + e.what());
  }
}

FormatSpec spec_from_fields(const std::string& name, const std::string& description,
                            ComponentKind kind, const nlohmann::json& fields) {
  if (!valid_format_name(name)) fail(Errc::MalformedResponse, "format name fails hygiene");
  FormatSpec spec;
  spec.name = name;
  spec.kind = kind;
  spec.description = description;
  try {
    if (kind == ComponentKind::QueryFormat) {
      QueryFormatProgram p;
      p.question_label = fields.at("question_label").get<std::string>();
      p.answer_label = fields.at("answer_label").get<std::string>();
      auto casing = parse_casing(fields.value("casing", "none"));
      if (!casing) fail(Errc::MalformedResponse, "unknown casing value");
      p.label_casing = *casing;
      p.label_template = fields.at("label_template").get<std::string>();
      if (p.label_template.find("{label}") == std::string::npos)
        fail(Errc::MalformedResponse, "label_template lacks the {label} placeholder");
      p.qa_separator = fields.at("qa_separator").get<std::string>();
      p.block_separator = fields.value("block_separator", "\n\n");
      if (fields.contains("extraction")) {
        const auto& ej = fields["extraction"];
        auto strategy = parse_extraction_strategy(ej.value("strategy", "label_scan"));
        if (!strategy) fail(Errc::MalformedResponse, "unknown extraction strategy");
        p.extraction.strategy = *strategy;
        p.extraction.marker = ej.value("marker", "");
      }
      spec.program = std::move(p);
    } else if (kind == ComponentKind::PromptRenderer) {
      RendererProgram p;
      p.section_template = fields.at("section_template").get<std::string>();
      p.joiner = fields.at("joiner").get<std::string>();
      if (fields.contains("headings")) {
        for (auto& [key, value] : fields["headings"].items()) {
          auto component = parse_component_name(key);
          if (!component) fail(Errc::MalformedResponse, "unknown heading component '" + key + "'");
          p.headings[*component] = value.get<std::string>();
        }
      }
      spec.program = std::move(p);
    } else {
      fail(Errc::WrongKind, "format specs are renderers or query formats");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::MalformedResponse, std::string("bad field definition: ") + e.what());
  }
  return spec;
}

namespace {

/// A proposal is admitted only if its DSL fields reproduce the claimed
/// rendering exactly and (for query formats) extraction round-trips.
void validate_candidate(const FormatSpec& spec, const GeneratedFormatProposal& proposal,
                        const Example& sample) {
  if (spec.kind == ComponentKind::QueryFormat) {
    const std::string rendered = render_query(sample, spec);
    if (!proposal.rendered_sample.empty() && rendered != proposal.rendered_sample)
      fail(Errc::MalformedResponse, "fields do not reproduce the proposed rendering");
    if (extract_answer(rendered, spec, TaskKind::Classification) != sample.answer)
      fail(Errc::MalformedResponse, "round-trip extraction failed for '" + spec.name + "'");
  } else {
    auto [content, query] = renderer_demo(sample);
    const std::string rendered =
        render_prompt(content, spec, builtin("Question_Answer"), query).text;
    if (!proposal.rendered_sample.empty() && rendered != proposal.rendered_sample)
      fail(Errc::MalformedResponse, "fields do not reproduce the proposed rendering");
  }
}

}  // namespace

std::vector<FormatSpec> generate_formats(FormatPool& pool, ComponentKind kind, int k,
                                         const Example& sample, const std::string& task_intention,
                                         Gateway& optimizer, FormatGenStats* stats) {
  if (k < 0) fail(Errc::ConfigError, "k must be >= 0");
  std::vector<FormatSpec> admitted;
  const GenerationParams params = optimizer_default_params();

  for (int i = 0; i < k; ++i) {
    bool added = false;
    // One retry per malformed generation response, then skip this slot.
    for (int attempt = 0; attempt < 2 && !added; ++attempt) {
      if (stats != nullptr) stats->attempted += 1;
      try {
        const std::string describe_prompt =
            build_format_generation_prompt(pool, sample, FormatGenStep::Describe, kind, task_intention);
        auto describe_res =
            optimizer.complete(oplabel::kGenFormat, {{"user", describe_prompt}}, params);
        GeneratedFormatProposal proposal = parse_format_proposal(describe_res.text);
        if (pool.contains(kind, proposal.name))
          fail(Errc::MalformedResponse, "duplicate format name '" + proposal.name + "'");

        const std::string fields_prompt = build_format_generation_prompt(
            pool, sample, FormatGenStep::Fields, kind, task_intention, &proposal);
        auto fields_res =
            optimizer.complete(oplabel::kGenFormatFields, {{"user", fields_prompt}}, params);
        proposal.dsl_fields = parse_format_fields(fields_res.text);

        FormatSpec spec = spec_from_fields(proposal.name, proposal.description, kind, *proposal.dsl_fields);
        validate_candidate(spec, proposal, sample);
        pool.add(spec, 0.0, 0);
        admitted.push_back(std::move(spec));
        added = true;
      } catch (const Error& e) {
        if (e.code() != Errc::MalformedResponse && e.code() != Errc::NoAnswerFound &&
            e.code() != Errc::UnrenderableFormat)
          throw;  // backend failures propagate
        if (stats != nullptr) stats->rejected += 1;
      }
    }
    if (added && stats != nullptr) stats->admitted += 1;
  }
  return admitted;
}

nlohmann::ordered_json format_spec_to_json(const FormatSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["kind"] = spec.kind == ComponentKind::QueryFormat ? "query_format" : "prompt_renderer";
  j["description"] = spec.description;
  if (spec.kind == ComponentKind::QueryFormat) {
    const QueryFormatProgram& p = spec.query_program();
    j["fields"] = query_fields_json(p);
    j["fields"]["extraction"] = {{"strategy", extraction_strategy_name(p.extraction.strategy)},
                                 {"marker", p.extraction.marker}};
  } else {
    j["fields"] = renderer_fields_json(spec.renderer_program());
  }
  return j;
}

FormatSpec format_spec_from_json(const nlohmann::json& j) {
  const std::string kind_name = j.at("kind").get<std::string>();
  ComponentKind kind;
  if (kind_name == "query_format") {
    kind = ComponentKind::QueryFormat;
  } else if (kind_name == "prompt_renderer") {
    kind = ComponentKind::PromptRenderer;
  } else {
    fail(Errc::ParseError, "unknown format kind '" + kind_name + "'");
  }
  return spec_from_fields(j.at("name").get<std::string>(), j.value("description", ""), kind,
                          j.at("fields"));
}

void save_format_catalog(const std::vector<FormatSpec>& specs, const std::string& path) {
  nlohmann::ordered_json j;
  auto& formats = j["formats"];
  formats = nlohmann::ordered_json::array();
  for (const FormatSpec& spec : specs) formats.push_back(format_spec_to_json(spec));
  write_file(path, j.dump(2) + "\n");
}

std::vector<FormatSpec> load_format_catalog(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, path + ": " + e.what());
  }
  std::vector<FormatSpec> out;
  for (const auto& ej : j.at("formats")) out.push_back(format_spec_from_json(ej));
  return out;
}

}  // namespace cfpo
