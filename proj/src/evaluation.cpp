#include "cfpo/evaluation.hpp"

#include "cfpo/util.hpp"

#include <cctype>
#include <fstream>

#include <json.hpp>

namespace cfpo {

namespace {

bool looks_numeric(const std::string& text) {
  bool digit_seen = false;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isdigit(u)) {
      digit_seen = true;
    } else if (c != '-' && c != '.' && c != '/' && c != ',') {
      return false;
    }
  }
  return digit_seen;
}

}  // namespace

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open dataset " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      DatasetRecord record;
      record.query = j.at("query").get<std::string>();
      record.gold = j.at("gold").get<std::string>();
      records.push_back(std::move(record));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::ParseError,
           path + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return records;
}

std::vector<DatasetRecord> sample_batch(const std::vector<DatasetRecord>& data, int size,
                                        std::uint64_t seed) {
  if (size < 1 || static_cast<std::size_t>(size) > data.size())
    fail(Errc::SizeTooLarge, "batch size " + std::to_string(size) + " for dataset of " +
                                 std::to_string(data.size()));
  auto rng = make_rng(seed);
  std::vector<std::size_t> indices =
      sample_indices(data.size(), static_cast<std::size_t>(size), rng);
  std::vector<DatasetRecord> out;
  out.reserve(indices.size());
  for (std::size_t index : indices) out.push_back(data[index]);
  return out;
}

std::string normalize_answer(const std::string& answer, TaskKind kind) {
  std::string out = trim(answer);
  if (kind == TaskKind::Classification || kind == TaskKind::MultipleChoice) out = to_lower(out);
  if (looks_numeric(out) && !out.empty() && out.back() == '.') out = rtrim(out.substr(0, out.size() - 1));
  if (!out.empty() && out.back() == '.') {
    std::string stripped = rtrim(out.substr(0, out.size() - 1));
    if (looks_numeric(stripped)) out = stripped;
  }
  return out;
}

bool answers_match(const std::string& extracted, const std::string& gold, TaskKind kind) {
  return normalize_answer(extracted, kind) == normalize_answer(gold, kind);
}

EvalReport evaluate(const ContentState& content, const FormatSpec& pr, const FormatSpec& qf,
                    const TaskSpec& task, const std::vector<DatasetRecord>& batch, Gateway& target) {
  if (batch.empty()) fail(Errc::SizeTooLarge, "evaluation batch is empty");
  EvalReport report;
  report.cases.reserve(batch.size());
  long correct = 0;
  for (const DatasetRecord& record : batch) {
    RenderedPrompt prompt = render_prompt(content, pr, qf, record.query);
    // Backend errors abort the whole report; no partial accuracy.
    BackendResponse response =
        target.complete(oplabel::kEvaluate, {{"user", prompt.text}}, task.eval_params);
    report.tokens_in += response.tokens_in;
    report.tokens_out += response.tokens_out;

    CaseResult result;
    result.query = record.query;
    result.gold = record.gold;
    result.raw_output = response.text;
    try {
      result.extracted = extract_answer(response.text, qf, task.kind);
      result.correct = answers_match(*result.extracted, record.gold, task.kind);
    } catch (const Error& e) {
      if (e.code() != Errc::NoAnswerFound) throw;
      result.extracted = std::nullopt;  // counts as incorrect, not fatal
      result.correct = false;
    }
    if (result.correct) ++correct;
    report.cases.push_back(std::move(result));
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.cases.size());
  return report;
}

CaseBundle partition_cases(const EvalReport& report, int n_correct, int n_incorrect,
                           std::uint64_t seed) {
  std::vector<const CaseResult*> correct;
  std::vector<const CaseResult*> incorrect;
  for (const CaseResult& c : report.cases) (c.correct ? correct : incorrect).push_back(&c);

  CaseBundle bundle;
  auto pick = [&](const std::vector<const CaseResult*>& source, int want, const char* tag,
                  std::vector<CaseResult>& sink) {
    auto rng = make_rng(derive_seed(seed, {"partition", tag}));
    std::size_t take = std::min<std::size_t>(source.size(), static_cast<std::size_t>(std::max(want, 0)));
    for (std::size_t index : sample_indices(source.size(), take, rng)) sink.push_back(*source[index]);
  };
  pick(correct, n_correct, "correct", bundle.correct);
  pick(incorrect, n_incorrect, "incorrect", bundle.incorrect);
  return bundle;
}

}  // namespace cfpo
