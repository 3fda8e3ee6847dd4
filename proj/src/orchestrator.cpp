#include "cfpo/orchestrator.hpp"

#include "cfpo/errors.hpp"
#include "cfpo/util.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace cfpo {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string pair_key(const std::string& renderer, const std::string& qf) {
  return renderer + "|" + qf;
}

const FormatSpec& pool_spec(const FormatPool& pool, ComponentKind kind, const std::string& name) {
  return pool.spec(kind, name);
}

std::string rendered_text(const PromptCandidate& c, const FormatPool& pool) {
  return render_prompt(c.content, pool_spec(pool, ComponentKind::PromptRenderer, c.renderer_name),
                       pool_spec(pool, ComponentKind::QueryFormat, c.query_format_name),
                       std::nullopt)
      .text;
}

/// Ranking order: score desc, then shorter rendered prompt, then fingerprint.
bool candidate_before(const PromptCandidate& a, const PromptCandidate& b, const FormatPool& pool) {
  const double sa = a.eval_score.value_or(0.0);
  const double sb = b.eval_score.value_or(0.0);
  if (sa != sb) return sa > sb;
  const std::size_t la = rendered_text(a, pool).size();
  const std::size_t lb = rendered_text(b, pool).size();
  if (la != lb) return la < lb;
  return content_fingerprint(a.content) < content_fingerprint(b.content);
}

Example generation_sample(const ContentState& content, const std::vector<DatasetRecord>& batch) {
  if (!content.examples.empty()) return content.examples.front();
  if (!batch.empty()) return Example{batch.front().query, batch.front().gold};
  return Example{"What is 2 + 3?", "The answer is 5."};
}

}  // namespace

void validate_config(const SearchConfig& cfg) {
  if (cfg.beam_width < 1 || cfg.k_formats < 1 || cfg.max_rounds < 1 || cfg.patience < 1 ||
      cfg.eval_batch < 1)
    fail(Errc::ConfigError, "all search counts must be >= 1");
  if (cfg.patience > cfg.max_rounds) fail(Errc::ConfigError, "patience must not exceed max_rounds");
  if (cfg.alpha < 0.0) fail(Errc::ConfigError, "alpha must be >= 0");
  if (cfg.task.dataset_path.empty()) fail(Errc::ConfigError, "task dataset path is required");
}

double LlmEvaluator::measure(const ContentState& content, const FormatSpec& renderer,
                             const FormatSpec& qf, const std::vector<DatasetRecord>& batch) {
  last_report_ = evaluate(content, renderer, qf, task_, batch, *target_);
  return last_report_.accuracy;
}

FormatChoice search_format(const ContentState& content, FormatPool& pool, const SearchConfig& cfg,
                           const std::vector<DatasetRecord>& batch, CandidateEvaluator& evaluator,
                           Gateway* optimizer, const std::string& incumbent_renderer,
                           const std::string& incumbent_qf, FormatSearchTrace* trace) {
  const int k_query = (cfg.k_formats + 1) / 2;
  const int k_renderer = cfg.k_formats - k_query;

  struct Slot {
    FormatSpec spec;
    bool generated = false;
  };
  std::vector<Slot> slots;
  for (FormatSpec& spec : select_top_k(pool, ComponentKind::QueryFormat, k_query))
    slots.push_back({std::move(spec), false});
  if (k_renderer > 0)
    for (FormatSpec& spec : select_top_k(pool, ComponentKind::PromptRenderer, k_renderer))
      slots.push_back({std::move(spec), false});

  if (optimizer && cfg.enable_format_generation) {
    const Example sample = generation_sample(content, batch);
    for (FormatSpec& spec :
         generate_formats(pool, ComponentKind::QueryFormat, k_query, sample,
                          cfg.task.task_intention, *optimizer))
      slots.push_back({std::move(spec), true});
    if (k_renderer > 0)
      for (FormatSpec& spec :
           generate_formats(pool, ComponentKind::PromptRenderer, k_renderer, sample,
                            cfg.task.task_intention, *optimizer))
        slots.push_back({std::move(spec), true});
  }

  FormatChoice best;
  bool have_best = false;
  for (const Slot& slot : slots) {
    // Each candidate format is tried in a full pair: the incumbent
    // counterpart of the other kind completes it.
    const bool is_query = slot.spec.kind == ComponentKind::QueryFormat;
    const std::string renderer_name = is_query ? incumbent_renderer : slot.spec.name;
    const std::string qf_name = is_query ? slot.spec.name : incumbent_qf;
    const double m =
        evaluator.measure(content, pool_spec(pool, ComponentKind::PromptRenderer, renderer_name),
                          pool_spec(pool, ComponentKind::QueryFormat, qf_name), batch);
    pool.update(slot.spec.name, m);
    if (trace) {
      (slot.generated ? trace->generated : trace->selected).push_back(slot.spec.name);
      trace->evaluated.emplace_back(slot.spec.name, m);
    }
    const bool wins = !have_best || m > best.score ||
                      (m == best.score &&
                       pair_key(renderer_name, qf_name) <
                           pair_key(best.renderer_name, best.query_format_name));
    if (wins) {
      best = {renderer_name, qf_name, m};
      have_best = true;
    }
  }
  if (!have_best) fail(Errc::EmptyPool, "format search evaluated nothing");

  if (trace) {
    trace->incumbent_renderer = incumbent_renderer;
    trace->incumbent_query_format = incumbent_qf;
    trace->chosen_renderer = best.renderer_name;
    trace->chosen_query_format = best.query_format_name;
    trace->chosen_score = best.score;
  }
  return best;
}

void initialize_pool(FormatPool& pool, const ContentState& initial,
                     const std::string& initial_renderer, const std::string& initial_qf,
                     const std::vector<DatasetRecord>& batch, CandidateEvaluator& evaluator) {
  for (ComponentKind kind : {ComponentKind::QueryFormat, ComponentKind::PromptRenderer}) {
    for (const FormatPoolEntry* entry : pool.entries(kind)) {
      if (entry->n > 0) continue;
      const bool is_query = kind == ComponentKind::QueryFormat;
      const std::string renderer_name = is_query ? initial_renderer : entry->spec.name;
      const std::string qf_name = is_query ? entry->spec.name : initial_qf;
      const double m = evaluator.measure(
          initial, pool_spec(pool, ComponentKind::PromptRenderer, renderer_name),
          pool_spec(pool, ComponentKind::QueryFormat, qf_name), batch);
      pool.update(entry->spec.name, m);
    }
  }
}

RoundLog run_round(RunState& state, const SearchConfig& cfg,
                   const std::vector<DatasetRecord>& dataset, CandidateEvaluator& evaluator,
                   Gateway& optimizer, Gateway& /*target*/, UsageLedger& ledger) {
  if (state.beam.empty()) fail(Errc::ConfigError, "beam must be non-empty");
  const int round = state.next_round;
  ledger.set_round(round);

  const std::vector<DatasetRecord> batch =
      sample_batch(dataset, std::min<int>(cfg.eval_batch, static_cast<int>(dataset.size())),
                   derive_seed(cfg.seed, {"batch", std::to_string(round)}));

  MutationPlan plan;
  plan.round_index = round;
  plan.max_components = component_schedule(round, cfg.max_rounds);

  RoundLog log;
  log.round_index = round;

  std::vector<PromptCandidate> ranked;
  double best_incumbent = 0.0;
  // The winner's search trace index, for the gain attribution below.
  std::ptrdiff_t best_new_trace = -1;
  double best_new_score = -1.0;

  for (const PromptCandidate& member : state.beam) {
    // Re-score the incumbent on this round's batch so ranking compares
    // like with like.
    PromptCandidate incumbent = member;
    const double incumbent_score = evaluator.measure(
        incumbent.content, pool_spec(state.pool, ComponentKind::PromptRenderer, incumbent.renderer_name),
        pool_spec(state.pool, ComponentKind::QueryFormat, incumbent.query_format_name), batch);
    incumbent.eval_score = incumbent_score;
    best_incumbent = std::max(best_incumbent, incumbent_score);
    log.candidates_evaluated += 1;

    CaseBundle bundle;
    if (const EvalReport* report = evaluator.last_report()) {
      bundle = partition_cases(*report, cfg.diagnosis_correct, cfg.diagnosis_incorrect,
                               derive_seed(cfg.seed, {"cases", std::to_string(round),
                                                      content_fingerprint(member.content)}));
    }

    MetaContext ctx;
    ctx.task_intention = cfg.task.task_intention;
    ctx.current_prompt = rendered_text(incumbent, state.pool);

    std::vector<ContentState> proposals;
    try {
      proposals = propose_contents(member.content, ctx, bundle, plan, optimizer,
                                   derive_seed(cfg.seed, {"content", std::to_string(round),
                                                          content_fingerprint(member.content)}));
    } catch (const Error& e) {
      if (e.code() != Errc::NoFailures) throw;
    }

    const std::string parent_fp = content_fingerprint(member.content);
    for (ContentState& proposal : proposals) {
      FormatSearchTrace trace;
      PromptCandidate candidate;
      candidate.parent_fingerprint = parent_fp;
      candidate.mutation_label = "proposed";
      try {
        const FormatChoice choice =
            search_format(proposal, state.pool, cfg, batch, evaluator, &optimizer,
                          member.renderer_name, member.query_format_name, &trace);
        candidate.content = std::move(proposal);
        candidate.renderer_name = choice.renderer_name;
        candidate.query_format_name = choice.query_format_name;
        candidate.eval_score = choice.score;
      } catch (const Error&) {
        continue;  // a failed candidate is dropped; the round survives
      }
      log.candidates_evaluated += static_cast<int>(trace.evaluated.size());
      log.format_traces.push_back(std::move(trace));
      if (*candidate.eval_score > best_new_score) {
        best_new_score = *candidate.eval_score;
        best_new_trace = static_cast<std::ptrdiff_t>(log.format_traces.size()) - 1;
      }
      ranked.push_back(std::move(candidate));
    }
    ranked.push_back(std::move(incumbent));
  }

  if (ranked.empty()) fail(Errc::BackendError, "every candidate failed this round");

  std::sort(ranked.begin(), ranked.end(), [&](const PromptCandidate& a, const PromptCandidate& b) {
    return candidate_before(a, b, state.pool);
  });
  if (static_cast<int>(ranked.size()) > cfg.beam_width)
    ranked.resize(static_cast<std::size_t>(cfg.beam_width));
  state.beam = std::move(ranked);

  log.round_best = state.beam.front().eval_score.value_or(0.0);
  log.best_score = std::max(state.best_score, log.round_best);
  state.best_score = log.best_score;

  // Gain attribution for the convergence table: when the best new
  // candidate's trace also measured the inherited (incumbent) pair, the
  // difference is the format stage's contribution; the rest is content's.
  if (best_new_trace >= 0) {
    const FormatSearchTrace& t = log.format_traces[static_cast<std::size_t>(best_new_trace)];
    // When one of the incumbent's own formats was re-selected, that
    // evaluation used the full inherited pair, so its measurement is the
    // new content's score under the old format; the chosen score beyond it
    // is the format stage's contribution.
    double inherited = t.chosen_score;
    for (const auto& [name, m] : t.evaluated) {
      if (name == t.incumbent_renderer || name == t.incumbent_query_format)
        inherited = std::min(inherited, m);
    }
    log.format_gain = std::max(0.0, t.chosen_score - inherited);
    log.content_gain = (best_new_score - best_incumbent) - log.format_gain;
  }

  state.next_round = round + 1;
  return log;
}

RunResult run(RunState& state, const SearchConfig& cfg, const PromptCandidate& initial,
              CandidateEvaluator& evaluator, Gateway& optimizer, Gateway& target,
              UsageLedger& ledger, const std::string& run_dir) {
  validate_config(cfg);
  const std::vector<DatasetRecord> dataset = load_dataset(cfg.task.dataset_path);
  if (dataset.empty()) fail(Errc::ParseError, "dataset is empty: " + cfg.task.dataset_path);

  if (!run_dir.empty()) fs::create_directories(run_dir);

  if (state.next_round == 0 && state.beam.empty()) {
    const std::vector<DatasetRecord> init_batch =
        sample_batch(dataset, std::min<int>(cfg.eval_batch, static_cast<int>(dataset.size())),
                     derive_seed(cfg.seed, {"batch", "init"}));
    ledger.set_round(-1);
    initialize_pool(state.pool, initial.content, initial.renderer_name, initial.query_format_name,
                    init_batch, evaluator);
    PromptCandidate first = initial;
    first.mutation_label = "initial";
    first.eval_score = state.pool.entry(ComponentKind::QueryFormat, initial.query_format_name).q /
                       static_cast<double>(
                           state.pool.entry(ComponentKind::QueryFormat, initial.query_format_name).n);
    state.beam = {std::move(first)};
    state.best_score = *state.beam.front().eval_score;
  }

  RunResult result;
  while (state.next_round < cfg.max_rounds && state.stall_rounds < cfg.patience) {
    const double prev_best = state.best_score;
    RoundLog log = run_round(state, cfg, dataset, evaluator, optimizer, target, ledger);
    state.stall_rounds = state.best_score > prev_best ? 0 : state.stall_rounds + 1;
    state.logs.push_back(std::move(log));
    if (!run_dir.empty()) save_checkpoint(state, ledger, run_dir + "/checkpoint.json");
  }

  result.rounds_executed = state.next_round;
  result.stopped_early = state.next_round < cfg.max_rounds;
  result.best = state.beam.front();
  result.logs = state.logs;

  if (!cfg.task.heldout_path.empty()) {
    const std::vector<DatasetRecord> heldout = load_dataset(cfg.task.heldout_path);
    result.heldout_score = evaluator.measure(
        result.best.content,
        pool_spec(state.pool, ComponentKind::PromptRenderer, result.best.renderer_name),
        pool_spec(state.pool, ComponentKind::QueryFormat, result.best.query_format_name), heldout);
  }

  if (!run_dir.empty()) {
    write_file(run_dir + "/final_prompt.txt", final_prompt_text(result.best, state.pool));
    write_file(run_dir + "/convergence.csv", convergence_csv(state.logs));
    write_file(run_dir + "/ledger.json", ledger.to_json().dump(2) + "\n");
    write_file(run_dir + "/pool.json", state.pool.to_json().dump(2) + "\n");
  }
  return result;
}

ordered_json candidate_to_json(const PromptCandidate& c) {
  ordered_json j;
  j["task_instruction"] = c.content.task_instruction;
  j["task_detail"] = c.content.task_detail;
  j["output_format"] = c.content.output_format;
  ordered_json examples = ordered_json::array();
  for (const Example& e : c.content.examples)
    examples.push_back({{"question", e.question}, {"answer", e.answer}});
  j["examples"] = std::move(examples);
  j["query_slot"] = c.content.query_slot;
  j["renderer"] = c.renderer_name;
  j["query_format"] = c.query_format_name;
  if (c.eval_score) j["eval_score"] = *c.eval_score;
  j["parent_fingerprint"] = c.parent_fingerprint;
  j["mutation_label"] = c.mutation_label;
  return j;
}

PromptCandidate candidate_from_json(const json& j) {
  PromptCandidate c;
  c.content.task_instruction = j.at("task_instruction").get<std::string>();
  c.content.task_detail = j.at("task_detail").get<std::string>();
  c.content.output_format = j.at("output_format").get<std::string>();
  for (const json& e : j.at("examples"))
    c.content.examples.push_back({e.at("question").get<std::string>(),
                                  e.at("answer").get<std::string>()});
  c.content.query_slot = j.at("query_slot").get<std::string>();
  c.renderer_name = j.at("renderer").get<std::string>();
  c.query_format_name = j.at("query_format").get<std::string>();
  if (j.contains("eval_score")) c.eval_score = j.at("eval_score").get<double>();
  c.parent_fingerprint = j.at("parent_fingerprint").get<std::string>();
  c.mutation_label = j.at("mutation_label").get<std::string>();
  return c;
}

namespace {

ordered_json trace_to_json(const FormatSearchTrace& t) {
  ordered_json j;
  j["selected"] = t.selected;
  j["generated"] = t.generated;
  ordered_json evaluated = ordered_json::array();
  for (const auto& [name, m] : t.evaluated) evaluated.push_back({{"name", name}, {"m", m}});
  j["evaluated"] = std::move(evaluated);
  j["incumbent_renderer"] = t.incumbent_renderer;
  j["incumbent_query_format"] = t.incumbent_query_format;
  j["chosen_renderer"] = t.chosen_renderer;
  j["chosen_query_format"] = t.chosen_query_format;
  j["chosen_score"] = t.chosen_score;
  return j;
}

FormatSearchTrace trace_from_json(const json& j) {
  FormatSearchTrace t;
  t.selected = j.at("selected").get<std::vector<std::string>>();
  t.generated = j.at("generated").get<std::vector<std::string>>();
  for (const json& e : j.at("evaluated"))
    t.evaluated.emplace_back(e.at("name").get<std::string>(), e.at("m").get<double>());
  t.incumbent_renderer = j.at("incumbent_renderer").get<std::string>();
  t.incumbent_query_format = j.at("incumbent_query_format").get<std::string>();
  t.chosen_renderer = j.at("chosen_renderer").get<std::string>();
  t.chosen_query_format = j.at("chosen_query_format").get<std::string>();
  t.chosen_score = j.at("chosen_score").get<double>();
  return t;
}

ordered_json log_to_json(const RoundLog& log) {
  ordered_json j;
  j["round_index"] = log.round_index;
  j["candidates_evaluated"] = log.candidates_evaluated;
  j["round_best"] = log.round_best;
  j["best_score"] = log.best_score;
  j["content_gain"] = log.content_gain;
  j["format_gain"] = log.format_gain;
  ordered_json traces = ordered_json::array();
  for (const FormatSearchTrace& t : log.format_traces) traces.push_back(trace_to_json(t));
  j["format_traces"] = std::move(traces);
  return j;
}

RoundLog log_from_json(const json& j) {
  RoundLog log;
  log.round_index = j.at("round_index").get<int>();
  log.candidates_evaluated = j.at("candidates_evaluated").get<int>();
  log.round_best = j.at("round_best").get<double>();
  log.best_score = j.at("best_score").get<double>();
  log.content_gain = j.at("content_gain").get<double>();
  log.format_gain = j.at("format_gain").get<double>();
  for (const json& t : j.at("format_traces")) log.format_traces.push_back(trace_from_json(t));
  return log;
}

}  // namespace

void save_checkpoint(const RunState& state, const UsageLedger& ledger, const std::string& path) {
  ordered_json j;
  j["version"] = kCheckpointVersion;
  j["next_round"] = state.next_round;
  j["best_score"] = state.best_score;
  j["stall_rounds"] = state.stall_rounds;
  ordered_json beam = ordered_json::array();
  for (const PromptCandidate& c : state.beam) beam.push_back(candidate_to_json(c));
  j["beam"] = std::move(beam);
  j["pool"] = state.pool.to_json();
  ordered_json logs = ordered_json::array();
  for (const RoundLog& log : state.logs) logs.push_back(log_to_json(log));
  j["logs"] = std::move(logs);
  j["ledger"] = ledger.to_json();
  write_file(path, j.dump(2) + "\n");
}

void load_checkpoint(RunState& state, UsageLedger& ledger, const std::string& path) {
  const std::string raw = read_file(path);
  json j;
  try {
    j = json::parse(raw);
    if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion)
      fail(Errc::VersionMismatch, "unsupported checkpoint version in " + path);
    RunState loaded;
    loaded.next_round = j.at("next_round").get<int>();
    loaded.best_score = j.at("best_score").get<double>();
    loaded.stall_rounds = j.at("stall_rounds").get<int>();
    for (const json& c : j.at("beam")) loaded.beam.push_back(candidate_from_json(c));
    loaded.pool = FormatPool::from_json(j.at("pool"));
    for (const json& l : j.at("logs")) loaded.logs.push_back(log_from_json(l));
    UsageLedger loaded_ledger = UsageLedger::from_json(j.at("ledger"));
    state = std::move(loaded);
    ledger = std::move(loaded_ledger);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::VersionMismatch, std::string("corrupt checkpoint: ") + e.what());
  }
}

std::string final_prompt_text(const PromptCandidate& candidate, const FormatPool& pool) {
  return rendered_text(candidate, pool);
}

std::string convergence_csv(const std::vector<RoundLog>& logs) {
  std::string csv = "round,best_score,content_gain,format_gain\n";
  for (const RoundLog& log : logs) {
    csv += std::to_string(log.round_index) + "," + fmt_double(log.best_score) + "," +
           fmt_double(log.content_gain) + "," + fmt_double(log.format_gain) + "\n";
  }
  return csv;
}

}  // namespace cfpo
