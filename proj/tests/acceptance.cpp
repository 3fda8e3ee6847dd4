// Acceptance harness: every release criterion is one named check printing a
// single PASS/FAIL line. The process exits non-zero when any check fails.
//
// All checks run offline against the deterministic scripted backends or the
// bundled replay fixture; the final live-endpoint smoke only runs when
// CFPO_LIVE_BASE_URL (and friends) are set and is skipped otherwise.

#include "cfpo/config.hpp"
#include "cfpo/content_search.hpp"
#include "cfpo/errors.hpp"
#include "cfpo/landscape.hpp"
#include "cfpo/orchestrator.hpp"
#include "cfpo/util.hpp"

#include "support/mock_backends.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace cfpo;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(const std::string& name, const std::function<void()>& body) {
  try {
    body();
    std::printf("[PASS] %s\n", name.c_str());
  } catch (const std::exception& e) {
    ++failures;
    std::printf("[FAIL] %s: %s\n", name.c_str(), e.what());
  }
}

void expect(bool condition, const std::string& message) {
  if (!condition) throw std::runtime_error(message);
}

const FormatSpec& fmt(const std::string& name) {
  static const std::vector<FormatSpec> catalog = builtin_formats();
  return find_format(catalog, name);
}

// ---------------------------------------------------------------------------
// Shared mock-run plumbing.

std::map<std::string, std::string> gold_map() {
  std::map<std::string, std::string> gold;
  for (const char* path : {"tests/fixtures/math_train.jsonl", "tests/fixtures/math_heldout.jsonl"})
    for (const DatasetRecord& r : load_dataset(path)) gold[r.query] = r.gold;
  return gold;
}

PromptCandidate initial_candidate() {
  PromptCandidate c;
  c.content.task_instruction = "Solve the arithmetic problem.";
  c.content.task_detail = "Compute the exact value.";
  c.content.output_format = "End with \"The answer is X.\"";
  c.content.examples = {{"What is 2 + 2?", "The answer is 4."},
                        {"What is 7 - 3?", "The answer is 4."}};
  c.renderer_name = "Directly_Joint";
  c.query_format_name = "Question_Answer";
  c.mutation_label = "initial";
  return c;
}

SearchConfig mock_config(std::uint64_t seed) {
  SearchConfig cfg;
  cfg.beam_width = 4;
  cfg.k_formats = 2;
  cfg.max_rounds = 3;
  cfg.patience = 3;
  cfg.eval_batch = 8;
  cfg.diagnosis_correct = 3;
  cfg.diagnosis_incorrect = 3;
  cfg.seed = seed;
  cfg.task.kind = TaskKind::Reasoning;
  cfg.task.dataset_path = "tests/fixtures/math_train.jsonl";
  cfg.task.task_intention = "solve arithmetic problems";
  return cfg;
}

struct MockRun {
  RunState state;
  RunResult result;
  UsageLedger ledger;
};

MockRun run_mock(const SearchConfig& cfg, testsupport::TargetOptions target_options = {},
                 std::shared_ptr<Backend> optimizer_backend = nullptr,
                 std::shared_ptr<Backend> target_backend = nullptr) {
  MockRun r;
  if (!optimizer_backend)
    optimizer_backend =
        std::make_shared<ScriptedBackend>("optimizer", testsupport::scripted_optimizer());
  if (!target_backend)
    target_backend = std::make_shared<ScriptedBackend>(
        "target", testsupport::scripted_target(gold_map(), target_options));
  Gateway optimizer(optimizer_backend, &r.ledger);
  Gateway target(target_backend, &r.ledger);
  LlmEvaluator evaluator(cfg.task, target);
  r.state.pool = seeded_pool(cfg.alpha);
  r.result = run(r.state, cfg, initial_candidate(), evaluator, optimizer, target, r.ledger);
  return r;
}

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("cfpo_acceptance_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// ---------------------------------------------------------------------------
// Criterion bodies.

void check_rendering_fixtures() {
  const auto start = std::chrono::steady_clock::now();

  {  // Classification-style initial prompt: instruction-only content.
    ContentState content;
    content.task_instruction =
        "Examples:\n"
        "Input: Speaker 1: 'You do this often?' Speaker 2: 'It's my first time.'\n"
        "Output: no";
    expect(render_prompt(content, fmt("Directly_Joint"), fmt("Input_Output"), std::nullopt).text ==
               content.task_instruction + "\n\n{{Query placeholder}}",
           "classification initial prompt differs");
  }
  {  // Math word-problem initial prompt: one worked example.
    ContentState content;
    content.examples = {
        {"There are 15 trees in the grove. Grove workers will plant trees in the grove today. "
         "After they are done, there will be 21 trees. How many trees did the grove workers plant "
         "today?",
         "There are 15 trees originally. Then there were 21 trees after some more were planted. "
         "So there must have been 21 - 15 = 6. The answer is 6."}};
    expect(render_prompt(content, fmt("Directly_Joint"), fmt("QA"), std::nullopt).text ==
               "Q: " + content.examples[0].question + "\n\nA: " + content.examples[0].answer +
                   "\n\n{{Query placeholder}}",
           "math initial prompt differs");
  }
  {  // Multiple-choice initial prompt: instruction plus one choice example.
    ContentState content;
    content.task_instruction =
        "You are a commonsense helper. I will provide several examples and a presented question. "
        "Your goal is to pick the most reasonable answer among the given options for the current "
        "question. Please respond with the corresponding label (A/B/C/D) for the correct "
        "answer.\n\nHere are some examples:";
    content.examples = {
        {"Forests have been cut and burned so that the land can be used to raise crops. Which "
         "consequence does this activity have on the atmosphere of Earth?\n"
         "Choices:\n"
         "A: It reduces the amount of carbon dioxide production\n"
         "B: It reduces the production of oxygen\n"
         "C: It decreases the greenhouse effect\n"
         "D: It decreases pollutants in the air",
         "B"}};
    expect(
        render_prompt(content, fmt("Directly_Joint"), fmt("MultiChoice_QA"), std::nullopt).text ==
            content.task_instruction + "\n\nQuestion: " + content.examples[0].question +
                "\nAnswer: B\n\n{{Query placeholder}}",
        "multiple-choice initial prompt differs");
  }
  {  // Generated query-format and renderer samples.
    const Example jayden{
        "In 3 years, Jayden will be half of Ernesto's age. If Ernesto is 11 years old, how many "
        "years old is Jayden now?",
        "Let's think step by step. Ernesto = 11 + 3 = <<11+3=14>>14 Jayden = 14/2 = <<14/2=7>>7 "
        "in 3 years Now = 7 - 3 = <<7-3=4>>4 Jayden is 4 years old."};
    expect(render_query(jayden, fmt("QA_Titlecase_Separator")) ==
               "Question || " + jayden.question + "\nAnswer || " + jayden.answer,
           "QA_Titlecase_Separator sample differs");

    ContentState content;
    content.task_instruction = "Write a function that returns the sum of two numbers.";
    content.task_detail = "The function should take two numbers as input and return their sum.";
    content.examples = {{"1, 2", "3"}};
    expect(render_prompt(content, fmt("Tabular_Sections"), fmt("Input_Output"), {"1, 2"}).text ==
               "| Task Instruction | Write a function that returns the sum of two numbers. |\n"
               "| Task Detail | The function should take two numbers as input and return their "
               "sum. |\n"
               "| Examples | Input: 1, 2\nOutput: 3 |\n"
               "| Query | Input: 1, 2\nOutput: |",
           "Tabular_Sections sample differs");
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  expect(elapsed < 1.0, "rendering fixtures took " + std::to_string(elapsed) + "s (limit 1s)");
}

void check_round_trip() {
  auto rng = make_rng(derive_seed(2024, {"acceptance", "roundtrip"}));
  int bad = 0;
  for (const FormatSpec& spec : builtin_formats()) {
    if (spec.kind != ComponentKind::QueryFormat) continue;
    for (int i = 0; i < 200; ++i) {
      const Example e{"What is " + std::to_string(rng_below(rng, 1000)) + " plus " +
                          std::to_string(rng_below(rng, 1000)) + "?",
                      "value " + std::to_string(rng_below(rng, 100000))};
      if (extract_answer(render_query(e, spec), spec, TaskKind::Classification) != e.answer) ++bad;
    }
  }
  expect(bad == 0, std::to_string(bad) + " round-trip failures");
}

void check_uct_oracle() {
  auto rng = make_rng(derive_seed(5150, {"acceptance", "uct"}));
  for (int trial = 0; trial < 1000; ++trial) {
    const double alphas[] = {0.0, 1e-3, 0.1};
    const double alpha = alphas[trial % 3];
    FormatPool pool(alpha);
    const int n = 2 + static_cast<int>(rng_below(rng, 49));
    struct Arm { std::string name; double q; long n; };
    std::vector<Arm> arms;
    long total = 0;
    for (int i = 0; i < n; ++i) {
      char name[16];
      std::snprintf(name, sizeof name, "Arm_%03d", i);
      const long visits = static_cast<long>(rng_below(rng, 5));
      const double q = visits == 0 ? 0.0 : (rng_below(rng, 4 * visits + 1)) / 4.0;
      FormatSpec spec;
      spec.name = name;
      spec.kind = ComponentKind::QueryFormat;
      spec.description = "oracle arm";
      spec.program = QueryFormatProgram{};
      pool.add(spec, q, visits);
      arms.push_back({name, q, visits});
      total += visits;
    }
    const int k = 1 + static_cast<int>(rng_below(rng, 6));

    // Brute-force oracle: visited arms sorted by (UCT desc, N asc, name asc).
    std::vector<Arm> visited;
    for (const Arm& a : arms)
      if (a.n > 0) visited.push_back(a);
    auto uct = [&](const Arm& a) {
      return a.q / a.n + alpha * std::sqrt(static_cast<double>(total) / a.n);
    };
    std::sort(visited.begin(), visited.end(), [&](const Arm& a, const Arm& b) {
      if (uct(a) != uct(b)) return uct(a) > uct(b);
      if (a.n != b.n) return a.n < b.n;
      return a.name < b.name;
    });
    const std::vector<FormatSpec> picked = select_top_k(pool, ComponentKind::QueryFormat, k);
    const std::size_t want = std::min<std::size_t>(visited.size(), static_cast<std::size_t>(k));
    expect(picked.size() == want, "select_top_k size mismatch");
    for (std::size_t i = 0; i < want; ++i)
      expect(picked[i].name == visited[i].name,
             "trial " + std::to_string(trial) + ": rank " + std::to_string(i) + " differs");

    if (alpha == 0.0 && !picked.empty()) {
      // With alpha = 0 the top pick must be a plain mean-reward argmax.
      double best_mean = 0.0;
      for (const Arm& a : visited) best_mean = std::max(best_mean, a.q / a.n);
      const auto& top = pool.entry(ComponentKind::QueryFormat, picked.front().name);
      expect(top.q / top.n == best_mean, "alpha=0 top pick is not the greedy argmax");
    }
  }
}

void check_algorithm1_conformance() {
  for (std::uint64_t seed : {7ULL, 101ULL, 202ULL}) {
    // Record one full mock run, then replay it and inspect the traces.
    const std::string dir = temp_dir("algo1_" + std::to_string(seed));
    const std::string fixture = dir + "/fixture.json";
    const SearchConfig cfg = mock_config(seed);

    const MockRun recorded = run_mock(
        cfg, {},
        record_session(
            std::make_shared<ScriptedBackend>("optimizer", testsupport::scripted_optimizer()),
            fixture),
        record_session(std::make_shared<ScriptedBackend>(
                           "target", testsupport::scripted_target(gold_map())),
                       fixture));

    const MockRun replayed =
        run_mock(cfg, {}, std::make_shared<ReplayBackend>("optimizer", fixture),
                 std::make_shared<ReplayBackend>("target", fixture));
    expect(final_prompt_text(replayed.result.best, replayed.state.pool) ==
               final_prompt_text(recorded.result.best, recorded.state.pool),
           "replayed run diverged from its recording");

    int traces = 0;
    for (const RoundLog& log : replayed.result.logs) {
      for (const FormatSearchTrace& t : log.format_traces) {
        ++traces;
        expect(static_cast<int>(t.evaluated.size()) <= 2 * cfg.k_formats,
               "format search evaluated more than 2k formats");
        std::set<std::string> expected_names(t.selected.begin(), t.selected.end());
        expected_names.insert(t.generated.begin(), t.generated.end());
        std::set<std::string> evaluated_names;
        double best = -1.0;
        for (const auto& [name, m] : t.evaluated) {
          evaluated_names.insert(name);
          best = std::max(best, m);
        }
        expect(evaluated_names == expected_names,
               "evaluated set is not exactly F_select union F_gen");
        expect(t.chosen_score == best, "returned pair is not the measured argmax");
        expect(t.chosen_renderer == t.incumbent_renderer ||
                   t.chosen_query_format == t.incumbent_query_format,
               "winning pair does not inherit the incumbent counterpart");
      }
    }
    expect(traces > 0, "run produced no format-search traces");
    fs::remove_all(dir);
  }
}

void check_selection_ordering() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<StrategySummary> summary = run_ablation(AblationConfig{});
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  double uct = 0, greedy = 0, random = 0, uct_se = 0;
  for (const StrategySummary& s : summary) {
    if (s.strategy == SelectionStrategy::Uct) { uct = s.mean_final_metric; uct_se = s.se_final_metric; }
    if (s.strategy == SelectionStrategy::Greedy) greedy = s.mean_final_metric;
    if (s.strategy == SelectionStrategy::Random) random = s.mean_final_metric;
  }
  expect(uct >= greedy, "uct mean final metric below greedy");
  expect(greedy >= random, "greedy mean final metric below random");
  expect(uct - greedy > 2.0 * uct_se,
         "uct margin over greedy (" + std::to_string(uct - greedy) + ") within 2 standard errors (" +
             std::to_string(2.0 * uct_se) + ")");
  expect(elapsed < 120.0, "ablation took " + std::to_string(elapsed) + "s (limit 120s)");
}

RunManifest bundled_manifest() { return load_manifest("tests/fixtures/e2e_config.json"); }

struct ReplayRun {
  std::string prompt;
  std::string csv;
  std::string ledger_json;
};

ReplayRun replay_once() {
  const RunManifest manifest = bundled_manifest();
  BackendPair backends = make_backends(manifest);
  UsageLedger ledger;
  Gateway optimizer(backends.optimizer, &ledger);
  Gateway target(backends.target, &ledger);
  LlmEvaluator evaluator(manifest.search.task, target);
  RunState state;
  state.pool = seeded_pool(manifest.search.alpha);
  const RunResult result = run(state, manifest.search, manifest.initial, evaluator, optimizer,
                               target, ledger);
  return {final_prompt_text(result.best, state.pool), convergence_csv(result.logs),
          ledger.to_json().dump()};
}

void check_e2e_determinism() {
  const ReplayRun first = replay_once();
  expect(first.prompt == read_file("tests/fixtures/e2e_golden/final_prompt.txt"),
         "replayed final prompt differs from the bundled golden file");
  expect(first.csv == read_file("tests/fixtures/e2e_golden/convergence.csv"),
         "replayed round logs differ from the bundled golden file");
  for (int i = 1; i < 5; ++i) {
    const ReplayRun again = replay_once();
    expect(again.prompt == first.prompt, "final prompt differs on rerun " + std::to_string(i));
    expect(again.csv == first.csv, "round logs differ on rerun " + std::to_string(i));
    expect(again.ledger_json == first.ledger_json,
           "usage ledger differs on rerun " + std::to_string(i));
  }

  // Resume at every round boundary reproduces the same final prompt and logs.
  const RunManifest manifest = bundled_manifest();
  const SearchConfig& cfg = manifest.search;
  const std::vector<DatasetRecord> dataset = load_dataset(cfg.task.dataset_path);
  for (int boundary = 1; boundary < cfg.max_rounds; ++boundary) {
    BackendPair backends = make_backends(manifest);
    UsageLedger ledger;
    Gateway optimizer(backends.optimizer, &ledger);
    Gateway target(backends.target, &ledger);
    LlmEvaluator evaluator(cfg.task, target);

    RunState state;
    state.pool = seeded_pool(cfg.alpha);
    const auto init_batch =
        sample_batch(dataset, std::min<int>(cfg.eval_batch, static_cast<int>(dataset.size())),
                     derive_seed(cfg.seed, {"batch", "init"}));
    ledger.set_round(-1);
    initialize_pool(state.pool, manifest.initial.content, manifest.initial.renderer_name,
                    manifest.initial.query_format_name, init_batch, evaluator);
    PromptCandidate first_candidate = manifest.initial;
    const auto& qf0 =
        state.pool.entry(ComponentKind::QueryFormat, manifest.initial.query_format_name);
    first_candidate.eval_score = qf0.q / static_cast<double>(qf0.n);
    state.beam = {first_candidate};
    state.best_score = *first_candidate.eval_score;
    for (int r = 0; r < boundary; ++r) {
      const double prev_best = state.best_score;
      RoundLog log = run_round(state, cfg, dataset, evaluator, optimizer, target, ledger);
      state.stall_rounds = state.best_score > prev_best ? 0 : state.stall_rounds + 1;
      state.logs.push_back(std::move(log));
    }
    const std::string dir = temp_dir("resume_" + std::to_string(boundary));
    save_checkpoint(state, ledger, dir + "/checkpoint.json");

    BackendPair backends2 = make_backends(manifest);
    RunState resumed;
    UsageLedger resumed_ledger;
    load_checkpoint(resumed, resumed_ledger, dir + "/checkpoint.json");
    Gateway optimizer2(backends2.optimizer, &resumed_ledger);
    Gateway target2(backends2.target, &resumed_ledger);
    LlmEvaluator evaluator2(cfg.task, target2);
    const RunResult result = run(resumed, cfg, manifest.initial, evaluator2, optimizer2, target2,
                                 resumed_ledger);
    expect(final_prompt_text(result.best, resumed.pool) == first.prompt,
           "resume at round " + std::to_string(boundary) + " changed the final prompt");
    expect(convergence_csv(resumed.logs) == first.csv,
           "resume at round " + std::to_string(boundary) + " changed the round logs");
    fs::remove_all(dir);
  }
}

void check_schedule_and_budget() {
  expect(component_schedule(0, 20) == 4, "component_schedule(0,20) != 4");
  expect(component_schedule(19, 20) == 1, "component_schedule(19,20) != 1");
  for (int r = 0; r < 20; ++r) {
    const int n = component_schedule(r, 20);
    expect(n >= 1 && n <= 4, "schedule out of range");
    if (r > 0)
      expect(n <= component_schedule(r - 1, 20), "schedule is not non-increasing");
  }

  // Default budgets: beam <= 8, rounds <= 20, <= 8 content candidates per
  // beam member per round (4 feedback + 4 Monte-Carlo).
  const SearchConfig defaults;
  expect(defaults.beam_width == 8, "default beam width is not 8");
  expect(defaults.max_rounds == 20, "default round budget is not 20");
  expect(defaults.patience == 5, "default patience is not 5");
  const MutationPlan plan;
  expect(plan.num_feedback_candidates + plan.num_mc_candidates == 8,
         "per-member content proposals can exceed 8");

  // A mock run respects the configured budgets in every round.
  const SearchConfig cfg = mock_config(77);
  const MockRun r = run_mock(cfg);
  expect(static_cast<int>(r.state.beam.size()) <= cfg.beam_width, "beam exceeded its width");
  int previous_beam = 1;
  for (const RoundLog& log : r.result.logs) {
    expect(static_cast<int>(log.format_traces.size()) <= previous_beam * 8,
           "round proposed more than 8 content candidates per beam member");
    previous_beam = cfg.beam_width;
  }

  // Patience-5 early stop on a constant-score target.
  testsupport::TargetOptions flat;
  flat.wrong_below = 0;
  SearchConfig flat_cfg = mock_config(7);
  flat_cfg.max_rounds = 20;
  flat_cfg.patience = 5;
  const MockRun stalled = run_mock(flat_cfg, flat);
  expect(stalled.result.stopped_early, "constant-score run did not stop early");
  expect(stalled.result.rounds_executed == 5,
         "constant-score run stopped after " + std::to_string(stalled.result.rounds_executed) +
             " rounds, expected 5");
}

void check_monotonicity() {
  auto rng = make_rng(derive_seed(31337, {"acceptance", "mono"}));
  for (int trial = 0; trial < 50; ++trial) {
    SearchConfig cfg = mock_config(derive_seed(1000 + trial, {"mono"}));
    cfg.max_rounds = 2 + static_cast<int>(rng_below(rng, 2));
    cfg.patience = cfg.max_rounds;
    testsupport::TargetOptions options;
    options.modulus = 4 + rng_below(rng, 3);
    options.wrong_below = rng_below(rng, 3);
    const MockRun r = run_mock(cfg, options);
    double prev = -1.0;
    for (const RoundLog& log : r.result.logs) {
      expect(log.best_score >= prev,
             "trial " + std::to_string(trial) + ": best score decreased in round " +
                 std::to_string(log.round_index));
      prev = log.best_score;
    }
  }
}

void check_live_smoke() {
  const char* base_url = std::getenv("CFPO_LIVE_BASE_URL");
  if (!base_url || std::string(base_url).empty()) {
    std::printf("[SKIP] live smoke: CFPO_LIVE_BASE_URL not set\n");
    return;
  }
  check("live smoke (2-round live optimization)", [&] {
    HttpBackendConfig http;
    http.base_url = base_url;
    http.model = std::getenv("CFPO_LIVE_MODEL") ? std::getenv("CFPO_LIVE_MODEL") : "default";
    http.auth_env = "CFPO_LIVE_API_KEY";
    http.backend_id = "live";

    SearchConfig cfg;
    cfg.beam_width = 4;
    cfg.k_formats = 2;
    cfg.max_rounds = 2;
    cfg.patience = 2;
    cfg.eval_batch = 8;
    cfg.task.kind = TaskKind::Classification;
    cfg.task.dataset_path = "tests/fixtures/cls_train.jsonl";
    cfg.task.task_intention = "classify the sentiment of short reviews";

    UsageLedger ledger;
    Gateway optimizer(std::make_shared<HttpBackend>(http), &ledger);
    Gateway target(std::make_shared<HttpBackend>(http), &ledger);
    LlmEvaluator evaluator(cfg.task, target);

    PromptCandidate initial;
    initial.content.task_instruction =
        "Decide whether the review is positive or negative. Answer with one word.";
    initial.renderer_name = "Directly_Joint";
    initial.query_format_name = "Input_Output";
    initial.mutation_label = "initial";

    RunState state;
    state.pool = seeded_pool(cfg.alpha);
    const RunResult result = run(state, cfg, initial, evaluator, optimizer, target, ledger);
    expect(result.best.eval_score.has_value(), "live run produced no score");

    const auto ops = ledger.per_operation();
    expect(ops.count("Evaluate") == 1, "missing usage bucket for Evaluate");
    expect(!format_usage_table(ledger).empty(), "usage report is empty");
  });
}

}  // namespace

int main() {
  check("rendering fixtures byte-exact (< 1 s)", check_rendering_fixtures);
  check("round-trip extraction, all query formats x 200", check_round_trip);
  check("UCT selection matches brute-force oracle on 1000 pools", check_uct_oracle);
  check("format-search conformance on 3 recorded runs", check_algorithm1_conformance);
  check("selection-strategy ordering on the synthetic landscape", check_selection_ordering);
  check("end-to-end replay determinism and resume identity", check_e2e_determinism);
  check("schedule and budget conformance", check_schedule_and_budget);
  check("best-score monotonicity over 50 randomized runs", check_monotonicity);
  check_live_smoke();
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
