#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cfpo/content_search.hpp"
#include "cfpo/errors.hpp"
#include "cfpo/util.hpp"

#include "support/mock_backends.hpp"

#include <set>

using namespace cfpo;

namespace {

Gateway make_optimizer(UsageLedger& ledger) {
  return Gateway(std::make_shared<ScriptedBackend>("opt", testsupport::scripted_optimizer()),
                 &ledger);
}

ContentState demo_content() {
  ContentState c;
  c.task_instruction = "Solve the math problem.";
  c.task_detail = "Show your work.";
  c.examples = {{"What is 2 + 2?", "The answer is 4."},
                {"What is 3 + 5?", "The answer is 8."}};
  return c;
}

MetaContext demo_ctx() {
  MetaContext ctx;
  ctx.task_intention = "solve grade school math problems";
  ctx.current_prompt = "Solve the math problem.\n\n{{Query placeholder}}";
  return ctx;
}

CaseBundle demo_cases() {
  CaseBundle bundle;
  CaseResult bad;
  bad.query = "What is 9 - 4?";
  bad.gold = "5";
  bad.raw_output = "The answer is 6.";
  bad.correct = false;
  bundle.incorrect.push_back(bad);
  CaseResult good = bad;
  good.query = "What is 1 + 1?";
  good.gold = "2";
  good.raw_output = "The answer is 2.";
  good.correct = true;
  bundle.correct.push_back(good);
  return bundle;
}

}  // namespace

TEST_CASE("component schedule decreases linearly from 4 to 1") {
  CHECK(component_schedule(0, 20) == 4);
  CHECK(component_schedule(19, 20) == 1);
  CHECK(component_schedule(10, 20) == 2);
  CHECK(component_schedule(5, 20) == 3);
  CHECK(component_schedule(0, 1) == 4);
  for (int r = 1; r < 20; ++r)
    CHECK(component_schedule(r, 20) <= component_schedule(r - 1, 20));  // monotone
  for (int r = 0; r < 20; ++r) {
    CHECK(component_schedule(r, 20) >= 1);
    CHECK(component_schedule(r, 20) <= 4);
  }
  CHECK_THROWS_AS((void)component_schedule(-1, 20), Error);
  CHECK_THROWS_AS((void)component_schedule(20, 20), Error);
  CHECK_THROWS_AS((void)component_schedule(0, 0), Error);
}

TEST_CASE("canonical example rendering round-trips") {
  const std::vector<Example> examples = {{"What is 2 + 2?", "The answer is 4."},
                                         {"Line one\nline two?", "Multi\nline answer."}};
  const std::string text = render_examples_canonical(examples);
  CHECK(text.rfind("Question: What is 2 + 2?\nAnswer: The answer is 4.", 0) == 0);
  const std::vector<Example> back = parse_examples_canonical(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].question == examples[0].question);
  CHECK(back[0].answer == examples[0].answer);
  CHECK(back[1].question == examples[1].question);
  CHECK(back[1].answer == examples[1].answer);
  CHECK(parse_examples_canonical("no structure here").empty());
}

TEST_CASE("example edit distance recognizes exactly one action") {
  const std::vector<Example> base = {{"a", "1"}, {"b", "2"}};
  CHECK(example_edit_distance(base, base) == 0);
  CHECK(example_edit_distance(base, {{"a", "1"}, {"b", "changed"}}) == 1);       // modify
  CHECK(example_edit_distance(base, {{"a", "1"}, {"b", "2"}, {"c", "3"}}) == 1); // append
  CHECK(example_edit_distance(base, {{"a", "1"}, {"x", "9"}, {"b", "2"}}) == 1); // insert
  CHECK(example_edit_distance(base, {{"b", "2"}}) == 1);                         // delete
  CHECK(example_edit_distance(base, {{"a", "x"}, {"b", "y"}}) == -1);            // two edits
  CHECK(example_edit_distance(base, {}) == -1);                                  // two deletions
  CHECK(example_edit_distance(base, {{"x", "1"}, {"y", "2"}, {"c", "3"}}) == -1);
  CHECK(example_edit_distance({}, {{"a", "1"}}) == 1);  // first addition
}

TEST_CASE("diagnosis prompt requires failures and embeds the cases") {
  const std::string prompt = build_diagnosis_prompt(demo_ctx(), demo_cases(), 2);
  CHECK(prompt.find("What is 9 - 4?") != std::string::npos);
  CHECK(prompt.find("identify 2 specific area for improvement") != std::string::npos);
  CHECK(prompt.find("solve grade school math problems") != std::string::npos);

  CaseBundle no_failures;
  no_failures.correct = demo_cases().correct;
  try {
    (void)build_diagnosis_prompt(demo_ctx(), no_failures, 2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoFailures);
  }
}

TEST_CASE("diagnosis parsing is lenient") {
  const std::string response =
      "preamble\n"
      "<START>\n<Prompt segment: TASK INSTRUCTION>\nBe clearer.\n<END>\n"
      "<START>\n<Prompt segment: EXAMPLES>\nAdd a harder case.\n<END>\n"
      "<START>\n<Prompt segment: NONSENSE>\nIgnored.\n<END>\n"
      "<START>\nmissing tag, ignored\n<END>\n"
      "trailing noise";
  const auto suggestions = parse_diagnosis(response);
  REQUIRE(suggestions.size() == 2);
  CHECK(suggestions[0].component == ComponentKind::TaskInstruction);
  CHECK(suggestions[0].suggestion == "Be clearer.");
  CHECK(suggestions[1].component == ComponentKind::FewShotExamples);
  CHECK(parse_diagnosis("nothing structured").empty());
}

TEST_CASE("apply_feedback mutates exactly the suggested text component") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  const ContentState content = demo_content();
  const DiagnosisSuggestion s{ComponentKind::TaskInstruction, "Be more precise."};
  const auto variants = apply_feedback(content, demo_ctx(), s, 4, optimizer);
  REQUIRE(!variants.empty());
  CHECK(variants.size() <= 4);
  std::set<std::string> texts;
  for (const ContentState& v : variants) {
    CHECK(v.task_instruction != content.task_instruction);
    CHECK(v.task_detail == content.task_detail);   // untouched
    CHECK(v.examples.size() == content.examples.size());
    texts.insert(v.task_instruction);
  }
  CHECK(texts.size() == variants.size());  // all distinct
  CHECK(ledger.per_operation().at("Apply Feedback").calls == 1);  // one call for all variants
}

TEST_CASE("apply_feedback on examples obeys the single-action rule") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  const ContentState content = demo_content();
  const DiagnosisSuggestion s{ComponentKind::FewShotExamples, "Cover subtraction."};
  const auto variants = apply_feedback(content, demo_ctx(), s, 3, optimizer);
  REQUIRE(!variants.empty());
  for (const ContentState& v : variants) {
    CHECK(!v.examples.empty());
    CHECK(example_edit_distance(content.examples, v.examples) == 1);
    CHECK(v.task_instruction == content.task_instruction);
  }
}

TEST_CASE("feedback on a non-content component is rejected") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  CHECK_THROWS_AS((void)apply_feedback(demo_content(), demo_ctx(),
                                       {ComponentKind::PromptRenderer, "x"}, 2, optimizer),
                  Error);
  CHECK_THROWS_AS((void)apply_feedback(demo_content(), demo_ctx(),
                                       {ComponentKind::Query, "x"}, 2, optimizer),
                  Error);
}

TEST_CASE("garbage feedback responses yield zero variants after one retry") {
  UsageLedger ledger;
  int calls = 0;
  Gateway optimizer(std::make_shared<ScriptedBackend>("opt",
                                                      [&calls](const BackendRequest&) {
                                                        ++calls;
                                                        return std::string("no blocks");
                                                      }),
                    &ledger);
  const auto variants = apply_feedback(demo_content(), demo_ctx(),
                                       {ComponentKind::TaskInstruction, "x"}, 4, optimizer);
  CHECK(variants.empty());
  CHECK(calls == 2);
}

TEST_CASE("monte carlo varies one component, one call per variant") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  const ContentState content = demo_content();
  const auto variants =
      monte_carlo_variants(content, demo_ctx(), ComponentKind::TaskDetail, 3, optimizer);
  REQUIRE(variants.size() == 3);
  std::set<std::string> texts;
  for (const ContentState& v : variants) {
    CHECK(v.task_detail != content.task_detail);
    CHECK(v.task_instruction == content.task_instruction);
    texts.insert(v.task_detail);
  }
  CHECK(texts.size() == 3);  // per-variant sampling seeds force distinct outputs
  CHECK(ledger.per_operation().at("Gen Variation").calls == 3);
}

TEST_CASE("monte carlo on examples keeps the single-action rule") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  const ContentState content = demo_content();
  const auto variants =
      monte_carlo_variants(content, demo_ctx(), ComponentKind::FewShotExamples, 2, optimizer);
  REQUIRE(!variants.empty());
  for (const ContentState& v : variants) {
    CHECK(!v.examples.empty());
    CHECK(example_edit_distance(content.examples, v.examples) == 1);
  }
}

TEST_CASE("propose_contents merges both sides, dedups, excludes the input") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  const ContentState content = demo_content();
  MutationPlan plan;
  plan.round_index = 0;
  plan.max_components = 4;
  const auto candidates =
      propose_contents(content, demo_ctx(), demo_cases(), plan, optimizer, 99);
  REQUIRE(!candidates.empty());
  CHECK(candidates.size() <= 8);  // 4 feedback + 4 Monte-Carlo at most
  std::set<std::string> fps;
  const std::string input_fp = content_fingerprint(content);
  for (const ContentState& c : candidates) {
    const std::string fp = content_fingerprint(c);
    CHECK(fp != input_fp);
    CHECK(fps.insert(fp).second);
  }
  // Both optimizer sides ran.
  CHECK(ledger.per_operation().count("Case-diagnose") == 1);
  CHECK(ledger.per_operation().count("Apply Feedback") == 1);
  CHECK(ledger.per_operation().count("Gen Variation") == 1);

  // Determinism.
  UsageLedger ledger2;
  Gateway optimizer2 = make_optimizer(ledger2);
  const auto again = propose_contents(content, demo_ctx(), demo_cases(), plan, optimizer2, 99);
  REQUIRE(again.size() == candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    CHECK(content_fingerprint(again[i]) == content_fingerprint(candidates[i]));
}

TEST_CASE("without failures the proposal set is Monte-Carlo only") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  CaseBundle all_correct;
  all_correct.correct = demo_cases().correct;
  MutationPlan plan;
  const auto candidates =
      propose_contents(demo_content(), demo_ctx(), all_correct, plan, optimizer, 7);
  CHECK(!candidates.empty());
  CHECK(ledger.per_operation().count("Case-diagnose") == 0);
  CHECK(ledger.per_operation().count("Apply Feedback") == 0);
  CHECK(ledger.per_operation().count("Gen Variation") == 1);
}

TEST_CASE("max_components caps the feedback spread") {
  UsageLedger ledger;
  Gateway optimizer = make_optimizer(ledger);
  const ContentState content = demo_content();
  MutationPlan plan;
  plan.max_components = 1;
  const auto candidates =
      propose_contents(content, demo_ctx(), demo_cases(), plan, optimizer, 3);
  // Feedback candidates may differ from the input in at most one component.
  for (const ContentState& c : candidates) {
    int touched = 0;
    if (c.task_instruction != content.task_instruction) ++touched;
    if (c.task_detail != content.task_detail) ++touched;
    if (c.output_format != content.output_format) ++touched;
    if (!(c.examples == content.examples)) ++touched;
    CHECK(touched == 1);
  }
  CHECK_THROWS_AS((void)propose_contents(content, demo_ctx(), demo_cases(),
                                         MutationPlan{.max_components = 5}, optimizer, 1),
                  Error);
}
