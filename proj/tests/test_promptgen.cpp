#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "motkit/promptgen.hpp"
#include "support.hpp"

using namespace motkit;
using namespace motkit::prompt;

namespace {

std::size_t occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string_view::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

corpus::Problem golden_problem() {
  corpus::Problem p;
  p.id = "golden-1";
  p.statement = "Given n integers, print how many of them are strictly positive.";
  p.tests = {{"3\n1 -2 5\n", "2\n"}, {"1\n0\n", "0\n"}};
  return p;
}

const char* kGoldenSolution =
    "n = int(input())\n"
    "a = list(map(int, input().split()))\n"
    "print(sum(1 for x in a if x > 0))\n";

sandbox::JudgeVerdict failing(sandbox::ExecStatus status, std::string out, std::string err = {}) {
  sandbox::JudgeVerdict v;
  sandbox::TestOutcome o;
  o.report.status = status;
  o.report.stdout_text = std::move(out);
  o.report.stderr_text = std::move(err);
  o.report.exit_code = status == sandbox::ExecStatus::runtime_error ? 1 : 0;
  v.per_test.push_back(o);
  v.first_failure = 0;
  return v;
}

// Set MOTKIT_UPDATE_GOLDEN=1 to rewrite the stored files after a deliberate
// template change; review the diff by hand before committing.
void check_golden(const std::string& name, const std::string& actual) {
  auto path = support::fixture("golden") / name;
  if (std::getenv("MOTKIT_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << actual;
  }
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << path);
  std::ostringstream stored;
  stored << in.rdbuf();
  CHECK(stored.str() == actual);
}

const char* kWellFormed =
    "Here is the plan.\n"
    "### STEP 1\n"
    "```python\n"
    "def read_input():\n"
    "    \"\"\"Read n and the list.\"\"\"\n"
    "    ...\n"
    "\n"
    "def count_positive(values):\n"
    "    \"\"\"Count values above zero.\"\"\"\n"
    "    ...\n"
    "```\n"
    "\n"
    "### STEP 2\n"
    "```python\n"
    "def read_input():\n"
    "    input()\n"
    "    return list(map(int, input().split()))\n"
    "\n"
    "def count_positive(values):\n"
    "    return sum(1 for v in values if v > 0)\n"
    "\n"
    "print(count_positive(read_input()))\n"
    "```\n";

}  // namespace

TEST_CASE("MoT prompt structure") {
  auto p = build_mot_prompt(golden_problem(), kGoldenSolution);
  CHECK(p.tag == PromptTag::mot);
  CHECK(occurrences(p.user, kStep1Marker) == 1);
  CHECK(occurrences(p.user, kStep2Marker) == 1);
  CHECK(p.user.find(kStep1Marker) < p.user.find(kStep2Marker));
  CHECK(p.user.find(golden_problem().statement) != std::string::npos);
  CHECK(p.user.find("print(sum(1 for x in a if x > 0))") != std::string::npos);
  CHECK(p.user.find("docstring") != std::string::npos);
  REQUIRE(p.one_shot.has_value());
  CHECK(occurrences(p.one_shot->output, kStep1Marker) == 1);
  CHECK_NOTHROW(parse_mot_response(p.one_shot->output));

  auto messages = to_messages(p);
  REQUIRE(messages.size() == 4);
  CHECK(messages[0].role == "system");
  CHECK(messages[1].role == "user");
  CHECK(messages[2].role == "assistant");
  CHECK(messages[3].content == p.user);
}

TEST_CASE("one-line solution still asks for the outline first") {
  auto p = build_mot_prompt(golden_problem(), "print(0)");
  CHECK(occurrences(p.user, kStep1Marker) == 1);
  CHECK(occurrences(p.user, kStep2Marker) == 1);
  CHECK(p.one_shot.has_value());
  CHECK_THROWS_AS(build_mot_prompt(golden_problem(), "  \n"), std::invalid_argument);
}

TEST_CASE("two-call MoT prompts") {
  auto outline = build_mot_outline_prompt(golden_problem(), kGoldenSolution);
  CHECK(outline.one_shot.has_value());
  auto integrate = build_mot_integrate_prompt(golden_problem(), kGoldenSolution,
                                              "### STEP 1\n```python\ndef f():\n    ...\n```");
  CHECK(integrate.user.find("def f():") != std::string::npos);
  CHECK(integrate.user.find(kStep2Marker) != std::string::npos);
}

TEST_CASE("clean prompt carries all three goals") {
  auto p = build_clean_prompt(golden_problem(), kGoldenSolution);
  CHECK(p.tag == PromptTag::clean);
  CHECK_FALSE(p.one_shot.has_value());
  CHECK(p.user.find("variable names") != std::string::npos);
  CHECK(p.user.find("Add comments") != std::string::npos);
  CHECK(p.user.find("without changing its functionality") != std::string::npos);

  corpus::Problem empty;
  auto q = build_clean_prompt(empty, kGoldenSolution);
  CHECK(q.user.find("Problem:\n\n\nOriginal solution:") != std::string::npos);
}

TEST_CASE("reflection prompt feedback") {
  auto problem = golden_problem();
  SUBCASE("wrong answer shows input, expected and actual") {
    auto p = build_reflection_prompt(problem, "print(5)", failing(sandbox::ExecStatus::ok, "5\n"), 1);
    CHECK(p.tag == PromptTag::reflect);
    CHECK(p.user.find("3\n1 -2 5") != std::string::npos);
    CHECK(p.user.find("Expected output:\n```\n2") != std::string::npos);
    CHECK(p.user.find("Your output:\n```\n5") != std::string::npos);
  }
  SUBCASE("timeout has a notice and no actual output") {
    auto p = build_reflection_prompt(problem, "while True: pass",
                                     failing(sandbox::ExecStatus::timeout, "partial"), 1);
    CHECK(p.user.find("Time Limit Exceeded") != std::string::npos);
    CHECK(p.user.find("Your output") == std::string::npos);
    CHECK(p.user.find("partial") == std::string::npos);
  }
  SUBCASE("runtime error includes stderr") {
    auto p = build_reflection_prompt(problem, "1/0",
                                     failing(sandbox::ExecStatus::runtime_error, "",
                                             "ZeroDivisionError: division by zero\n"),
                                     1);
    CHECK(p.user.find("ZeroDivisionError") != std::string::npos);
  }
  SUBCASE("passing verdict is rejected") {
    sandbox::JudgeVerdict ok;
    ok.passed = true;
    CHECK_THROWS_AS(build_reflection_prompt(problem, "x", ok, 1), std::invalid_argument);
  }
  SUBCASE("round outside the range is rejected") {
    auto v = failing(sandbox::ExecStatus::ok, "5\n");
    CHECK_THROWS(build_reflection_prompt(problem, "x", v, 0));
    CHECK_THROWS(build_reflection_prompt(problem, "x", v, 6, 5));
  }
}

TEST_CASE("golden prompts") {
  auto problem = golden_problem();
  check_golden("mot_prompt.txt", render_prompt(build_mot_prompt(problem, kGoldenSolution)));
  check_golden("clean_prompt.txt", render_prompt(build_clean_prompt(problem, kGoldenSolution)));
  auto reflect = build_reflection_prompt(problem, "print(5)",
                                         failing(sandbox::ExecStatus::ok, "5\n"), 2, 5);
  CHECK(reflect.user.find("round 2 of 5") != std::string::npos);
  check_golden("reflect_round2_prompt.txt", render_prompt(reflect));
}

TEST_CASE("template rendering") {
  CHECK(render_template("a {{x}} b {{y}}", {{"x", "1"}, {"y", "{{x}}"}}) == "a 1 b {{x}}");
  CHECK_THROWS_AS(render_template("{{missing}}", {}), std::invalid_argument);
}

TEST_CASE("well-formed response parses") {
  auto s = parse_mot_response(kWellFormed);
  REQUIRE(s.outline.size() == 2);
  CHECK(s.outline[0].name == "read_input");
  CHECK(s.outline[0].docstring == "Read n and the list.");
  CHECK_FALSE(s.outline[0].has_body);
  CHECK(s.outline[1].name == "count_positive");
  CHECK(s.final_code.find("print(count_positive(read_input()))") != std::string::npos);
  CHECK_FALSE(s.code_before_outline);
  CHECK_FALSE(s.outline_has_stray_code);
}

TEST_CASE("response grammar violations") {
  std::string text = kWellFormed;
  SUBCASE("no step 2") {
    auto cut = text.substr(0, text.find("### STEP 2"));
    try {
      parse_mot_response(cut);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.kind() == ParseErrorKind::missing_step);
      CHECK(e.failure().step == 2);
    }
  }
  SUBCASE("no step 1") {
    auto parsed = parse_mot_response_detailed(text.substr(text.find("### STEP 2")));
    REQUIRE(parsed.failure.has_value());
    CHECK(parsed.failure->kind == ParseErrorKind::missing_step);
    CHECK(parsed.failure->step == 1);
  }
  SUBCASE("two final blocks") {
    auto parsed = parse_mot_response_detailed(text + "\n```python\nprint(1)\n```\n");
    REQUIRE(parsed.failure.has_value());
    CHECK(parsed.failure->kind == ParseErrorKind::multiple_main);
    CHECK(parsed.solution.outline.size() == 2);
  }
  SUBCASE("no final block") {
    auto cut = text.substr(0, text.find("### STEP 2")) + "### STEP 2\nnothing here\n";
    CHECK_THROWS_AS(parse_mot_response(cut), ParseError);
    CHECK(parse_mot_response_detailed(cut).failure->kind == ParseErrorKind::no_final_code);
  }
  SUBCASE("step 2 before step 1") {
    std::string swapped = "### STEP 2\n```python\nprint(1)\n```\n### STEP 1\n```python\ndef f():\n    ...\n```\n";
    CHECK(parse_mot_response_detailed(swapped).failure->kind == ParseErrorKind::out_of_order);
  }
}

TEST_CASE("outline bodies and stray code are detected") {
  std::string text = kWellFormed;
  auto with_body = text;
  with_body.replace(with_body.find("    \"\"\"Count values above zero.\"\"\"\n    ...\n"),
                    std::string("    \"\"\"Count values above zero.\"\"\"\n    ...\n").size(),
                    "    \"\"\"Count values above zero.\"\"\"\n    return 1\n");
  auto s = parse_mot_response(with_body);
  REQUIRE(s.outline.size() == 2);
  CHECK(s.outline[1].has_body);

  auto stray = text;
  stray.insert(stray.find("```\n\n### STEP 2"), "x = 1\n");
  CHECK(parse_mot_response(stray).outline_has_stray_code);
}

TEST_CASE("render then parse round-trips") {
  auto s = parse_mot_response(kWellFormed);
  auto again = parse_mot_response(render_mot_response(s));
  REQUIRE(again.outline.size() == s.outline.size());
  for (std::size_t i = 0; i < s.outline.size(); ++i) {
    CHECK(again.outline[i].name == s.outline[i].name);
    CHECK(again.outline[i].docstring == s.outline[i].docstring);
  }
  CHECK(again.final_code == s.final_code);
}

TEST_CASE("single-block answers and free-form extraction") {
  CHECK(parse_single_block_response("ok\n```python\nprint(1)\n```\n").ok());
  CHECK(parse_single_block_response("no code").failure->kind == ParseErrorKind::no_final_code);
  CHECK(parse_single_block_response("```\na\n```\n```\nb\n```\n").failure->kind ==
        ParseErrorKind::multiple_main);
  CHECK(extract_program("text\n```python\nprint(1)\n```\nmore\n```python\nprint(2)\n```") ==
        "print(2)\n");
  CHECK(extract_program("print(3)") == "print(3)\n");
}
