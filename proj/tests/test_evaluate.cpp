#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "motkit/evaluate.hpp"
#include "passk_oracle.hpp"
#include "support.hpp"

using namespace motkit;
using namespace motkit::eval;
using corpus::Difficulty;

namespace {

Candidate candidate(bool passed, int functions = 0, double mi = 0.0, double time = 0.0,
                    double memory = 0.0) {
  Candidate c;
  c.verdict.passed = passed;
  c.verdict.avg_time = time;
  c.verdict.avg_peak_memory = memory;
  c.metrics.function_count = functions;
  c.metrics.maintainability = mi;
  return c;
}

GenerationRecord record(std::string id, int n, int c) {
  GenerationRecord r{std::move(id), {}};
  for (int i = 0; i < n; ++i) r.candidates.push_back(candidate(i < c));
  return r;
}

corpus::Problem problem(std::string id, Difficulty d, corpus::Split split = corpus::Split::test) {
  corpus::Problem p;
  p.id = std::move(id);
  p.difficulty = d;
  p.split = split;
  p.tests = {{"1\n", "2\n"}};
  return p;
}

const PassAtKRow& row(const EvalReport& r, const std::string& label) {
  for (const auto& x : r.pass_at_k) {
    if (x.label == label) return x;
  }
  throw std::runtime_error("no row " + label);
}

double cell(const EvalReport& r, const std::string& label, int k) {
  return row(r, label).cells.at(k).value.value();
}

}  // namespace

TEST_CASE("pass@k reference values") {
  CHECK(pass_at_k(1, 1, 1) == 1.0);
  CHECK(pass_at_k(5, 0, 3) == 0.0);
  CHECK(pass_at_k(5, 2, 3) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(pass_at_k(200, 1, 1) == doctest::Approx(0.005));
  CHECK(pass_at_k(1000, 500, 100) == doctest::Approx(1.0));
}

TEST_CASE("pass@k equals subset enumeration") {
  for (int n = 1; n <= 8; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        CHECK(std::abs(pass_at_k(n, c, k) - support::pass_at_k_by_enumeration(n, c, k)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("pass@k rejects invalid arguments") {
  CHECK_THROWS_AS(pass_at_k(3, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_k(3, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_k(3, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(pass_at_k(3, -1, 1), std::invalid_argument);
}

TEST_CASE("all problems solved") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::interview), problem("b", Difficulty::interview)};
  auto r = evaluate_corpus(c, {record("a", 2, 2), record("b", 2, 2)}, {1});
  CHECK(r.pass_at_k.size() == 2);
  CHECK(cell(r, "interview", 1) == 1.0);
  CHECK(cell(r, "All", 1) == 1.0);
}

TEST_CASE("per-difficulty rows and the All row") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::introductory), problem("b", Difficulty::competition)};
  auto r = evaluate_corpus(c, {record("a", 1, 1), record("b", 1, 0)}, {1});
  CHECK(cell(r, "introductory", 1) == 1.0);
  CHECK(cell(r, "competition", 1) == 0.0);
  CHECK(cell(r, "All", 1) == 0.5);
}

TEST_CASE("thirty-problem table against hand-computed values") {
  // Difficulty cycles with i % 3 and c = i % 6 out of n = 5, so each level
  // alternates between two correct counts.
  corpus::Corpus corp;
  std::vector<GenerationRecord> records;
  const Difficulty levels[] = {Difficulty::introductory, Difficulty::interview, Difficulty::competition};
  for (int i = 0; i < 30; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "p%02d", i);
    corp.problems.push_back(problem(id, levels[i % 3]));
    records.push_back(record(id, 5, std::min(i % 6, 5)));
  }
  corp.problems.push_back(problem("short", Difficulty::competition));
  records.push_back(record("short", 1, 1));

  auto r = evaluate_corpus(corp, records, {2, 1});
  CHECK(r.ks == std::vector<int>{1, 2});
  CHECK(cell(r, "introductory", 1) == doctest::Approx(0.3));
  CHECK(cell(r, "interview", 1) == doctest::Approx(0.5));
  CHECK(cell(r, "competition", 1) == doctest::Approx((10 * 0.7 + 1.0) / 11));
  CHECK(cell(r, "introductory", 2) == doctest::Approx(0.45));
  CHECK(cell(r, "interview", 2) == doctest::Approx(0.7));
  // The n = 1 problem cannot contribute to pass@2.
  CHECK(cell(r, "competition", 2) == doctest::Approx(0.85));
  CHECK(row(r, "competition").cells.at(2).problems == 10);
  CHECK(row(r, "competition").cells.at(1).problems == 11);
  CHECK(cell(r, "All", 2) == doctest::Approx(2.0 / 3.0));
  CHECK(cell(r, "All", 1) == doctest::Approx((15.0 + 1.0) / 31));

  auto mean_mode = evaluate_corpus(corp, records, {1}, AllMode::per_level_mean);
  CHECK(cell(mean_mode, "All", 1) == doctest::Approx((0.3 + 0.5 + (7.0 + 1.0) / 11) / 3));

  CHECK(pass_at_k_csv(r) ==
        "metric,introductory,interview,competition,All\n"
        "pass@1,30.00,50.00,72.73,51.61\n"
        "pass@2,45.00,70.00,85.00,66.67\n");
}

TEST_CASE("cell without any eligible problem is absent") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::interview)};
  auto r = evaluate_corpus(c, {record("a", 1, 1)}, {1, 3});
  CHECK_FALSE(row(r, "interview").cells.at(3).value.has_value());
  CHECK(pass_at_k_csv(r) == "metric,interview,All\npass@1,100.00,100.00\npass@3,,\n");
}

TEST_CASE("unknown and duplicate problem ids") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::interview)};
  try {
    evaluate_corpus(c, {record("a", 1, 1), record("ghost", 1, 1), record("zombie", 1, 0)}, {1});
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("ghost") != std::string::npos);
    CHECK(msg.find("zombie") != std::string::npos);
  }
  CHECK_THROWS_AS(evaluate_corpus(c, {record("a", 1, 1), record("a", 1, 1)}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_corpus(c, {record("a", 1, 1)}, {0}), std::invalid_argument);
}

TEST_CASE("report does not depend on record order") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::interview), problem("b", Difficulty::competition),
                problem("c", Difficulty::interview)};
  std::vector<GenerationRecord> fwd = {record("a", 3, 1), record("b", 3, 2), record("c", 3, 0)};
  std::vector<GenerationRecord> rev(fwd.rbegin(), fwd.rend());
  CHECK(report_json(evaluate_corpus(c, fwd, {1, 2})) == report_json(evaluate_corpus(c, rev, {1, 2})));
}

TEST_CASE("function count profile") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::interview), problem("b", Difficulty::interview)};
  SUBCASE("single bin") {
    GenerationRecord a{"a", {candidate(true, 0), candidate(true, 0)}};
    auto prof = function_accuracy_profile({a}, c);
    REQUIRE(prof.size() == 1);
    CHECK(prof.at({Difficulty::interview, 0}).accuracy == 1.0);
  }
  SUBCASE("passing modular candidates and failing flat ones") {
    GenerationRecord a{"a", {candidate(true, 2), candidate(false, 0)}};
    GenerationRecord b{"b", {candidate(true, 2), candidate(false, 0), candidate(true, 11)}};
    auto prof = function_accuracy_profile({a, b}, c, 8);
    CHECK(prof.at({Difficulty::interview, 2}).accuracy == 1.0);
    CHECK(prof.at({Difficulty::interview, 2}).count == 2);
    CHECK(prof.at({Difficulty::interview, 0}).accuracy == 0.0);
    CHECK(prof.at({Difficulty::interview, 8}).count == 1);
    CHECK(function_profile_csv(prof, 8) ==
          "difficulty,functions,count,passed,accuracy\n"
          "interview,0,2,0,0.000000\n"
          "interview,2,2,2,1.000000\n"
          "interview,8+,1,1,1.000000\n");
  }
  SUBCASE("no records") { CHECK(function_accuracy_profile({}, c).empty()); }
}

TEST_CASE("resource profile averages passed candidates only") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::introductory), problem("b", Difficulty::competition)};
  constexpr double MB = 1024.0 * 1024.0;
  SUBCASE("one candidate") {
    GenerationRecord a{"a", {candidate(true, 0, 0, 1.0, 10 * MB)}};
    auto rows = resource_profile({a}, c);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].label == "introductory");
    CHECK(*rows[0].avg_time == 1.0);
    CHECK(*rows[0].avg_peak_memory == 10 * MB);
  }
  SUBCASE("two candidates") {
    GenerationRecord a{"a", {candidate(true, 0, 0, 1.0), candidate(true, 0, 0, 3.0)}};
    CHECK(*resource_profile({a}, c)[0].avg_time == 2.0);
  }
  SUBCASE("failures are excluded") {
    GenerationRecord a{"a", {candidate(true, 0, 0, 1.0, 4 * MB), candidate(false, 0, 0, 9.0, 90 * MB),
                             candidate(true, 0, 0, 2.0, 8 * MB)}};
    GenerationRecord b{"b", {candidate(false, 0, 0, 5.0, MB)}};
    auto rows = resource_profile({a, b}, c);
    REQUIRE(rows.size() == 3);
    CHECK(*rows[0].avg_time == 1.5);
    CHECK(*rows[0].avg_peak_memory == 6 * MB);
    CHECK(rows[1].label == "competition");
    CHECK(rows[1].passed == 0);
    CHECK_FALSE(rows[1].avg_time.has_value());
    CHECK(rows[2].label == "All");
    CHECK(resource_profile_csv(rows) ==
          "difficulty,passed,avg_time_s,avg_peak_memory_mb\n"
          "introductory,2,1.500000,6.000\n"
          "competition,0,,\n"
          "All,2,1.500000,6.000\n");
  }
}

TEST_CASE("MI profile") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::interview, corpus::Split::test),
                problem("b", Difficulty::competition, corpus::Split::valid)};
  SUBCASE("single passed candidate") {
    GenerationRecord a{"a", {candidate(true, 0, 122.31)}};
    CHECK(*mi_profile({a}, c)[0].mean_mi == doctest::Approx(122.31));
  }
  SUBCASE("two passed candidates and an empty level") {
    GenerationRecord a{"a", {candidate(true, 0, 100), candidate(true, 0, 150), candidate(false, 0, 10)}};
    GenerationRecord b{"b", {candidate(false, 0, 90)}};
    auto rows = mi_profile({a, b}, c);
    CHECK(mi_profile_csv(rows) ==
          "group,label,passed,mean_mi\n"
          "difficulty,interview,2,125.0000\n"
          "difficulty,competition,0,\n"
          "difficulty,All,2,125.0000\n"
          "split,valid,0,\n"
          "split,test,2,125.0000\n");
  }
}

TEST_CASE("report JSON can leave out measured resources") {
  corpus::Corpus c;
  c.problems = {problem("a", Difficulty::interview)};
  auto r = evaluate_corpus(c, {GenerationRecord{"a", {candidate(true, 1, 80, 0.5, 1e6)}}}, {1});
  auto full = nlohmann::json::parse(report_json(r));
  auto stable = nlohmann::json::parse(report_json(r, false));
  CHECK(full.contains("resource_profile"));
  CHECK_FALSE(stable.contains("resource_profile"));
  CHECK(stable["pass_at_k"][0]["cells"][0]["value"] == 1.0);
  CHECK(stable["function_profile"][0]["functions"] == 1);
}

TEST_SUITE("self reflection") {
  namespace fs = std::filesystem;

  corpus::Problem doubling() {
    corpus::Problem p = problem("double", Difficulty::interview);
    p.statement = "Read n and print 2n.";
    p.tests = {{"3\n", "6\n"}, {"-1\n", "-2\n"}};
    return p;
  }

  const char* kRight = "```python\nprint(2 * int(input()))\n```";
  const char* kWrong = "```python\nprint(int(input()))\n```";

  struct Harness {
    support::TempDir dir;
    std::shared_ptr<llm::MockProvider> mock;
    std::unique_ptr<llm::Client> client;
    sandbox::JudgeOptions opts;

    explicit Harness(const nlohmann::json& rules) {
      std::ofstream(dir / "mock.json") << nlohmann::json{{"rules", rules}}.dump();
      mock = std::make_shared<llm::MockProvider>(dir.path());
      llm::ProviderConfig cfg;
      cfg.api_key_env = "";
      cfg.backoff_base = std::chrono::milliseconds(1);
      client = std::make_unique<llm::Client>(mock, cfg);
      opts.limits.wall_time = std::chrono::duration<double>(5);
    }
  };

  TEST_CASE("solved immediately") {
    Harness h(nlohmann::json::array({{{"tag", "direct"}, {"response", kRight}}}));
    auto t = self_reflect(doubling(), *h.client, h.opts);
    CHECK(t.rounds.size() == 1);
    CHECK(t.solved_at == 0);
    CHECK_FALSE(t.error.has_value());
  }

  TEST_CASE("solved by the second reflection") {
    Harness h(nlohmann::json::array({{{"tag", "reflect"}, {"contains", {"round 2 of"}}, {"response", kRight}},
                                     {{"response", kWrong}}}));
    auto t = self_reflect(doubling(), *h.client, h.opts);
    REQUIRE(t.rounds.size() == 3);
    CHECK(t.solved_at == 2);
    CHECK(t.rounds[0].prompt.tag == prompt::PromptTag::direct);
    CHECK(t.rounds[1].prompt.tag == prompt::PromptTag::reflect);
    CHECK(t.rounds[1].prompt.user.find("print(int(input()))") != std::string::npos);
    CHECK(t.rounds[2].verdict.passed);

    auto j = nlohmann::json::parse(trace_json(t));
    CHECK(j["solved_at"] == 2);
    CHECK(j["rounds"].size() == 3);
    CHECK(j["rounds"][0]["failure_status"] == "wrong_answer");
    CHECK_FALSE(j["rounds"][2].contains("failure_status"));
  }

  TEST_CASE("never solved stops at the cap") {
    Harness h(nlohmann::json::array({{{"response", kWrong}}}));
    auto t = self_reflect(doubling(), *h.client, h.opts);
    CHECK(t.rounds.size() == 5);
    CHECK_FALSE(t.solved_at.has_value());
    CHECK(h.mock->calls() == 5);

    auto one = self_reflect(doubling(), *h.client, h.opts, 1);
    CHECK(one.rounds.size() == 1);
    CHECK_THROWS(self_reflect(doubling(), *h.client, h.opts, 0));
  }

  TEST_CASE("provider failure ends the loop") {
    Harness h(nlohmann::json::array({{{"tag", "direct"}, {"response", kWrong}}}));
    auto t = self_reflect(doubling(), *h.client, h.opts);
    CHECK(t.rounds.size() == 1);
    REQUIRE(t.error.has_value());
    CHECK(t.error->find("request") == 0);
  }
}
