#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "motkit/corpus.hpp"
#include "motkit/pipeline.hpp"
#include "support.hpp"

using namespace motkit;
using namespace motkit::pipeline;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<json> jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

// Writes the named problems of the 20-problem fixture as a corpus file.
fs::path subset(const support::TempDir& dir, const std::string& name,
                const std::vector<std::string>& ids) {
  auto all = corpus::load_corpus(support::fixture("corpus20.jsonl"), corpus::Split::test).corpus;
  corpus::Corpus out;
  for (const auto& id : ids) out.problems.push_back(*all.find(id));
  auto path = dir / name;
  corpus::save_corpus(out, path);
  return path;
}

// Base configuration: e2e mock provider, fast retries, short limits.
json base_config(const support::TempDir& dir) {
  return {{"provider", {{"model_name", "mock-model"}, {"api_key_env", ""}, {"backoff_base_ms", 1}}},
          {"mock_provider", support::fixture("e2e/mock").string()},
          {"limits", {{"wall_time_s", 5}, {"memory_mb", 256}}},
          {"outdir", (dir / "out").string()},
          {"workers", 2}};
}

PipelineConfig config(const json& j, const support::TempDir& dir) {
  return parse_config(j.dump(), dir.path());
}

// Captures std::cerr for the lifetime of the object.
class CaptureStderr {
 public:
  CaptureStderr() : old_(std::cerr.rdbuf(buf_.rdbuf())) {}
  ~CaptureStderr() { std::cerr.rdbuf(old_); }
  std::string text() const { return buf_.str(); }

 private:
  std::ostringstream buf_;
  std::streambuf* old_;
};

int run_cli(const std::string& args) {
  int status = std::system((std::string(MOTKIT_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config loading") {
  support::TempDir dir;
  SUBCASE("paths resolve against the config file") {
    auto cfg = load_config(support::fixture("e2e/config.json"));
    REQUIRE(cfg.train_corpus.has_value());
    CHECK(*cfg.train_corpus == support::fixture("e2e/train.jsonl"));
    CHECK(*cfg.mock_provider == support::fixture("e2e/mock"));
    CHECK(cfg.ks == std::vector<int>{1, 2});
    CHECK(cfg.provider.model_name == "mock-model");
    CHECK(cfg.limits.wall_time.count() == 5.0);
    CHECK_NOTHROW(cfg.validate());
  }
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parse_config(R"({"wokers": 2})", dir.path()), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"provider": {"modle": "x"}})", dir.path()), ConfigError);
  }
  SUBCASE("invariants are checked") {
    CHECK_THROWS_AS(parse_config(R"({"workers": 0})", dir.path()).validate(), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"dedup_threshold": 1.5})", dir.path()).validate(), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"corpus": {"test": "missing.jsonl"}})", dir.path()).validate(),
                    ConfigError);
    CHECK_THROWS_AS(parse_config("{not json", dir.path()), ConfigError);
  }
  SUBCASE("workers do not change the config hash") {
    auto a = parse_config(R"({"workers": 1})", dir.path());
    auto b = parse_config(R"({"workers": 8})", dir.path());
    CHECK(config_json(a) == config_json(b));
    auto c = parse_config(R"({"evaluate": {"ks": [1, 5]}})", dir.path());
    CHECK(config_json(a) != config_json(c));
  }
  SUBCASE("derived paths") {
    auto cfg = parse_config(R"({"outdir": "o"})", dir.path());
    CHECK(cfg.effective_cache_dir() == dir / "o" / "cache");
    CHECK(cfg.effective_results() == dir / "o" / "evaluate" / "results.jsonl");
  }
}

TEST_CASE("transform accepts valid responses and rejects a two-main answer") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["train"] = subset(dir, "train.jsonl", {"sum-two", "reverse-word", "max-of-list"}).string();
  j["transform"] = {{"clean", false}};
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_transform(config(j, dir), out) == 0);

  auto accepted = jsonl(dir / "out/transform/mot.jsonl");
  auto rejected = jsonl(dir / "out/transform/rejected.jsonl");
  CHECK(accepted.size() == 2);
  REQUIRE(rejected.size() == 1);
  CHECK(rejected[0]["problem_id"] == "max-of-list");
  CHECK(rejected[0]["marker"] == "m3_main_code_count");
  CHECK(slurp(dir / "out/transform/clean.jsonl").empty());

  auto rates = slurp(dir / "out/transform/filter_rates.csv");
  CHECK(rates.find("mot,apps,2,2,100%") != std::string::npos);
  CHECK(rates.find("mot,codecontests,1,0,0%") != std::string::npos);
  CHECK(out.str().find("100%") != std::string::npos);

  auto manifest = json::parse(slurp(dir / "out/transform/manifest.json"));
  CHECK(manifest["command"] == "transform");
  CHECK(manifest["inputs"]["train"]["sha256"].get<std::string>().size() == 64);
}

TEST_CASE("transform all valid") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["train"] = subset(dir, "train.jsonl", {"sum-two", "reverse-word", "fibonacci"}).string();
  j["transform"] = {{"clean", false}};
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_transform(config(j, dir), out) == 0);
  CHECK(jsonl(dir / "out/transform/mot.jsonl").size() == 3);
  CHECK(jsonl(dir / "out/transform/rejected.jsonl").empty());
}

TEST_CASE("transform removes training problems that leak into the test split") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["train"] = subset(dir, "train.jsonl", {"sum-two", "reverse-word"}).string();
  j["corpus"]["test"] = subset(dir, "test.jsonl", {"sum-two"}).string();
  j["transform"] = {{"clean", false}};
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_transform(config(j, dir), out) == 0);
  auto dedup = json::parse(slurp(dir / "out/transform/dedup.json"));
  CHECK(dedup.dump().find("sum-two") != std::string::npos);
  auto accepted = jsonl(dir / "out/transform/mot.jsonl");
  REQUIRE(accepted.size() == 1);
  CHECK(accepted[0]["problem_id"] == "reverse-word");
}

TEST_CASE("transform on an empty corpus") {
  support::TempDir dir;
  auto j = base_config(dir);
  std::ofstream(dir / "empty.jsonl").close();
  j["corpus"]["train"] = (dir / "empty.jsonl").string();
  std::ostringstream out;
  CaptureStderr quiet;
  CHECK(cmd_transform(config(j, dir), out) == 0);
  CHECK(slurp(dir / "out/transform/mot.jsonl").empty());
  CHECK(slurp(dir / "out/transform/clean.jsonl").empty());
}

TEST_CASE("transform stops on an authentication failure") {
  support::TempDir dir;
  auto j = base_config(dir);
  j.erase("mock_provider");
  j["provider"]["api_key_env"] = "MOTKIT_PIPELINE_TEST_UNSET_KEY";
  j["provider"]["endpoint"] = "http://127.0.0.1:9/v1/chat/completions";
  ::unsetenv("MOTKIT_PIPELINE_TEST_UNSET_KEY");
  j["corpus"]["train"] = subset(dir, "train.jsonl", {"sum-two"}).string();
  std::ostringstream out;
  CaptureStderr err;
  CHECK(cmd_transform(config(j, dir), out) == 1);
  CHECK(err.text().find("auth") != std::string::npos);
}

TEST_CASE("evaluate reference solutions") {
  support::TempDir dir;
  std::vector<std::string> ids = {"sum-two", "reverse-word", "fibonacci"};
  auto test = subset(dir, "test.jsonl", ids);
  auto all = corpus::load_corpus(test, corpus::Split::test).corpus;
  {
    std::ofstream cands(dir / "cands.jsonl");
    for (const auto& p : all.problems) {
      cands << json{{"problem_id", p.id}, {"programs", p.solutions}}.dump() << "\n";
    }
  }
  auto j = base_config(dir);
  j["corpus"]["test"] = test.string();
  j["evaluate"] = {{"candidates", (dir / "cands.jsonl").string()}};
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_evaluate(config(j, dir), out) == 0);
  auto report = json::parse(slurp(dir / "out/evaluate/report.json"));
  for (const auto& row : report["pass_at_k"]) CHECK(row["cells"][0]["value"] == 1.0);
  CHECK_FALSE(report.contains("resource_profile"));
  auto results = jsonl(dir / "out/evaluate/results.jsonl");
  REQUIRE(results.size() == 3);
  CHECK(results[0]["problem_id"] == "sum-two");
  CHECK(results[0]["c"] == 1);
  CHECK(jsonl(dir / "out/evaluate/measurements.jsonl").size() == 3);
  CHECK(out.str().find("pass@1") != std::string::npos);
}

TEST_CASE("evaluate error paths") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["test"] = subset(dir, "test.jsonl", {"sum-two"}).string();
  std::ostringstream out;
  CaptureStderr err;

  SUBCASE("missing candidates file") {
    j["evaluate"] = {{"candidates", (dir / "nope.jsonl").string()}};
    CHECK(cmd_evaluate(config(j, dir), out) == 1);
  }
  SUBCASE("unknown problem ids are listed") {
    std::ofstream(dir / "c.jsonl") << R"j({"problem_id": "ghost-1", "programs": ["print(1)"]})j" << "\n"
                                   << R"j({"problem_id": "sum-two", "programs": ["print(1)"]})j" << "\n";
    j["evaluate"] = {{"candidates", (dir / "c.jsonl").string()}};
    CHECK(cmd_evaluate(config(j, dir), out) == 1);
    CHECK(err.text().find("ghost-1") != std::string::npos);
  }
  SUBCASE("no candidate source") {
    CHECK(cmd_evaluate(config(j, dir), out) == 1);
  }
}

TEST_CASE("evaluate samples programs from the provider") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["test"] = subset(dir, "test.jsonl", {"triangle-area"}).string();
  j["evaluate"] = {{"generate_samples", 2}, {"ks", {1, 2}}};
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_evaluate(config(j, dir), out) == 0);
  auto results = jsonl(dir / "out/evaluate/results.jsonl");
  REQUIRE(results.size() == 1);
  CHECK(results[0]["n"] == 2);
  CHECK(results[0]["c"] == 2);
}

TEST_CASE("reflect after evaluate") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["test"] = support::fixture("e2e/test.jsonl").string();
  j["evaluate"] = {{"candidates", support::fixture("e2e/candidates.jsonl").string()}};
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_evaluate(config(j, dir), out) == 0);

  SUBCASE("one round means only the direct attempt") {
    j["reflect"] = {{"max_rounds", 1}};
    REQUIRE(cmd_reflect(config(j, dir), out) == 0);
    auto traces = jsonl(dir / "out/reflect/traces.jsonl");
    CHECK(traces.size() == 4);
    for (const auto& t : traces) CHECK(t["rounds"].size() <= 2);
  }
  SUBCASE("comparison shows the uplift") {
    REQUIRE(cmd_reflect(config(j, dir), out) == 0);
    auto traces = jsonl(dir / "out/reflect/traces.jsonl");
    int solved = 0;
    for (const auto& t : traces) {
      CHECK(t["rounds"].size() <= 5);
      solved += t["solved_at"].is_null() ? 0 : 1;
    }
    CHECK(solved == 3);
    auto csv = slurp(dir / "out/reflect/comparison.csv");
    CHECK(csv.rfind("difficulty,problems,failed_before,solved_by_reflection,pass@1_before,pass@1_after\n", 0) == 0);
    CHECK(csv.find("All,10,4,3,45.00,75.00") != std::string::npos);
  }
}

TEST_CASE("reflect with nothing to fix") {
  support::TempDir dir;
  auto test = subset(dir, "test.jsonl", {"sum-two"});
  auto p = corpus::load_corpus(test, corpus::Split::test).corpus.problems.at(0);
  std::ofstream(dir / "c.jsonl") << json{{"problem_id", p.id}, {"programs", p.solutions}}.dump() << "\n";
  auto j = base_config(dir);
  j["corpus"]["test"] = test.string();
  j["evaluate"] = {{"candidates", (dir / "c.jsonl").string()}};
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_evaluate(config(j, dir), out) == 0);
  CHECK(cmd_reflect(config(j, dir), out) == 0);
  CHECK(slurp(dir / "out/reflect/traces.jsonl").empty());
}

TEST_CASE("analyze") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["test"] = support::fixture("e2e/test.jsonl").string();
  std::ostringstream out;
  CaptureStderr err;

  SUBCASE("profiles from evaluate results") {
    j["evaluate"] = {{"candidates", support::fixture("e2e/candidates.jsonl").string()}};
    REQUIRE(cmd_evaluate(config(j, dir), out) == 0);
    REQUIRE(cmd_analyze(config(j, dir), out) == 0);
    auto f = slurp(dir / "out/analyze/function_profile.csv");
    auto r = slurp(dir / "out/analyze/resource_profile.csv");
    auto m = slurp(dir / "out/analyze/mi_profile.csv");
    CHECK(f.rfind("difficulty,functions,count,passed,accuracy\n", 0) == 0);
    CHECK(r.rfind("difficulty,passed,avg_time_s,avg_peak_memory_mb\n", 0) == 0);
    CHECK(m.rfind("group,label,passed,mean_mi\n", 0) == 0);
    CHECK(std::count(f.begin(), f.end(), '\n') >= 2);
    CHECK(r.find("\nAll,") != std::string::npos);
    CHECK(jsonl(dir / "out/analyze/metrics.jsonl").size() == 20);
  }
  SUBCASE("no passing candidates leaves means empty") {
    fs::create_directories(dir / "out/evaluate");
    std::ofstream(dir / "out/evaluate/results.jsonl")
        << R"({"problem_id":"sum-two","difficulty":"introductory","split":"test","source":"apps","n":1,"c":0,"candidates":[{"passed":false,"matched":[false],"failure":"wrong_answer","metrics":{"halstead_volume":1.0,"cyclomatic":1,"sloc":1,"comment_density":0.0,"maintainability":100.0,"function_count":0},"program":"print(1)\n"}]})"
        << "\n";
    REQUIRE(cmd_analyze(config(j, dir), out) == 0);
    auto m = slurp(dir / "out/analyze/mi_profile.csv");
    CHECK(m.find("difficulty,introductory,0,\n") != std::string::npos);
    CHECK(err.text().find("measurements") != std::string::npos);
  }
  SUBCASE("malformed results name the line") {
    fs::create_directories(dir / "out/evaluate");
    std::ofstream(dir / "out/evaluate/results.jsonl") << "{}\n{broken\n";
    CHECK(cmd_analyze(config(j, dir), out) == 1);
    CHECK(err.text().find("results.jsonl:") != std::string::npos);
  }
  SUBCASE("missing results") {
    CHECK(cmd_analyze(config(j, dir), out) == 1);
  }
}

TEST_CASE("stats") {
  support::TempDir dir;
  auto j = base_config(dir);
  j["corpus"]["test"] = support::fixture("corpus20.jsonl").string();
  std::ostringstream out;
  CaptureStderr quiet;
  REQUIRE(cmd_stats(config(j, dir), out) == 0);
  auto s = json::parse(slurp(dir / "out/stats/stats.json"));
  CHECK(s["test"]["problems"] == 20);
  CHECK(s["test"]["untestable"] == 2);
  CHECK(slurp(dir / "out/stats/stats.csv").rfind("split,source,difficulty,problems\n", 0) == 0);

  j.erase("corpus");
  CHECK(cmd_stats(config(j, dir), out) == 1);
}

TEST_CASE("command-line entry point") {
  support::TempDir dir;
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("no-such-command") != 0);
  CHECK(run_cli("--config " + support::fixture("e2e/config.json").string() + " --outdir " +
                (dir / "o").string() + " stats") == 0);
  CHECK(fs::exists(dir / "o/stats/stats.csv"));
  CHECK(run_cli("--config " + (dir / "missing.json").string() + " stats") != 0);
  CHECK(run_cli("--config " + support::fixture("e2e/config.json").string() + " --outdir " +
                (dir / "o").string() + " --workers 0 stats") != 0);
}
