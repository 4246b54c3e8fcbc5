#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <variant>

#include "json.hpp"
#include "motkit/corpus.hpp"
#include "motkit/evaluate.hpp"
#include "motkit/io.hpp"
#include "motkit/parallel.hpp"
#include "motkit/pipeline.hpp"
#include "motkit/promptgen.hpp"
#include "motkit/validator.hpp"

#ifndef MOTKIT_VERSION
#define MOTKIT_VERSION "dev"
#endif

namespace motkit::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string jsonl_dump(const ordered_json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string utc_now() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects the files of one command run and writes manifest.json last.
class OutputDir {
 public:
  OutputDir(const PipelineConfig& cfg, std::string command)
      : cfg_(cfg), command_(std::move(command)), dir_(cfg.outdir / command_) {
    fs::create_directories(dir_);
  }

  const fs::path& path() const { return dir_; }

  void write(const std::string& name, std::string_view content) {
    io::write_file_atomic(dir_ / name, content);
    outputs_.push_back(name);
  }

  // Measured inputs differ on every run, so hashing them would make the
  // manifest unstable.
  void input(const std::string& role, const fs::path& path, bool hash = true) {
    inputs_[role] = {{"path", path.string()}};
    if (hash) inputs_[role]["sha256"] = io::sha256_hex(io::read_file(path));
  }

  ordered_json& summary() { return summary_; }

  void finish() {
    ordered_json m;
    m["command"] = command_;
    m["tool_version"] = MOTKIT_VERSION;
    m["config_sha256"] = io::sha256_hex(config_json(cfg_));
    m["created_at"] = utc_now();
    m["inputs"] = inputs_.is_null() ? ordered_json::object() : inputs_;
    m["outputs"] = outputs_;
    m["summary"] = summary_.is_null() ? ordered_json::object() : summary_;
    io::write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  const PipelineConfig& cfg_;
  std::string command_;
  fs::path dir_;
  ordered_json inputs_;
  std::vector<std::string> outputs_;
  ordered_json summary_;
};

corpus::Corpus load_split(const fs::path& path, corpus::Split split, const char* command) {
  auto loaded = corpus::load_corpus(path, split);
  for (const auto& d : loaded.skipped) {
    std::cerr << "motkit " << command << ": " << path.string() << ":" << d.line
              << ": skipped: " << d.message << "\n";
  }
  return std::move(loaded.corpus);
}

llm::Client make_client(const PipelineConfig& cfg) {
  std::shared_ptr<llm::Provider> provider;
  if (cfg.mock_provider) {
    provider = std::make_shared<llm::MockProvider>(*cfg.mock_provider);
  } else {
    provider = std::make_shared<llm::HttpChatProvider>();
  }
  std::optional<fs::path> cache_root;
  if (cfg.cache) cache_root = cfg.effective_cache_dir();
  return llm::Client(std::move(provider), cfg.provider, cache_root,
                     cfg.fresh ? llm::CacheMode::write_only : llm::CacheMode::read_write);
}

sandbox::JudgeOptions judge_options(const PipelineConfig& cfg) {
  sandbox::JudgeOptions opts;
  opts.limits = cfg.limits;
  opts.policy = cfg.compare;
  opts.runner = cfg.runner;
  return opts;
}

std::string percent(double fraction) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << fraction * 100.0;
  return s.str();
}

template <typename Fn>
int guarded(const PipelineConfig& cfg, const char* command, Fn&& body) {
  try {
    cfg.validate();
    return body();
  } catch (const llm::ProviderError& e) {
    std::cerr << "motkit " << command << ": provider error (" << llm::to_string(e.kind())
              << "): " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "motkit " << command << ": " << e.what() << "\n";
  }
  return 1;
}

// ---------------------------------------------------------------- transform

struct TransformItem {
  const corpus::Problem* problem = nullptr;
  std::size_t solution_index = 0;
  std::string solution;
  validate::DataType type = validate::DataType::mot;
  std::string response;
  std::optional<std::string> error;
  validate::AssessmentResult result;
  prompt::ModularSolution parsed;
};

void complete_into(llm::Client& client, std::vector<TransformItem*>& items,
                   const std::vector<prompt::Prompt>& prompts, bool append) {
  auto results = client.complete_batch(prompts);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (auto* err = std::get_if<llm::ProviderError>(&results[i])) {
      if (err->kind() == llm::ErrorKind::auth) throw *err;
      items[i]->error = std::string(llm::to_string(err->kind())) + ": " + err->what();
      continue;
    }
    const auto& text = std::get<llm::Completion>(results[i]).text;
    items[i]->response = append ? items[i]->response + "\n\n" + text : text;
  }
}

int transform(const PipelineConfig& cfg, std::ostream& out) {
  if (!cfg.train_corpus) throw ConfigError("transform needs corpus.train");
  sandbox::check_runner(cfg.runner);
  OutputDir dir(cfg, "transform");
  dir.input("train", *cfg.train_corpus);

  auto train = load_split(*cfg.train_corpus, corpus::Split::train, "transform");
  ordered_json dedup;
  dedup["threshold"] = cfg.dedup_threshold;
  dedup["removed"] = ordered_json::array();
  for (const auto& [role, path, split] :
       {std::tuple{"valid", cfg.valid_corpus, corpus::Split::valid},
        std::tuple{"test", cfg.test_corpus, corpus::Split::test}}) {
    if (!path) continue;
    dir.input(role, *path);
    auto holdout = load_split(*path, split, "transform");
    auto [kept, report] = corpus::dedup_against(train, holdout, cfg.dedup_threshold);
    train = std::move(kept);
    for (const auto& r : report.removals) {
      dedup["removed"].push_back({{"train_id", r.train_id},
                                  {"holdout_id", r.holdout_id},
                                  {"holdout_split", role},
                                  {"similarity", r.similarity},
                                  {"exact", r.exact}});
    }
  }

  std::vector<TransformItem> items;
  std::size_t untestable = 0;
  for (const auto& p : train.problems) {
    if (p.untestable) {
      ++untestable;
      continue;
    }
    auto sols = corpus::select_solutions(p, cfg.solution_cap);
    for (std::size_t i = 0; i < sols.size(); ++i) {
      for (auto type : {validate::DataType::mot, validate::DataType::clean}) {
        if (type == validate::DataType::mot && !cfg.transform_mot) continue;
        if (type == validate::DataType::clean && !cfg.transform_clean) continue;
        TransformItem item;
        item.problem = &p;
        item.solution_index = i;
        item.solution = sols[i];
        item.type = type;
        items.push_back(std::move(item));
      }
    }
  }
  std::cerr << "motkit transform: " << items.size() << " items from " << train.problems.size()
            << " problems (" << untestable << " untestable skipped)\n";

  auto client = make_client(cfg);
  {
    std::vector<TransformItem*> batch;
    std::vector<prompt::Prompt> prompts;
    for (auto& item : items) {
      batch.push_back(&item);
      if (item.type == validate::DataType::clean) {
        prompts.push_back(prompt::build_clean_prompt(*item.problem, item.solution));
      } else if (cfg.mot_two_call) {
        prompts.push_back(prompt::build_mot_outline_prompt(*item.problem, item.solution));
      } else {
        prompts.push_back(prompt::build_mot_prompt(*item.problem, item.solution));
      }
    }
    complete_into(client, batch, prompts, false);
  }
  if (cfg.mot_two_call) {
    std::vector<TransformItem*> batch;
    std::vector<prompt::Prompt> prompts;
    for (auto& item : items) {
      if (item.type != validate::DataType::mot || item.error) continue;
      batch.push_back(&item);
      prompts.push_back(
          prompt::build_mot_integrate_prompt(*item.problem, item.solution, item.response));
    }
    complete_into(client, batch, prompts, true);
  }

  auto jopts = judge_options(cfg);
  parallel_for(items.size(), cfg.workers, [&](std::size_t i) {
    auto& item = items[i];
    if (item.error) return;
    auto parsed = item.type == validate::DataType::mot
                      ? prompt::parse_mot_response_detailed(item.response)
                      : prompt::parse_single_block_response(item.response);
    item.result = item.type == validate::DataType::mot ? validate::assess_structure(parsed)
                                                       : validate::assess_single_block(parsed);
    item.parsed = std::move(parsed.solution);
    if (item.result.accepted) {
      item.result = validate::assess_functional(item.parsed.final_code, *item.problem, jopts);
    }
  });

  std::string mot, clean, rejected, records, errors;
  std::vector<validate::FilterRecord> filter;
  for (const auto& item : items) {
    const auto& p = *item.problem;
    auto type = std::string(validate::to_string(item.type));
    if (item.error) {
      ordered_json e{{"problem_id", p.id},
                     {"data_type", type},
                     {"solution_index", item.solution_index},
                     {"error", *item.error}};
      errors += jsonl_dump(e) + "\n";
      continue;
    }
    validate::FilterRecord rec{p.id, p.source, item.solution_index, item.type, item.result};
    records += validate::filter_record_json(rec) + "\n";
    filter.push_back(std::move(rec));
    if (item.result.accepted) {
      ordered_json a;
      a["problem_id"] = p.id;
      a["source"] = p.source;
      a["difficulty"] = corpus::to_string(p.difficulty);
      a["solution_index"] = item.solution_index;
      a["question"] = p.statement;
      a["response"] = item.response;
      if (item.type == validate::DataType::mot) {
        std::vector<std::string> names;
        for (const auto& sub : item.parsed.outline) names.push_back(sub.name);
        a["submodules"] = names;
      }
      a["code"] = item.parsed.final_code;
      (item.type == validate::DataType::mot ? mot : clean) += jsonl_dump(a) + "\n";
    } else {
      ordered_json r;
      r["problem_id"] = p.id;
      r["source"] = p.source;
      r["data_type"] = type;
      r["solution_index"] = item.solution_index;
      r["marker"] = validate::to_string(*item.result.marker);
      r["detail"] = item.result.detail;
      r["response"] = item.response;
      rejected += jsonl_dump(r) + "\n";
    }
  }

  auto table = validate::filter_pass_rate(filter);
  auto csv = validate::pass_rate_csv(table);
  dir.write("mot.jsonl", mot);
  dir.write("clean.jsonl", clean);
  dir.write("rejected.jsonl", rejected);
  dir.write("filter_records.jsonl", records);
  dir.write("filter_rates.csv", csv);
  dir.write("dedup.json", dedup.dump(2) + "\n");
  if (!errors.empty()) dir.write("errors.jsonl", errors);

  std::size_t accepted = std::count_if(filter.begin(), filter.end(),
                                       [](const auto& r) { return r.result.accepted; });
  std::size_t failed = items.size() - filter.size();
  auto& s = dir.summary();
  s["problems"] = train.problems.size();
  s["untestable_skipped"] = untestable;
  s["dedup_removed"] = dedup["removed"].size();
  s["items"] = items.size();
  s["accepted"] = accepted;
  s["rejected"] = filter.size() - accepted;
  s["provider_errors"] = failed;
  dir.finish();

  out << csv;
  if (failed > 0) {
    std::cerr << "motkit transform: " << failed << " items failed at the provider; see "
              << (dir.path() / "errors.jsonl").string() << "\n";
    return 1;
  }
  return 0;
}

// ----------------------------------------------------------------- evaluate

struct CandidateSet {
  std::string problem_id;
  std::vector<std::string> programs;
};

std::vector<CandidateSet> read_candidates(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read candidates file " + path.string());
  std::vector<CandidateSet> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      CandidateSet set;
      set.problem_id = j.at("problem_id").get<std::string>();
      set.programs = j.at("programs").get<std::vector<std::string>>();
      out.push_back(std::move(set));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

ordered_json metrics_json(const metrics::CodeMetrics& m) {
  return {{"halstead_volume", m.halstead_volume},
          {"cyclomatic", m.cyclomatic},
          {"sloc", m.sloc},
          {"comment_density", m.comment_density},
          {"maintainability", m.maintainability},
          {"function_count", m.function_count}};
}

metrics::CodeMetrics metrics_from_json(const json& j) {
  metrics::CodeMetrics m;
  m.halstead_volume = j.at("halstead_volume").get<double>();
  m.cyclomatic = j.at("cyclomatic").get<int>();
  m.sloc = j.at("sloc").get<std::size_t>();
  m.comment_density = j.at("comment_density").get<double>();
  m.maintainability = j.at("maintainability").get<double>();
  m.function_count = j.at("function_count").get<int>();
  return m;
}

std::string failure_label(const sandbox::JudgeVerdict& v) {
  const auto* fail = v.failing_outcome();
  if (fail == nullptr) return {};
  return fail->report.status == sandbox::ExecStatus::ok
             ? std::string("wrong_answer")
             : std::string(sandbox::to_string(fail->report.status));
}

std::string result_line(const corpus::Problem& p, const eval::GenerationRecord& rec) {
  ordered_json j;
  j["problem_id"] = p.id;
  j["difficulty"] = corpus::to_string(p.difficulty);
  j["split"] = corpus::to_string(p.split);
  j["source"] = p.source;
  j["n"] = rec.n();
  j["c"] = rec.c();
  j["candidates"] = ordered_json::array();
  for (const auto& cand : rec.candidates) {
    ordered_json c;
    c["passed"] = cand.verdict.passed;
    c["matched"] = cand.verdict.matched_vector();
    auto label = failure_label(cand.verdict);
    c["failure"] = label.empty() ? ordered_json(nullptr) : ordered_json(label);
    c["metrics"] = metrics_json(cand.metrics);
    c["program"] = cand.program;
    j["candidates"].push_back(std::move(c));
  }
  return jsonl_dump(j);
}

// Wall time and memory vary between runs, so they live apart from the
// otherwise reproducible results.
std::string measurement_line(const eval::GenerationRecord& rec) {
  ordered_json j;
  j["problem_id"] = rec.problem_id;
  j["candidates"] = ordered_json::array();
  for (const auto& cand : rec.candidates) {
    j["candidates"].push_back({{"avg_time_s", cand.verdict.avg_time},
                               {"avg_peak_memory_bytes", cand.verdict.avg_peak_memory}});
  }
  return jsonl_dump(j);
}

struct LoadedResults {
  corpus::Corpus stub;
  std::vector<eval::GenerationRecord> records;
  std::optional<fs::path> measurements;
};

void read_measurements(const fs::path& path, std::vector<eval::GenerationRecord>& records) {
  std::map<std::string, eval::GenerationRecord*, std::less<>> by_id;
  for (auto& r : records) by_id[r.problem_id] = &r;
  std::ifstream in(path);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      auto it = by_id.find(j.at("problem_id").get<std::string>());
      if (it == by_id.end()) throw std::runtime_error("problem not in results");
      const auto& cands = j.at("candidates");
      auto& target = it->second->candidates;
      if (cands.size() != target.size()) throw std::runtime_error("candidate count differs");
      for (std::size_t i = 0; i < target.size(); ++i) {
        target[i].verdict.avg_time = cands[i].at("avg_time_s").get<double>();
        target[i].verdict.avg_peak_memory = cands[i].at("avg_peak_memory_bytes").get<double>();
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) +
                               ": malformed measurement line: " + e.what());
    }
  }
}

// Rebuilds the generation records from a results file. Problems carry only
// the fields the profiles read.
LoadedResults read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read results " + path.string() +
                             " (run `motkit evaluate` first)");
  }
  corpus::Corpus stub;
  std::vector<eval::GenerationRecord> records;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      corpus::Problem p;
      p.id = j.at("problem_id").get<std::string>();
      p.difficulty = corpus::parse_difficulty(j.at("difficulty").get<std::string>());
      auto split = corpus::parse_split(j.at("split").get<std::string>());
      if (!split) throw std::runtime_error("unknown split");
      p.split = *split;
      p.source = j.value("source", "");
      eval::GenerationRecord rec;
      rec.problem_id = p.id;
      for (const auto& c : j.at("candidates")) {
        eval::Candidate cand;
        cand.program = c.at("program").get<std::string>();
        cand.verdict.passed = c.at("passed").get<bool>();
        for (bool m : c.at("matched").get<std::vector<bool>>()) {
          sandbox::TestOutcome t;
          t.matched = m;
          cand.verdict.per_test.push_back(std::move(t));
        }
        cand.metrics = metrics_from_json(c.at("metrics"));
        rec.candidates.push_back(std::move(cand));
      }
      stub.problems.push_back(std::move(p));
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) +
                               ": malformed result line: " + e.what());
    }
  }
  LoadedResults out{std::move(stub), std::move(records), std::nullopt};
  auto measured = path.parent_path() / "measurements.jsonl";
  if (fs::exists(measured)) {
    read_measurements(measured, out.records);
    out.measurements = measured;
  }
  return out;
}

std::vector<CandidateSet> generate_candidates(const PipelineConfig& cfg,
                                              const corpus::Corpus& test) {
  auto client = make_client(cfg);
  std::vector<const corpus::Problem*> problems;
  std::vector<prompt::Prompt> prompts;
  for (const auto& p : test.problems) {
    if (p.untestable) continue;
    problems.push_back(&p);
    prompts.push_back(prompt::build_direct_prompt(p));
  }
  std::vector<CandidateSet> out(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) out[i].problem_id = problems[i]->id;
  for (int s = 0; s < cfg.generate_samples; ++s) {
    auto results = client.complete_batch(prompts, s);
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (auto* err = std::get_if<llm::ProviderError>(&results[i])) throw *err;
      out[i].programs.push_back(
          prompt::extract_program(std::get<llm::Completion>(results[i]).text));
    }
  }
  return out;
}

int evaluate(const PipelineConfig& cfg, std::ostream& out) {
  if (!cfg.test_corpus) throw ConfigError("evaluate needs corpus.test");
  sandbox::check_runner(cfg.runner);
  OutputDir dir(cfg, "evaluate");
  dir.input("test", *cfg.test_corpus);
  auto test = load_split(*cfg.test_corpus, corpus::Split::test, "evaluate");

  std::vector<CandidateSet> sets;
  if (cfg.candidates) {
    dir.input("candidates", *cfg.candidates);
    sets = read_candidates(*cfg.candidates);
  } else if (cfg.generate_samples > 0) {
    sets = generate_candidates(cfg, test);
  } else {
    throw ConfigError("evaluate needs a candidates file or evaluate.generate_samples");
  }

  std::vector<std::string> unknown;
  std::map<std::string, std::vector<std::string>, std::less<>> by_id;
  for (auto& set : sets) {
    const auto* p = test.find(set.problem_id);
    if (p == nullptr) {
      unknown.push_back(set.problem_id);
      continue;
    }
    if (p->untestable) {
      std::cerr << "motkit evaluate: " << p->id << " has no tests; candidates ignored\n";
      continue;
    }
    auto& programs = by_id[set.problem_id];
    programs.insert(programs.end(), set.programs.begin(), set.programs.end());
  }
  if (!unknown.empty()) {
    std::cerr << "motkit evaluate: candidates reference unknown problem ids:";
    for (const auto& id : unknown) std::cerr << ' ' << id;
    std::cerr << "\n";
    return 1;
  }

  // Records follow corpus order so output does not depend on the
  // candidates file layout.
  std::vector<const corpus::Problem*> problems;
  std::vector<sandbox::JudgeJob> jobs;
  for (const auto& p : test.problems) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) continue;
    problems.push_back(&p);
    for (const auto& prog : it->second) jobs.push_back({prog, &p});
  }
  std::cerr << "motkit evaluate: judging " << jobs.size() << " candidates for "
            << problems.size() << " problems on " << cfg.workers << " workers\n";
  sandbox::JudgePool pool(judge_options(cfg), cfg.workers);
  auto verdicts = pool.judge_all(jobs);

  std::vector<eval::GenerationRecord> records;
  std::size_t next = 0;
  for (const auto* p : problems) {
    eval::GenerationRecord rec;
    rec.problem_id = p->id;
    for (const auto& prog : by_id.at(p->id)) {
      eval::Candidate cand;
      cand.program = prog;
      cand.verdict = std::move(verdicts[next++]);
      cand.metrics = metrics::analyze(prog, cfg.mi_variant);
      if (cfg.top_level_functions) cand.metrics.function_count = metrics::function_count(prog, true);
      rec.candidates.push_back(std::move(cand));
    }
    records.push_back(std::move(rec));
  }

  auto report = eval::evaluate_corpus(
      test, records, cfg.ks,
      cfg.per_level_mean ? eval::AllMode::per_level_mean : eval::AllMode::problem_weighted,
      cfg.function_bin_cap);

  std::string results, measurements;
  for (std::size_t i = 0; i < records.size(); ++i) {
    results += result_line(*problems[i], records[i]) + "\n";
    measurements += measurement_line(records[i]) + "\n";
  }
  auto csv = eval::pass_at_k_csv(report);
  dir.write("results.jsonl", results);
  dir.write("measurements.jsonl", measurements);
  dir.write("report.json", eval::report_json(report, false));
  dir.write("pass_at_k.csv", csv);
  auto& s = dir.summary();
  s["problems"] = records.size();
  s["candidates"] = jobs.size();
  s["solved_problems"] = std::count_if(records.begin(), records.end(),
                                       [](const auto& r) { return r.c() > 0; });
  dir.finish();
  out << csv;
  return 0;
}

// ------------------------------------------------------------------ reflect

int reflect(const PipelineConfig& cfg, std::ostream& out) {
  if (!cfg.test_corpus) throw ConfigError("reflect needs corpus.test");
  sandbox::check_runner(cfg.runner);
  auto results_path = cfg.effective_results();
  auto loaded = read_results(results_path);
  const auto& stub = loaded.stub;
  const auto& records = loaded.records;
  OutputDir dir(cfg, "reflect");
  dir.input("results", results_path);
  dir.input("test", *cfg.test_corpus);
  auto test = load_split(*cfg.test_corpus, corpus::Split::test, "reflect");

  std::vector<const corpus::Problem*> failed;
  for (const auto& rec : records) {
    if (rec.n() == 0 || rec.c() > 0) continue;
    const auto* p = test.find(rec.problem_id);
    if (p == nullptr) {
      throw std::runtime_error("results reference unknown problem id " + rec.problem_id);
    }
    failed.push_back(p);
  }
  std::cerr << "motkit reflect: " << failed.size() << " failed problems, up to "
            << cfg.max_reflection_rounds << " rounds each\n";

  std::vector<eval::ReflectionTrace> traces(failed.size());
  if (!failed.empty()) {
    auto client = make_client(cfg);
    auto jopts = judge_options(cfg);
    parallel_for(failed.size(), cfg.workers, [&](std::size_t i) {
      traces[i] = eval::self_reflect(*failed[i], client, jopts, cfg.max_reflection_rounds);
    });
  }

  std::set<std::string, std::less<>> solved;
  std::size_t provider_failures = 0;
  std::string lines;
  for (const auto& t : traces) {
    if (t.solved_at) solved.insert(t.problem_id);
    if (t.error) {
      ++provider_failures;
      std::cerr << "motkit reflect: " << t.problem_id << ": " << *t.error << "\n";
    }
    lines += eval::trace_json(t) + "\n";
  }

  // Before/after pass@1 per difficulty; a problem solved by reflection
  // counts as 1 afterwards.
  struct Acc {
    std::size_t problems = 0, failed = 0, solved = 0;
    double before = 0.0, after = 0.0;
  };
  std::map<std::string, Acc> by_level;
  Acc all;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.n() == 0) continue;
    double before = eval::pass_at_k(rec.n(), rec.c(), 1);
    bool fixed = solved.count(rec.problem_id) > 0;
    double after = fixed ? 1.0 : before;
    for (auto* acc : {&by_level[std::string(corpus::to_string(stub.problems[i].difficulty))], &all}) {
      ++acc->problems;
      acc->failed += rec.c() == 0 ? 1 : 0;
      acc->solved += fixed ? 1 : 0;
      acc->before += before;
      acc->after += after;
    }
  }
  std::ostringstream csv;
  csv << "difficulty,problems,failed_before,solved_by_reflection,pass@1_before,pass@1_after\n";
  auto row = [&](const std::string& label, const Acc& a) {
    csv << label << ',' << a.problems << ',' << a.failed << ',' << a.solved << ',';
    if (a.problems > 0) {
      csv << percent(a.before / static_cast<double>(a.problems)) << ','
          << percent(a.after / static_cast<double>(a.problems));
    } else {
      csv << ',';
    }
    csv << '\n';
  };
  for (auto d : {corpus::Difficulty::introductory, corpus::Difficulty::interview,
                 corpus::Difficulty::competition, corpus::Difficulty::unknown}) {
    auto it = by_level.find(std::string(corpus::to_string(d)));
    if (it != by_level.end()) row(it->first, it->second);
  }
  row("All", all);

  dir.write("traces.jsonl", lines);
  dir.write("comparison.csv", csv.str());
  auto& s = dir.summary();
  s["failed_problems"] = failed.size();
  s["solved_by_reflection"] = solved.size();
  s["max_rounds"] = cfg.max_reflection_rounds;
  s["provider_failures"] = provider_failures;
  dir.finish();
  out << csv.str();
  return provider_failures == 0 ? 0 : 1;
}

// ------------------------------------------------------------------ analyze

int analyze(const PipelineConfig& cfg, std::ostream& out) {
  auto results_path = cfg.effective_results();
  auto loaded = read_results(results_path);
  const auto& stub = loaded.stub;
  const auto& records = loaded.records;
  OutputDir dir(cfg, "analyze");
  dir.input("results", results_path);
  if (loaded.measurements) {
    dir.input("measurements", *loaded.measurements, false);
  } else {
    std::cerr << "motkit analyze: no measurements.jsonl next to the results; "
                 "resource averages will be empty\n";
  }
  auto functions = eval::function_accuracy_profile(records, stub, cfg.function_bin_cap);
  auto fcsv = eval::function_profile_csv(functions, cfg.function_bin_cap);
  auto rcsv = eval::resource_profile_csv(eval::resource_profile(records, stub));
  auto mcsv = eval::mi_profile_csv(eval::mi_profile(records, stub));
  dir.write("function_profile.csv", fcsv);
  dir.write("resource_profile.csv", rcsv);
  dir.write("mi_profile.csv", mcsv);
  std::string per_program;
  for (const auto& rec : records) {
    for (std::size_t i = 0; i < rec.candidates.size(); ++i) {
      ordered_json m{{"problem_id", rec.problem_id},
                     {"candidate", i},
                     {"passed", rec.candidates[i].verdict.passed},
                     {"metrics", metrics_json(rec.candidates[i].metrics)}};
      per_program += jsonl_dump(m) + "\n";
    }
  }
  dir.write("metrics.jsonl", per_program);
  dir.summary()["problems"] = records.size();
  dir.finish();
  out << fcsv << "\n" << rcsv << "\n" << mcsv;
  return 0;
}

// -------------------------------------------------------------------- stats

int stats(const PipelineConfig& cfg, std::ostream& out) {
  OutputDir dir(cfg, "stats");
  std::ostringstream csv;
  csv << "split,source,difficulty,problems\n";
  ordered_json totals = ordered_json::object();
  bool any = false;
  for (const auto& [name, path, split] :
       {std::tuple{"train", cfg.train_corpus, corpus::Split::train},
        std::tuple{"valid", cfg.valid_corpus, corpus::Split::valid},
        std::tuple{"test", cfg.test_corpus, corpus::Split::test}}) {
    if (!path) continue;
    any = true;
    dir.input(name, *path);
    auto loaded = corpus::load_corpus(*path, split);
    auto report = corpus::corpus_stats(loaded.corpus);
    for (const auto& [key, count] : report.counts) {
      csv << corpus::to_string(key.split) << ',' << io::csv_field(key.source) << ','
          << corpus::to_string(key.difficulty) << ',' << count << '\n';
    }
    ordered_json levels = ordered_json::object();
    for (const auto& [d, count] : report.by_difficulty) levels[corpus::to_string(d)] = count;
    totals[name] = {{"problems", report.problems},
                    {"untestable", report.untestable},
                    {"solutions", report.solutions},
                    {"skipped_lines", loaded.skipped.size()},
                    {"by_difficulty", levels}};
  }
  if (!any) throw ConfigError("stats needs at least one corpus path");
  dir.write("stats.csv", csv.str());
  dir.write("stats.json", totals.dump(2) + "\n");
  dir.finish();
  out << csv.str();
  return 0;
}

}  // namespace

int cmd_transform(const PipelineConfig& cfg, std::ostream& out) {
  return guarded(cfg, "transform", [&] { return transform(cfg, out); });
}
int cmd_evaluate(const PipelineConfig& cfg, std::ostream& out) {
  return guarded(cfg, "evaluate", [&] { return evaluate(cfg, out); });
}
int cmd_reflect(const PipelineConfig& cfg, std::ostream& out) {
  return guarded(cfg, "reflect", [&] { return reflect(cfg, out); });
}
int cmd_analyze(const PipelineConfig& cfg, std::ostream& out) {
  return guarded(cfg, "analyze", [&] { return analyze(cfg, out); });
}
int cmd_stats(const PipelineConfig& cfg, std::ostream& out) {
  return guarded(cfg, "stats", [&] { return stats(cfg, out); });
}

}  // namespace motkit::pipeline
