#include "motkit/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace motkit::eval {

using corpus::Difficulty;
using nlohmann::ordered_json;

double pass_at_k(int n, int c, int k) {
  if (k < 1 || k > n) {
    throw std::invalid_argument("pass@k needs 1 <= k <= n (n=" + std::to_string(n) +
                                ", k=" + std::to_string(k) + ")");
  }
  if (c < 0 || c > n) {
    throw std::invalid_argument("pass@k needs 0 <= c <= n (n=" + std::to_string(n) +
                                ", c=" + std::to_string(c) + ")");
  }
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - miss;
}

int GenerationRecord::c() const {
  return static_cast<int>(std::count_if(candidates.begin(), candidates.end(),
                                        [](const Candidate& x) { return x.verdict.passed; }));
}

namespace {

constexpr Difficulty kLevels[] = {Difficulty::introductory, Difficulty::interview,
                                  Difficulty::competition, Difficulty::unknown};

struct Joined {
  const GenerationRecord* record;
  const corpus::Problem* problem;
};

// Records paired with their problems, ordered by problem id so every
// aggregate is independent of the input order.
std::vector<Joined> join(const std::vector<GenerationRecord>& records,
                         const corpus::Corpus& corpus) {
  std::vector<Joined> out;
  std::vector<std::string> unknown;
  for (const auto& r : records) {
    const auto* p = corpus.find(r.problem_id);
    if (p == nullptr) {
      unknown.push_back(r.problem_id);
    } else {
      out.push_back({&r, p});
    }
  }
  if (!unknown.empty()) {
    std::string msg = "records reference unknown problem ids:";
    for (const auto& id : unknown) msg += " " + id;
    throw std::invalid_argument(msg);
  }
  std::sort(out.begin(), out.end(), [](const Joined& a, const Joined& b) {
    return a.record->problem_id < b.record->problem_id;
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].record->problem_id == out[i - 1].record->problem_id) {
      throw std::invalid_argument("duplicate record for problem " +
                                  out[i].record->problem_id);
    }
  }
  return out;
}

std::vector<Difficulty> levels_present(const std::vector<Joined>& rows) {
  std::vector<Difficulty> out;
  for (auto d : kLevels) {
    if (std::any_of(rows.begin(), rows.end(),
                    [&](const Joined& j) { return j.problem->difficulty == d; })) {
      out.push_back(d);
    }
  }
  return out;
}

std::optional<double> mean(double sum, std::size_t count) {
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fixed(const std::optional<double>& v, int digits = 6) {
  return v ? fixed(*v, digits) : std::string();
}

ordered_json opt_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

FunctionProfile function_accuracy_profile(const std::vector<GenerationRecord>& records,
                                          const corpus::Corpus& corpus, int bin_cap) {
  if (bin_cap < 1) throw std::invalid_argument("function bin cap must be >= 1");
  FunctionProfile profile;
  for (const auto& j : join(records, corpus)) {
    for (const auto& cand : j.record->candidates) {
      int bin = std::min(cand.metrics.function_count, bin_cap);
      auto& slot = profile[{j.problem->difficulty, bin}];
      ++slot.count;
      if (cand.verdict.passed) ++slot.passed;
    }
  }
  for (auto& [key, bin] : profile) {
    bin.accuracy = static_cast<double>(bin.passed) / static_cast<double>(bin.count);
  }
  return profile;
}

std::vector<ResourceRow> resource_profile(const std::vector<GenerationRecord>& records,
                                          const corpus::Corpus& corpus) {
  auto joined = join(records, corpus);
  std::vector<ResourceRow> rows;
  auto collect = [&](std::string label, auto&& keep) {
    ResourceRow row{std::move(label), 0, std::nullopt, std::nullopt};
    double time = 0.0;
    double mem = 0.0;
    for (const auto& j : joined) {
      if (!keep(j)) continue;
      for (const auto& cand : j.record->candidates) {
        if (!cand.verdict.passed) continue;
        ++row.passed;
        time += cand.verdict.avg_time;
        mem += cand.verdict.avg_peak_memory;
      }
    }
    row.avg_time = mean(time, row.passed);
    row.avg_peak_memory = mean(mem, row.passed);
    rows.push_back(std::move(row));
  };
  for (auto d : levels_present(joined)) {
    collect(std::string(corpus::to_string(d)),
            [d](const Joined& j) { return j.problem->difficulty == d; });
  }
  collect("All", [](const Joined&) { return true; });
  return rows;
}

std::vector<MiRow> mi_profile(const std::vector<GenerationRecord>& records,
                              const corpus::Corpus& corpus) {
  auto joined = join(records, corpus);
  std::vector<MiRow> rows;
  auto collect = [&](std::string group, std::string label, auto&& keep) {
    MiRow row{std::move(group), std::move(label), 0, std::nullopt};
    double sum = 0.0;
    for (const auto& j : joined) {
      if (!keep(j)) continue;
      for (const auto& cand : j.record->candidates) {
        if (!cand.verdict.passed) continue;
        ++row.passed;
        sum += cand.metrics.maintainability;
      }
    }
    row.mean_mi = mean(sum, row.passed);
    rows.push_back(std::move(row));
  };
  for (auto d : levels_present(joined)) {
    collect("difficulty", std::string(corpus::to_string(d)),
            [d](const Joined& j) { return j.problem->difficulty == d; });
  }
  collect("difficulty", "All", [](const Joined&) { return true; });
  std::set<corpus::Split> splits;
  for (const auto& j : joined) splits.insert(j.problem->split);
  for (auto s : splits) {
    collect("split", std::string(corpus::to_string(s)),
            [s](const Joined& j) { return j.problem->split == s; });
  }
  return rows;
}

EvalReport evaluate_corpus(const corpus::Corpus& corpus,
                           const std::vector<GenerationRecord>& records,
                           std::vector<int> ks, AllMode all_mode, int function_bin_cap) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.empty() || ks.front() < 1) throw std::invalid_argument("ks must be positive");

  auto joined = join(records, corpus);
  EvalReport report;
  report.ks = ks;
  report.all_mode = all_mode;
  report.function_bin_cap = function_bin_cap;

  auto row_for = [&](std::string label, auto&& keep) {
    PassAtKRow row{std::move(label), {}};
    for (int k : ks) {
      double sum = 0.0;
      std::size_t used = 0;
      for (const auto& j : joined) {
        if (!keep(j) || j.record->n() < k) continue;
        sum += pass_at_k(j.record->n(), j.record->c(), k);
        ++used;
      }
      row.cells[k] = {mean(sum, used), used};
    }
    return row;
  };

  for (auto d : levels_present(joined)) {
    report.pass_at_k.push_back(row_for(std::string(corpus::to_string(d)),
                                       [d](const Joined& j) { return j.problem->difficulty == d; }));
  }
  if (all_mode == AllMode::problem_weighted) {
    report.pass_at_k.push_back(row_for("All", [](const Joined&) { return true; }));
  } else {
    PassAtKRow all{"All", {}};
    for (int k : ks) {
      double sum = 0.0;
      std::size_t levels = 0;
      std::size_t problems = 0;
      for (const auto& row : report.pass_at_k) {
        const auto& cell = row.cells.at(k);
        if (!cell.value) continue;
        sum += *cell.value;
        ++levels;
        problems += cell.problems;
      }
      all.cells[k] = {mean(sum, levels), problems};
    }
    report.pass_at_k.push_back(std::move(all));
  }

  report.function_profile = function_accuracy_profile(records, corpus, function_bin_cap);
  report.resource_profile = resource_profile(records, corpus);
  report.mi_profile = mi_profile(records, corpus);
  return report;
}

std::string report_json(const EvalReport& report, bool include_resources) {
  ordered_json j;
  j["ks"] = report.ks;
  j["all_mode"] = report.all_mode == AllMode::problem_weighted ? "problem_weighted"
                                                               : "per_level_mean";
  auto& pk = j["pass_at_k"] = ordered_json::array();
  for (const auto& row : report.pass_at_k) {
    ordered_json r;
    r["difficulty"] = row.label;
    for (const auto& [k, cell] : row.cells) {
      r["cells"].push_back({{"k", k}, {"value", opt_json(cell.value)}, {"problems", cell.problems}});
    }
    pk.push_back(std::move(r));
  }
  auto& fp = j["function_profile"] = ordered_json::array();
  for (const auto& [key, bin] : report.function_profile) {
    fp.push_back({{"difficulty", corpus::to_string(key.first)},
                  {"functions", key.second},
                  {"open_ended", key.second == report.function_bin_cap},
                  {"count", bin.count},
                  {"passed", bin.passed},
                  {"accuracy", bin.accuracy}});
  }
  if (include_resources) {
    auto& rp = j["resource_profile"] = ordered_json::array();
    for (const auto& row : report.resource_profile) {
      rp.push_back({{"difficulty", row.label},
                    {"passed", row.passed},
                    {"avg_time_s", opt_json(row.avg_time)},
                    {"avg_peak_memory_bytes", opt_json(row.avg_peak_memory)}});
    }
  }
  auto& mp = j["mi_profile"] = ordered_json::array();
  for (const auto& row : report.mi_profile) {
    mp.push_back({{"group", row.group},
                  {"label", row.label},
                  {"passed", row.passed},
                  {"mean_mi", opt_json(row.mean_mi)}});
  }
  return j.dump(2) + "\n";
}

// One row per k, one column per difficulty, values in percent.
std::string pass_at_k_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "metric";
  for (const auto& row : report.pass_at_k) out << ',' << row.label;
  out << '\n';
  for (int k : report.ks) {
    out << "pass@" << k;
    for (const auto& row : report.pass_at_k) {
      const auto& v = row.cells.at(k).value;
      out << ',' << (v ? fixed(*v * 100.0, 2) : std::string());
    }
    out << '\n';
  }
  return out.str();
}

std::string function_profile_csv(const FunctionProfile& profile, int bin_cap) {
  std::ostringstream out;
  out << "difficulty,functions,count,passed,accuracy\n";
  for (const auto& [key, bin] : profile) {
    out << corpus::to_string(key.first) << ',' << key.second
        << (key.second == bin_cap ? "+" : "") << ',' << bin.count << ',' << bin.passed << ','
        << fixed(bin.accuracy) << '\n';
  }
  return out.str();
}

std::string resource_profile_csv(const std::vector<ResourceRow>& rows) {
  std::ostringstream out;
  out << "difficulty,passed,avg_time_s,avg_peak_memory_mb\n";
  for (const auto& row : rows) {
    std::optional<double> mb;
    if (row.avg_peak_memory) mb = *row.avg_peak_memory / (1024.0 * 1024.0);
    out << row.label << ',' << row.passed << ',' << fixed(row.avg_time) << ','
        << fixed(mb, 3) << '\n';
  }
  return out.str();
}

std::string mi_profile_csv(const std::vector<MiRow>& rows) {
  std::ostringstream out;
  out << "group,label,passed,mean_mi\n";
  for (const auto& row : rows) {
    out << row.group << ',' << row.label << ',' << row.passed << ','
        << fixed(row.mean_mi, 4) << '\n';
  }
  return out.str();
}

ReflectionTrace self_reflect(const corpus::Problem& problem, llm::Client& client,
                             const sandbox::JudgeOptions& judge_options, int max_rounds) {
  if (max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
  ReflectionTrace trace;
  trace.problem_id = problem.id;
  for (int round = 0; round < max_rounds; ++round) {
    ReflectionRound r;
    r.round = round;
    if (round == 0) {
      r.prompt = prompt::build_direct_prompt(problem);
    } else {
      const auto& last = trace.rounds.back();
      r.prompt = prompt::build_reflection_prompt(problem, last.program, last.verdict, round,
                                                 max_rounds - 1);
    }
    try {
      r.completion = client.complete(r.prompt).text;
    } catch (const llm::ProviderError& e) {
      trace.error = std::string(llm::to_string(e.kind())) + ": " + e.what();
      break;
    }
    r.program = prompt::extract_program(r.completion);
    r.verdict = sandbox::judge(r.program, problem, judge_options);
    bool passed = r.verdict.passed;
    trace.rounds.push_back(std::move(r));
    if (passed) {
      trace.solved_at = round;
      break;
    }
  }
  return trace;
}

// Measured time and memory are left out so traces compare byte for byte
// across reruns.
std::string trace_json(const ReflectionTrace& trace) {
  ordered_json j;
  j["problem_id"] = trace.problem_id;
  j["solved_at"] = trace.solved_at ? ordered_json(*trace.solved_at) : ordered_json(nullptr);
  j["error"] = trace.error ? ordered_json(*trace.error) : ordered_json(nullptr);
  j["rounds"] = ordered_json::array();
  for (const auto& r : trace.rounds) {
    ordered_json jr;
    jr["round"] = r.round;
    jr["prompt_tag"] = prompt::to_string(r.prompt.tag);
    jr["prompt"] = r.prompt.user;
    jr["completion"] = r.completion;
    jr["passed"] = r.verdict.passed;
    jr["matched"] = r.verdict.matched_vector();
    if (const auto* fail = r.verdict.failing_outcome()) {
      jr["failure_status"] = fail->report.status == sandbox::ExecStatus::ok
                                 ? std::string("wrong_answer")
                                 : std::string(sandbox::to_string(fail->report.status));
    }
    j["rounds"].push_back(std::move(jr));
  }
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace motkit::eval
