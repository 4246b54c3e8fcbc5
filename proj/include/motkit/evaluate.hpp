#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "motkit/codemetrics.hpp"
#include "motkit/corpus.hpp"
#include "motkit/llm.hpp"
#include "motkit/promptgen.hpp"
#include "motkit/sandbox.hpp"

namespace motkit::eval {

// Unbiased estimator 1 - C(n-c, k) / C(n, k), evaluated as a running
// product so large n cannot overflow. Throws std::invalid_argument unless
// 1 <= k <= n and 0 <= c <= n.
double pass_at_k(int n, int c, int k);

struct Candidate {
  std::string program;
  sandbox::JudgeVerdict verdict;
  metrics::CodeMetrics metrics;
};

struct GenerationRecord {
  std::string problem_id;
  std::vector<Candidate> candidates;

  int n() const { return static_cast<int>(candidates.size()); }
  int c() const;
};

enum class AllMode { problem_weighted, per_level_mean };

struct PassAtKCell {
  std::optional<double> value;  // absent when no problem has n >= k
  std::size_t problems = 0;     // problems that contributed
};

struct PassAtKRow {
  std::string label;  // a difficulty name, or "All"
  std::map<int, PassAtKCell> cells;
};

struct FunctionBin {
  std::size_t count = 0;
  std::size_t passed = 0;
  double accuracy = 0.0;
};
// (difficulty, bin) -> stats. The last bin collects every count >= bin_cap.
using FunctionProfile = std::map<std::pair<corpus::Difficulty, int>, FunctionBin>;

struct ResourceRow {
  std::string label;
  std::size_t passed = 0;
  std::optional<double> avg_time;         // seconds
  std::optional<double> avg_peak_memory;  // bytes
};

struct MiRow {
  std::string group;  // "difficulty" or "split"
  std::string label;
  std::size_t passed = 0;
  std::optional<double> mean_mi;
};

struct EvalReport {
  std::vector<int> ks;
  AllMode all_mode = AllMode::problem_weighted;
  std::vector<PassAtKRow> pass_at_k;
  FunctionProfile function_profile;
  int function_bin_cap = 8;
  std::vector<ResourceRow> resource_profile;
  std::vector<MiRow> mi_profile;
};

// Throws std::invalid_argument naming every record whose problem_id is not
// in the corpus.
EvalReport evaluate_corpus(const corpus::Corpus& corpus,
                           const std::vector<GenerationRecord>& records,
                           std::vector<int> ks,
                           AllMode all_mode = AllMode::problem_weighted,
                           int function_bin_cap = 8);

FunctionProfile function_accuracy_profile(const std::vector<GenerationRecord>& records,
                                          const corpus::Corpus& corpus, int bin_cap = 8);
std::vector<ResourceRow> resource_profile(const std::vector<GenerationRecord>& records,
                                          const corpus::Corpus& corpus);
std::vector<MiRow> mi_profile(const std::vector<GenerationRecord>& records,
                              const corpus::Corpus& corpus);

// `include_resources` false leaves out the measured time/memory section so
// the document is reproducible across runs.
std::string report_json(const EvalReport& report, bool include_resources = true);
std::string pass_at_k_csv(const EvalReport& report);
std::string function_profile_csv(const FunctionProfile& profile, int bin_cap);
std::string resource_profile_csv(const std::vector<ResourceRow>& rows);
std::string mi_profile_csv(const std::vector<MiRow>& rows);

struct ReflectionRound {
  int round = 0;
  prompt::Prompt prompt;
  std::string completion;
  std::string program;
  sandbox::JudgeVerdict verdict;
};

struct ReflectionTrace {
  std::string problem_id;
  std::vector<ReflectionRound> rounds;
  std::optional<int> solved_at;
  // Provider failure that ended the loop early.
  std::optional<std::string> error;
};

// Round 0 answers a direct prompt; each later round reflects on the previous
// failing attempt. The trace holds at most max_rounds rounds, round 0
// included, and stops at the first passing verdict.
ReflectionTrace self_reflect(const corpus::Problem& problem, llm::Client& client,
                             const sandbox::JudgeOptions& judge_options,
                             int max_rounds = prompt::kDefaultReflectionRounds);

std::string trace_json(const ReflectionTrace& trace);

}  // namespace motkit::eval
