#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace motkit::corpus {

enum class Difficulty { introductory, interview, competition, unknown };
enum class Split { train, valid, test };

std::string_view to_string(Difficulty d);
std::string_view to_string(Split s);
// Unrecognized difficulty labels map to `unknown`. CodeContests-style
// labels ("easy"/"medium"/"hard") are not remapped.
Difficulty parse_difficulty(std::string_view text);
std::optional<Split> parse_split(std::string_view text);

struct TestCase {
  std::string input;
  std::string expected_output;

  bool operator==(const TestCase&) const = default;
};

struct Problem {
  std::string id;
  std::string statement;
  std::vector<std::string> solutions;
  std::vector<TestCase> tests;
  Difficulty difficulty = Difficulty::unknown;
  std::string source;
  Split split = Split::train;
  // Set when the record carried no `input_output` block.
  bool untestable = false;

  bool operator==(const Problem&) const = default;
};

struct Corpus {
  std::vector<Problem> problems;
  std::string provenance;

  const Problem* find(std::string_view id) const;
};

struct LoadDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  Corpus corpus;
  std::vector<LoadDiagnostic> skipped;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads one Problem per JSONL line. Malformed lines become diagnostics;
// an unreadable file or a duplicated id throws CorpusError.
LoadResult load_corpus(const std::filesystem::path& path, Split split);
LoadResult parse_corpus(std::string_view text, Split split,
                        std::string provenance = {});

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_problem(const Problem& problem);

std::vector<std::string> select_solutions(const Problem& problem,
                                          std::size_t cap);

// Lowercase, punctuation stripped, whitespace runs collapsed to one space.
std::string normalize_statement(std::string_view statement);
double jaccard_similarity(std::string_view a, std::string_view b);

struct DedupRemoval {
  std::string train_id;
  std::string holdout_id;
  double similarity = 0.0;
  bool exact = false;
};

struct DedupReport {
  std::vector<DedupRemoval> removals;
};

std::pair<Corpus, DedupReport> dedup_against(const Corpus& train,
                                             const Corpus& holdout,
                                             double jaccard_threshold = 0.9);

struct StatsKey {
  std::string source;
  Difficulty difficulty;
  Split split;

  auto operator<=>(const StatsKey&) const = default;
};

struct StatsReport {
  std::map<StatsKey, std::size_t> counts;
  std::map<Difficulty, std::size_t> by_difficulty;
  std::size_t problems = 0;
  std::size_t untestable = 0;
  std::size_t solutions = 0;
};

StatsReport corpus_stats(const Corpus& corpus);

}  // namespace motkit::corpus
