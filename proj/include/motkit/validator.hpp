#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "motkit/corpus.hpp"
#include "motkit/promptgen.hpp"
#include "motkit/sandbox.hpp"

// Rejection markers for transformed solutions, checked in a fixed order so
// that the reported reason is stable:
//   m1  the response does not open with the sub-module outline
//   m2  the outline is empty or contains real code instead of stubs
//   m3  the final section has no program or more than one
//   m4  the final program fails a test of the problem
namespace motkit::validate {

enum class Marker { m1_strategy_divergence, m2_no_submodules, m3_main_code_count,
                    m4_tests_failed };
std::string_view to_string(Marker m);
std::optional<Marker> parse_marker(std::string_view text);

struct AssessmentResult {
  bool accepted = true;
  std::optional<Marker> marker;  // present iff rejected
  std::string detail;

  static AssessmentResult accept() { return {}; }
  static AssessmentResult reject(Marker m, std::string detail);
};

AssessmentResult assess_structure(const prompt::MotParse& parsed);
AssessmentResult assess_structure(const prompt::ModularSolution& solution);

// Single-block responses (clean data) only have a final section to check.
AssessmentResult assess_single_block(const prompt::MotParse& parsed);

// Runs `program` against every test; the first failure rejects with m4.
// sandbox::InfrastructureError propagates.
AssessmentResult assess_functional(std::string_view program,
                                   const corpus::Problem& problem,
                                   const sandbox::JudgeOptions& options);

enum class DataType { mot, clean };
std::string_view to_string(DataType t);
std::optional<DataType> parse_data_type(std::string_view text);

struct FilterRecord {
  std::string problem_id;
  std::string source;
  std::size_t solution_index = 0;
  DataType data_type = DataType::mot;
  AssessmentResult result;
};

struct PassRate {
  std::size_t pre_count = 0;
  std::size_t post_count = 0;
  std::optional<int> percent;  // whole percent; absent when pre_count == 0
};

// Rounds half up to a whole percent.
std::optional<int> whole_percent(std::size_t post, std::size_t pre);

using PassRateTable = std::map<std::pair<std::string, DataType>, PassRate>;
PassRateTable filter_pass_rate(const std::vector<FilterRecord>& records);

std::string filter_record_json(const FilterRecord& record);
std::string pass_rate_csv(const PassRateTable& table);

}  // namespace motkit::validate
