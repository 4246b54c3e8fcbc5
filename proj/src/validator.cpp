#include "motkit/validator.hpp"

#include <sstream>

#include "json.hpp"
#include "motkit/io.hpp"

namespace motkit::validate {

using prompt::ParseErrorKind;

std::string_view to_string(Marker m) {
  switch (m) {
    case Marker::m1_strategy_divergence: return "m1_strategy_divergence";
    case Marker::m2_no_submodules: return "m2_no_submodules";
    case Marker::m3_main_code_count: return "m3_main_code_count";
    case Marker::m4_tests_failed: break;
  }
  return "m4_tests_failed";
}

std::optional<Marker> parse_marker(std::string_view text) {
  for (auto m : {Marker::m1_strategy_divergence, Marker::m2_no_submodules,
                 Marker::m3_main_code_count, Marker::m4_tests_failed}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

AssessmentResult AssessmentResult::reject(Marker m, std::string detail) {
  AssessmentResult r;
  r.accepted = false;
  r.marker = m;
  r.detail = std::move(detail);
  return r;
}

AssessmentResult assess_structure(const prompt::MotParse& parsed) {
  const auto& sol = parsed.solution;
  const auto& failure = parsed.failure;

  if (failure && failure->kind == ParseErrorKind::missing_step && failure->step == 1) {
    return AssessmentResult::reject(Marker::m1_strategy_divergence,
                                    "no STEP 1 outline section");
  }
  if (failure && failure->kind == ParseErrorKind::out_of_order) {
    return AssessmentResult::reject(
        Marker::m1_strategy_divergence,
        "STEP 2 precedes STEP 1 at offset " + std::to_string(failure->offset));
  }
  if (sol.code_before_outline) {
    return AssessmentResult::reject(Marker::m1_strategy_divergence,
                                    "code block before the STEP 1 outline");
  }

  if (sol.outline.empty()) {
    return AssessmentResult::reject(Marker::m2_no_submodules, "outline has no sub-modules");
  }
  if (sol.outline_has_stray_code) {
    return AssessmentResult::reject(Marker::m2_no_submodules,
                                    "outline contains code outside sub-module stubs");
  }
  for (const auto& sub : sol.outline) {
    if (sub.has_body) {
      return AssessmentResult::reject(Marker::m2_no_submodules,
                                      "sub-module '" + sub.name + "' is implemented in the outline");
    }
    if (sub.docstring.empty()) {
      return AssessmentResult::reject(Marker::m2_no_submodules,
                                      "sub-module '" + sub.name + "' has no docstring");
    }
  }

  if (failure) {
    std::string what = failure->kind == ParseErrorKind::missing_step
                           ? std::string("no STEP 2 section")
                           : std::string(prompt::to_string(failure->kind));
    return AssessmentResult::reject(Marker::m3_main_code_count,
                                    what + " at offset " + std::to_string(failure->offset));
  }
  return AssessmentResult::accept();
}

AssessmentResult assess_structure(const prompt::ModularSolution& solution) {
  return assess_structure(prompt::MotParse{solution, std::nullopt});
}

AssessmentResult assess_single_block(const prompt::MotParse& parsed) {
  if (!parsed.failure) return AssessmentResult::accept();
  return AssessmentResult::reject(
      Marker::m3_main_code_count,
      std::string(prompt::to_string(parsed.failure->kind)) + " at offset " +
          std::to_string(parsed.failure->offset));
}

AssessmentResult assess_functional(std::string_view program,
                                   const corpus::Problem& problem,
                                   const sandbox::JudgeOptions& options) {
  auto opts = options;
  opts.fail_fast = true;
  auto verdict = sandbox::judge(program, problem, opts);
  if (verdict.passed) return AssessmentResult::accept();
  const auto index = *verdict.first_failure;
  const auto& report = verdict.per_test[index].report;
  std::string why = report.status == sandbox::ExecStatus::ok
                        ? std::string("wrong_answer")
                        : std::string(sandbox::to_string(report.status));
  return AssessmentResult::reject(Marker::m4_tests_failed,
                                  "test " + std::to_string(index) + ": " + why);
}

std::string_view to_string(DataType t) { return t == DataType::mot ? "mot" : "clean"; }

std::optional<DataType> parse_data_type(std::string_view text) {
  if (text == "mot") return DataType::mot;
  if (text == "clean") return DataType::clean;
  return std::nullopt;
}

std::optional<int> whole_percent(std::size_t post, std::size_t pre) {
  if (pre == 0) return std::nullopt;
  return static_cast<int>((200 * post + pre) / (2 * pre));
}

PassRateTable filter_pass_rate(const std::vector<FilterRecord>& records) {
  PassRateTable table;
  for (const auto& r : records) {
    auto& row = table[{r.source, r.data_type}];
    ++row.pre_count;
    row.post_count += r.result.accepted ? 1 : 0;
  }
  for (auto& [key, row] : table) row.percent = whole_percent(row.post_count, row.pre_count);
  return table;
}

std::string filter_record_json(const FilterRecord& record) {
  nlohmann::ordered_json j;
  j["problem_id"] = record.problem_id;
  j["source"] = record.source;
  j["solution_index"] = record.solution_index;
  j["data_type"] = to_string(record.data_type);
  j["verdict"] = record.result.accepted ? "accept" : "reject";
  j["marker"] = record.result.marker ? nlohmann::ordered_json(to_string(*record.result.marker))
                                     : nlohmann::ordered_json(nullptr);
  j["detail"] = record.result.detail;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string pass_rate_csv(const PassRateTable& table) {
  std::ostringstream out;
  out << "data_type,source,pre_filtering_count,post_filtering_count,passing_rate\n";
  for (const auto& [key, row] : table) {
    out << to_string(key.second) << ',' << io::csv_field(key.first) << ',' << row.pre_count << ','
        << row.post_count << ',';
    if (row.percent) out << *row.percent << '%';
    out << '\n';
  }
  return out.str();
}

}  // namespace motkit::validate
