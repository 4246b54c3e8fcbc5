#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "motkit/corpus.hpp"

// Executes untrusted candidate programs in child processes. This is resource
// accounting, not a security boundary: there is no namespace or seccomp jail,
// so candidates must be trusted not to attack the host.
namespace motkit::sandbox {

struct ResourceLimits {
  std::chrono::duration<double> wall_time{10.0};
  std::uint64_t memory = 256ull << 20;
  std::uint64_t output_cap = 1ull << 20;

  void validate() const;
};

enum class ExecStatus { ok, timeout, oom, runtime_error, output_overflow };
std::string_view to_string(ExecStatus s);
std::optional<ExecStatus> parse_exec_status(std::string_view text);

struct ExecutionReport {
  ExecStatus status = ExecStatus::ok;
  std::string stdout_text;  // truncated at output_cap
  std::string stderr_text;  // truncated at output_cap
  double wall_time_used = 0.0;  // seconds
  std::uint64_t peak_memory = 0;  // bytes, max resident set of the child
  int exit_code = 0;  // exit status, or -signal when killed by a signal
};

// How a candidate is launched. `{file}` in the command is replaced by the
// path of the program written into a fresh scratch directory.
struct RunnerConfig {
  std::string command = "python3 {file}";
  std::string file_name = "main.py";
  std::filesystem::path scratch_root;  // empty: system temp directory
  bool keep_scratch = false;
};

// Host-side failure to run anything at all (missing interpreter, fork/pipe
// failure). Never used for candidate misbehaviour.
class InfrastructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Resolves the runner's executable; throws InfrastructureError if absent.
void check_runner(const RunnerConfig& runner);

ExecutionReport run_once(std::string_view program, std::string_view stdin_text,
                         const ResourceLimits& limits,
                         const RunnerConfig& runner = {});

struct ComparePolicy {
  enum class Mode { tokens, exact };
  Mode mode = Mode::tokens;
  double float_tolerance = 1e-6;
};

bool compare_output(std::string_view expected, std::string_view actual,
                    const ComparePolicy& policy = {});

struct TestOutcome {
  ExecutionReport report;
  bool matched = false;
};

struct JudgeVerdict {
  std::vector<TestOutcome> per_test;
  bool passed = false;
  std::optional<std::size_t> first_failure;
  double avg_time = 0.0;
  double avg_peak_memory = 0.0;

  std::vector<bool> matched_vector() const;
  // Outcome of the first failing test, nullptr when passed.
  const TestOutcome* failing_outcome() const;
};

struct JudgeOptions {
  ResourceLimits limits;
  ComparePolicy policy;
  RunnerConfig runner;
  bool fail_fast = false;
};

// Throws std::invalid_argument for untestable problems.
JudgeVerdict judge(std::string_view program, const corpus::Problem& problem,
                   const JudgeOptions& options);

struct JudgeJob {
  std::string program;
  const corpus::Problem* problem = nullptr;
};

// Judges many programs with a bounded number of concurrent workers. Results
// are indexed like the input regardless of completion order.
class JudgePool {
 public:
  JudgePool(JudgeOptions options, std::size_t workers);

  std::vector<JudgeVerdict> judge_all(std::span<const JudgeJob> jobs) const;
  std::size_t workers() const { return workers_; }
  const JudgeOptions& options() const { return options_; }

 private:
  JudgeOptions options_;
  std::size_t workers_;
};

}  // namespace motkit::sandbox
