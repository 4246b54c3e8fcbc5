#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "motkit/codemetrics.hpp"
#include "motkit/llm.hpp"
#include "motkit/sandbox.hpp"

// Command orchestration shared by the `motkit` executable and the tests.
// Each command writes into `<outdir>/<command>/` and finishes with a
// manifest.json describing the run.
namespace motkit::pipeline {

namespace fs = std::filesystem;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::optional<fs::path> train_corpus;
  std::optional<fs::path> valid_corpus;
  std::optional<fs::path> test_corpus;

  llm::ProviderConfig provider;
  std::optional<fs::path> mock_provider;  // fixture dir; replaces the HTTP provider
  std::optional<fs::path> cache_dir;      // default: <outdir>/cache
  bool cache = true;
  bool fresh = false;  // skip cache reads but still record responses

  sandbox::ResourceLimits limits;
  sandbox::ComparePolicy compare;
  sandbox::RunnerConfig runner;

  double dedup_threshold = 0.9;
  std::size_t solution_cap = 100;  // solutions transformed per problem
  bool transform_mot = true;
  bool transform_clean = true;
  bool mot_two_call = false;

  std::vector<int> ks{1};
  bool per_level_mean = false;
  int function_bin_cap = 8;
  metrics::MiVariant mi_variant = metrics::MiVariant::log2_ratio;
  bool top_level_functions = false;  // count only module-level defs
  std::optional<fs::path> candidates;
  int generate_samples = 0;  // evaluate: sample this many programs when no candidates file

  int max_reflection_rounds = 5;
  std::optional<fs::path> results;  // evaluate results read by reflect/analyze

  fs::path outdir = "out";
  std::size_t workers = 4;

  // Throws ConfigError on a broken invariant or a missing input path.
  void validate() const;
  fs::path effective_cache_dir() const;
  fs::path effective_results() const;
};

// Relative paths inside the file resolve against the file's directory.
PipelineConfig load_config(const fs::path& path);
PipelineConfig parse_config(std::string_view text, const fs::path& base_dir);

// Canonical JSON of the effective configuration; its hash goes into manifests.
std::string config_json(const PipelineConfig& cfg);

// All commands return a process exit code: 0 when no infrastructure error
// occurred, 1 otherwise. Human-readable tables go to `out`, diagnostics to
// std::cerr.
int cmd_transform(const PipelineConfig& cfg, std::ostream& out);
int cmd_evaluate(const PipelineConfig& cfg, std::ostream& out);
int cmd_reflect(const PipelineConfig& cfg, std::ostream& out);
int cmd_analyze(const PipelineConfig& cfg, std::ostream& out);
int cmd_stats(const PipelineConfig& cfg, std::ostream& out);

}  // namespace motkit::pipeline
