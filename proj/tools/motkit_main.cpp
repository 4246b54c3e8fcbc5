#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "motkit/pipeline.hpp"

namespace pl = motkit::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"motkit: module-of-thought data transformation and evaluation"};
  app.set_version_flag("--version", std::string(MOTKIT_VERSION));
  app.require_subcommand(1);

  std::string config_path;
  std::string outdir;
  std::size_t workers = 0;
  std::string mock_dir;
  std::string runner;
  bool keep_scratch = false;
  bool fresh = false;
  bool no_cache = false;
  app.add_option("--config", config_path, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--outdir", outdir, "output root; each command writes <outdir>/<command>/");
  app.add_option("--workers", workers, "parallel judge / reflection workers")
      ->check(CLI::PositiveNumber);
  app.add_option("--mock-provider", mock_dir, "answer prompts from a fixture directory")
      ->check(CLI::ExistingDirectory);
  app.add_option("--runner", runner, "candidate command line, {file} is the program path");
  app.add_flag("--keep-scratch", keep_scratch, "keep per-run scratch directories");
  app.add_flag("--fresh", fresh, "ignore cached completions (responses are still recorded)");
  app.add_flag("--no-cache", no_cache, "neither read nor write the response cache");

  app.add_subcommand("transform", "rewrite training solutions into MoT and clean data");
  auto* evaluate = app.add_subcommand("evaluate", "judge candidate programs and compute pass@k");
  std::string candidates;
  int generate = -1;
  bool per_level_mean = false;
  bool top_level_only = false;
  evaluate->add_option("--candidates", candidates, "JSONL of {problem_id, programs}")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--generate", generate, "sample this many programs per problem instead")
      ->check(CLI::NonNegativeNumber);
  evaluate->add_flag("--per-level-mean", per_level_mean,
                     "All = mean of difficulty means instead of mean over problems");
  evaluate->add_flag("--top-level-only", top_level_only,
                     "count only module-level function definitions");
  auto* reflect = app.add_subcommand("reflect", "self-reflection over problems evaluate failed");
  int max_rounds = 0;
  reflect->add_option("--max-rounds", max_rounds, "rounds per problem, round 0 included")
      ->check(CLI::PositiveNumber);
  std::string results;
  for (auto* sub : {reflect, app.add_subcommand("analyze", "function, resource and MI profiles")}) {
    sub->add_option("--results", results, "evaluate results.jsonl (default <outdir>/evaluate)");
  }
  app.add_subcommand("stats", "corpus counts per source, difficulty and split");

  CLI11_PARSE(app, argc, argv);

  pl::PipelineConfig cfg;
  try {
    if (!config_path.empty()) cfg = pl::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "motkit: " << e.what() << "\n";
    return 1;
  }
  // Flags win over the config file.
  if (!outdir.empty()) cfg.outdir = outdir;
  if (workers > 0) cfg.workers = workers;
  if (!mock_dir.empty()) cfg.mock_provider = mock_dir;
  if (!runner.empty()) cfg.runner.command = runner;
  if (keep_scratch) cfg.runner.keep_scratch = true;
  if (fresh) cfg.fresh = true;
  if (no_cache) cfg.cache = false;
  if (!candidates.empty()) cfg.candidates = candidates;
  if (generate >= 0) cfg.generate_samples = generate;
  if (per_level_mean) cfg.per_level_mean = true;
  if (top_level_only) cfg.top_level_functions = true;
  if (max_rounds > 0) cfg.max_reflection_rounds = max_rounds;
  if (!results.empty()) cfg.results = results;

  auto* sub = app.get_subcommands().front();
  const auto& name = sub->get_name();
  if (name == "transform") return pl::cmd_transform(cfg, std::cout);
  if (name == "evaluate") return pl::cmd_evaluate(cfg, std::cout);
  if (name == "reflect") return pl::cmd_reflect(cfg, std::cout);
  if (name == "analyze") return pl::cmd_analyze(cfg, std::cout);
  return pl::cmd_stats(cfg, std::cout);
}
