#include <set>

#include "json.hpp"
#include "motkit/io.hpp"
#include "motkit/pipeline.hpp"

namespace motkit::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& into, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::string_view variant_name(metrics::MiVariant v) {
  return v == metrics::MiVariant::log2_ratio ? "log2_ratio" : "radon_compat";
}

std::string path_string(const std::optional<fs::path>& p) {
  return p ? p->string() : std::string();
}

}  // namespace

void PipelineConfig::validate() const {
  try {
    provider.validate();
    limits.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto* p : {&train_corpus, &valid_corpus, &test_corpus, &mock_provider, &candidates}) {
    if (*p && !fs::exists(**p)) throw ConfigError("path does not exist: " + (*p)->string());
  }
  if (ks.empty()) throw ConfigError("ks must not be empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw ConfigError("ks must be positive");
    if (i > 0 && ks[i] <= ks[i - 1]) throw ConfigError("ks must be sorted ascending");
  }
  if (dedup_threshold <= 0.0 || dedup_threshold > 1.0) {
    throw ConfigError("dedup_threshold must lie in (0, 1]");
  }
  if (solution_cap < 1) throw ConfigError("solution_cap must be >= 1");
  if (function_bin_cap < 1) throw ConfigError("function_bin_cap must be >= 1");
  if (max_reflection_rounds < 1) throw ConfigError("reflect.max_rounds must be >= 1");
  if (generate_samples < 0) throw ConfigError("generate_samples must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (runner.command.find("{file}") == std::string::npos) {
    throw ConfigError("runner.command must contain {file}");
  }
}

fs::path PipelineConfig::effective_cache_dir() const {
  return cache_dir ? *cache_dir : outdir / "cache";
}

fs::path PipelineConfig::effective_results() const {
  return results ? *results : outdir / "evaluate" / "results.jsonl";
}

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(j,
                      {"corpus", "provider", "mock_provider", "cache", "limits", "compare",
                       "runner", "dedup_threshold", "solution_cap", "transform", "evaluate",
                       "reflect", "outdir", "workers"},
                      "config");

  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base_dir / path).lexically_normal();
  };
  auto read_path = [&](const json& obj, const char* key, std::optional<fs::path>& into,
                       const std::string& where) {
    std::string s;
    read(obj, key, s, where);
    if (!s.empty()) into = resolve(s);
  };

  PipelineConfig cfg;
  if (j.contains("corpus")) {
    const auto& c = j["corpus"];
    reject_unknown_keys(c, {"train", "valid", "test"}, "corpus");
    read_path(c, "train", cfg.train_corpus, "corpus");
    read_path(c, "valid", cfg.valid_corpus, "corpus");
    read_path(c, "test", cfg.test_corpus, "corpus");
  }
  if (j.contains("provider")) {
    const auto& p = j["provider"];
    reject_unknown_keys(p,
                        {"endpoint", "model_name", "temperature", "max_output_tokens",
                         "api_key_env", "max_inflight", "retry_limit", "timeout_s",
                         "backoff_base_ms", "backoff_cap_ms"},
                        "provider");
    auto& pc = cfg.provider;
    read(p, "endpoint", pc.endpoint, "provider");
    read(p, "model_name", pc.model_name, "provider");
    read(p, "temperature", pc.temperature, "provider");
    read(p, "max_output_tokens", pc.max_output_tokens, "provider");
    read(p, "api_key_env", pc.api_key_env, "provider");
    read(p, "max_inflight", pc.max_inflight, "provider");
    read(p, "retry_limit", pc.retry_limit, "provider");
    double timeout = pc.timeout.count();
    read(p, "timeout_s", timeout, "provider");
    pc.timeout = std::chrono::duration<double>(timeout);
    long long base = pc.backoff_base.count();
    long long cap = pc.backoff_cap.count();
    read(p, "backoff_base_ms", base, "provider");
    read(p, "backoff_cap_ms", cap, "provider");
    pc.backoff_base = std::chrono::milliseconds(base);
    pc.backoff_cap = std::chrono::milliseconds(cap);
  }
  read_path(j, "mock_provider", cfg.mock_provider, "config");
  if (j.contains("cache")) {
    const auto& c = j["cache"];
    reject_unknown_keys(c, {"dir", "enabled", "fresh"}, "cache");
    read_path(c, "dir", cfg.cache_dir, "cache");
    read(c, "enabled", cfg.cache, "cache");
    read(c, "fresh", cfg.fresh, "cache");
  }
  if (j.contains("limits")) {
    const auto& l = j["limits"];
    reject_unknown_keys(l, {"wall_time_s", "memory_mb", "output_cap_kb"}, "limits");
    double wall = cfg.limits.wall_time.count();
    std::uint64_t mem_mb = cfg.limits.memory >> 20;
    std::uint64_t cap_kb = cfg.limits.output_cap >> 10;
    read(l, "wall_time_s", wall, "limits");
    read(l, "memory_mb", mem_mb, "limits");
    read(l, "output_cap_kb", cap_kb, "limits");
    cfg.limits.wall_time = std::chrono::duration<double>(wall);
    cfg.limits.memory = mem_mb << 20;
    cfg.limits.output_cap = cap_kb << 10;
  }
  if (j.contains("compare")) {
    const auto& c = j["compare"];
    reject_unknown_keys(c, {"mode", "float_tolerance"}, "compare");
    std::string mode = "tokens";
    read(c, "mode", mode, "compare");
    if (mode == "tokens") {
      cfg.compare.mode = sandbox::ComparePolicy::Mode::tokens;
    } else if (mode == "exact") {
      cfg.compare.mode = sandbox::ComparePolicy::Mode::exact;
    } else {
      throw ConfigError("compare.mode must be 'tokens' or 'exact'");
    }
    read(c, "float_tolerance", cfg.compare.float_tolerance, "compare");
  }
  if (j.contains("runner")) {
    const auto& r = j["runner"];
    reject_unknown_keys(r, {"command", "file_name", "scratch_root", "keep_scratch"}, "runner");
    read(r, "command", cfg.runner.command, "runner");
    read(r, "file_name", cfg.runner.file_name, "runner");
    std::optional<fs::path> scratch;
    read_path(r, "scratch_root", scratch, "runner");
    if (scratch) cfg.runner.scratch_root = *scratch;
    read(r, "keep_scratch", cfg.runner.keep_scratch, "runner");
  }
  read(j, "dedup_threshold", cfg.dedup_threshold, "config");
  read(j, "solution_cap", cfg.solution_cap, "config");
  if (j.contains("transform")) {
    const auto& t = j["transform"];
    reject_unknown_keys(t, {"mot", "clean", "mot_two_call"}, "transform");
    read(t, "mot", cfg.transform_mot, "transform");
    read(t, "clean", cfg.transform_clean, "transform");
    read(t, "mot_two_call", cfg.mot_two_call, "transform");
  }
  if (j.contains("evaluate")) {
    const auto& e = j["evaluate"];
    reject_unknown_keys(e,
                        {"ks", "per_level_mean", "function_bin_cap", "mi_variant",
                         "candidates", "generate_samples", "top_level_functions"},
                        "evaluate");
    read(e, "ks", cfg.ks, "evaluate");
    read(e, "per_level_mean", cfg.per_level_mean, "evaluate");
    read(e, "function_bin_cap", cfg.function_bin_cap, "evaluate");
    std::string variant(variant_name(cfg.mi_variant));
    read(e, "mi_variant", variant, "evaluate");
    if (variant == "log2_ratio") {
      cfg.mi_variant = metrics::MiVariant::log2_ratio;
    } else if (variant == "radon_compat") {
      cfg.mi_variant = metrics::MiVariant::radon_compat;
    } else {
      throw ConfigError("evaluate.mi_variant must be 'log2_ratio' or 'radon_compat'");
    }
    read_path(e, "candidates", cfg.candidates, "evaluate");
    read(e, "generate_samples", cfg.generate_samples, "evaluate");
    read(e, "top_level_functions", cfg.top_level_functions, "evaluate");
  }
  if (j.contains("reflect")) {
    const auto& r = j["reflect"];
    reject_unknown_keys(r, {"max_rounds", "results"}, "reflect");
    read(r, "max_rounds", cfg.max_reflection_rounds, "reflect");
    read_path(r, "results", cfg.results, "reflect");
  }
  std::optional<fs::path> outdir;
  read_path(j, "outdir", outdir, "config");
  if (outdir) cfg.outdir = *outdir;
  read(j, "workers", cfg.workers, "config");
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  auto base = fs::absolute(path).parent_path();
  return parse_config(text, base);
}

std::string config_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["corpus"] = {{"train", path_string(cfg.train_corpus)},
                 {"valid", path_string(cfg.valid_corpus)},
                 {"test", path_string(cfg.test_corpus)}};
  const auto& p = cfg.provider;
  j["provider"] = {{"endpoint", p.endpoint},
                   {"model_name", p.model_name},
                   {"temperature", p.temperature},
                   {"max_output_tokens", p.max_output_tokens},
                   {"api_key_env", p.api_key_env},
                   {"max_inflight", p.max_inflight},
                   {"retry_limit", p.retry_limit},
                   {"timeout_s", p.timeout.count()}};
  j["mock_provider"] = path_string(cfg.mock_provider);
  j["cache"] = {{"dir", cfg.effective_cache_dir().string()},
                {"enabled", cfg.cache},
                {"fresh", cfg.fresh}};
  j["limits"] = {{"wall_time_s", cfg.limits.wall_time.count()},
                 {"memory_mb", cfg.limits.memory >> 20},
                 {"output_cap_kb", cfg.limits.output_cap >> 10}};
  j["compare"] = {
      {"mode", cfg.compare.mode == sandbox::ComparePolicy::Mode::tokens ? "tokens" : "exact"},
      {"float_tolerance", cfg.compare.float_tolerance}};
  j["runner"] = {{"command", cfg.runner.command}, {"file_name", cfg.runner.file_name}};
  j["dedup_threshold"] = cfg.dedup_threshold;
  j["solution_cap"] = cfg.solution_cap;
  j["transform"] = {{"mot", cfg.transform_mot},
                    {"clean", cfg.transform_clean},
                    {"mot_two_call", cfg.mot_two_call}};
  j["evaluate"] = {{"ks", cfg.ks},
                   {"per_level_mean", cfg.per_level_mean},
                   {"function_bin_cap", cfg.function_bin_cap},
                   {"mi_variant", variant_name(cfg.mi_variant)},
                   {"candidates", path_string(cfg.candidates)},
                   {"generate_samples", cfg.generate_samples},
                   {"top_level_functions", cfg.top_level_functions}};
  j["reflect"] = {{"max_rounds", cfg.max_reflection_rounds},
                  {"results", cfg.effective_results().string()}};
  j["outdir"] = cfg.outdir.string();
  // Worker count and scratch handling do not change results, so they stay
  // out of the hashed configuration.
  return j.dump(2);
}

}  // namespace motkit::pipeline
