#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "motkit/promptgen.hpp"

namespace motkit::llm {

struct ProviderConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model_name = "gpt-4o";
  double temperature = 0.0;
  int max_output_tokens = 2048;
  std::string api_key_env = "OPENAI_API_KEY";  // empty: no auth header
  int max_inflight = 4;
  int retry_limit = 3;
  std::chrono::duration<double> timeout{120.0};
  // First retry delay; doubles per attempt up to backoff_cap.
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{30000};

  void validate() const;
};

struct Completion {
  std::string text;
  std::map<std::string, std::string> meta;  // finish_reason, token counts, ...
  bool cached = false;

  bool truncated() const;
};

enum class ErrorKind { transient, auth, request };
std::string_view to_string(ErrorKind kind);

class ProviderError : public std::runtime_error {
 public:
  ProviderError(ErrorKind kind, int status, const std::string& message, int attempts = 1);
  ErrorKind kind() const { return kind_; }
  int status() const { return status_; }
  int attempts() const { return attempts_; }

 private:
  ErrorKind kind_;
  int status_;
  int attempts_;
};

// One raw exchange with a backend. `status` follows HTTP; 0 means the
// request never got a response (connection refused, timeout, ...).
struct RawResponse {
  int status = 0;
  std::string text;
  std::map<std::string, std::string> meta;
  std::string error;
};

class Provider {
 public:
  virtual ~Provider() = default;
  // Must be safe to call from several threads at once.
  virtual RawResponse send(const prompt::Prompt& prompt, const ProviderConfig& cfg) = 0;
};

// Chat-completions JSON over HTTP(S).
class HttpChatProvider : public Provider {
 public:
  RawResponse send(const prompt::Prompt& prompt, const ProviderConfig& cfg) override;
};

// Answers from a fixture directory holding `mock.json`:
//
//   {"rules": [{"tag": "mot", "contains": ["Two Sum"],
//               "response": "...", "response_file": "a.txt",
//               "fail_with": [500, 500], "finish_reason": "stop"}]}
//
// Rules are tried in order against the prompt tag and its final user
// message; every `contains` substring must occur. `fail_with` statuses are
// returned, one per call, before the response is served. No match is a 404.
class MockProvider : public Provider {
 public:
  explicit MockProvider(const std::filesystem::path& fixture_dir);
  RawResponse send(const prompt::Prompt& prompt, const ProviderConfig& cfg) override;

  std::size_t calls() const;

 private:
  struct Rule {
    std::string tag;
    std::vector<std::string> contains;
    std::string response;
    std::vector<int> fail_with;
    std::string finish_reason;
    std::size_t failures_served = 0;
  };
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::size_t calls_ = 0;
};

// Content-addressed response store: `<root>/<sha256 of key>.json`.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  static std::string key_hash(const prompt::Prompt& prompt, const ProviderConfig& cfg,
                              int sample_index);

  std::optional<Completion> load(const std::string& hash) const;
  void store(const std::string& hash, const prompt::Prompt& prompt,
             const ProviderConfig& cfg, int sample_index, const Completion& completion);

  // Serializes writers of the same key.
  std::mutex& key_mutex(const std::string& hash);

 private:
  std::filesystem::path root_;
  std::mutex map_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>, std::less<>> key_mu_;
};

enum class CacheMode { read_write, write_only, off };

using BatchItem = std::variant<Completion, ProviderError>;

class Client {
 public:
  Client(std::shared_ptr<Provider> provider, ProviderConfig cfg,
         std::optional<std::filesystem::path> cache_root = std::nullopt,
         CacheMode mode = CacheMode::read_write);

  // Blocking and thread-safe. `sample_index` distinguishes independent
  // samples of the same prompt in the cache key.
  Completion complete(const prompt::Prompt& prompt, int sample_index = 0);

  // Results in input order; at most max_inflight requests outstanding.
  std::vector<BatchItem> complete_batch(const std::vector<prompt::Prompt>& prompts,
                                        int sample_index = 0);

  const ProviderConfig& config() const { return cfg_; }

 private:
  Completion request_with_retry(const prompt::Prompt& prompt);

  std::shared_ptr<Provider> provider_;
  ProviderConfig cfg_;
  std::unique_ptr<ResponseCache> cache_;
  CacheMode mode_;
};

}  // namespace motkit::llm
