#include "motkit/llm.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <cstdlib>
#include <ctime>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "motkit/io.hpp"
#include "motkit/parallel.hpp"

namespace motkit::llm {

using nlohmann::json;

void ProviderConfig::validate() const {
  if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (max_output_tokens < 1) throw std::invalid_argument("max_output_tokens must be >= 1");
  if (max_inflight < 1) throw std::invalid_argument("max_inflight must be >= 1");
  if (retry_limit < 0 || retry_limit > 10) {
    throw std::invalid_argument("retry_limit must lie in [0, 10]");
  }
  if (timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
}

bool Completion::truncated() const {
  auto it = meta.find("finish_reason");
  return it != meta.end() && it->second == "length";
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::transient: return "transient";
    case ErrorKind::auth: return "auth";
    case ErrorKind::request: break;
  }
  return "request";
}

ProviderError::ProviderError(ErrorKind kind, int status, const std::string& message,
                             int attempts)
    : std::runtime_error(message), kind_(kind), status_(status), attempts_(attempts) {}

namespace {

json messages_json(const prompt::Prompt& p) {
  json out = json::array();
  for (const auto& m : prompt::to_messages(p)) {
    out.push_back({{"role", m.role}, {"content", m.content}});
  }
  return out;
}

bool is_transient(int status) {
  return status == 0 || status == 408 || status == 409 || status == 429 || status >= 500;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RawResponse HttpChatProvider::send(const prompt::Prompt& p, const ProviderConfig& cfg) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg.endpoint, m, url_re)) {
    return {400, "", {}, "malformed endpoint URL: " + cfg.endpoint};
  }
  httplib::Headers headers;
  if (!cfg.api_key_env.empty()) {
    const char* key = std::getenv(cfg.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      return {401, "", {}, "environment variable " + cfg.api_key_env + " is not set"};
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body = {{"model", cfg.model_name},
               {"messages", messages_json(p)},
               {"temperature", cfg.temperature},
               {"max_tokens", cfg.max_output_tokens}};

  httplib::Client cli(m[1].str());
  auto micros = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout);
  cli.set_connection_timeout(micros);
  cli.set_read_timeout(micros);
  cli.set_write_timeout(micros);
  std::string path = m[2].matched ? m[2].str() : "/";
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) return {0, "", {}, httplib::to_string(res.error())};
  if (res->status < 200 || res->status >= 300) {
    return {res->status, "", {}, res->body.substr(0, 500)};
  }

  RawResponse out;
  out.status = res->status;
  try {
    auto j = json::parse(res->body);
    const auto& choice = j.at("choices").at(0);
    out.text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      out.meta["finish_reason"] = choice["finish_reason"].get<std::string>();
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      for (auto& [k, v] : j["usage"].items()) {
        if (v.is_number_integer()) out.meta[k] = std::to_string(v.get<long long>());
      }
    }
  } catch (const json::exception& e) {
    // A 2xx with an unreadable body is usually a proxy hiccup.
    return {502, "", {}, std::string("unreadable response body: ") + e.what()};
  }
  return out;
}

MockProvider::MockProvider(const std::filesystem::path& fixture_dir) {
  auto path = fixture_dir / "mock.json";
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  for (const auto& r : doc.at("rules")) {
    Rule rule;
    rule.tag = r.value("tag", "");
    if (r.contains("contains")) {
      for (const auto& s : r["contains"]) rule.contains.push_back(s.get<std::string>());
    }
    if (r.contains("response_file")) {
      rule.response = io::read_file(fixture_dir / r["response_file"].get<std::string>());
    } else {
      rule.response = r.value("response", "");
    }
    if (r.contains("fail_with")) rule.fail_with = r["fail_with"].get<std::vector<int>>();
    rule.finish_reason = r.value("finish_reason", "stop");
    rules_.push_back(std::move(rule));
  }
}

RawResponse MockProvider::send(const prompt::Prompt& p, const ProviderConfig&) {
  std::lock_guard lock(mu_);
  ++calls_;
  auto tag = prompt::to_string(p.tag);
  for (auto& rule : rules_) {
    if (!rule.tag.empty() && rule.tag != tag) continue;
    bool all = std::all_of(rule.contains.begin(), rule.contains.end(),
                           [&](const std::string& s) { return p.user.find(s) != std::string::npos; });
    if (!all) continue;
    if (rule.failures_served < rule.fail_with.size()) {
      int status = rule.fail_with[rule.failures_served++];
      return {status, "", {}, "scripted failure"};
    }
    RawResponse out;
    out.status = 200;
    out.text = rule.response;
    out.meta["finish_reason"] = rule.finish_reason;
    return out;
  }
  return {404, "", {}, "no mock rule matches this prompt"};
}

std::size_t MockProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

ResponseCache::ResponseCache(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

namespace {

json cache_key(const prompt::Prompt& p, const ProviderConfig& cfg, int sample_index) {
  json key = {{"model", cfg.model_name},
              {"temperature", cfg.temperature},
              {"messages", messages_json(p)}};
  if (sample_index != 0) key["sample"] = sample_index;
  return key;
}

}  // namespace

std::string ResponseCache::key_hash(const prompt::Prompt& p, const ProviderConfig& cfg,
                                    int sample_index) {
  return io::sha256_hex(cache_key(p, cfg, sample_index).dump());
}

std::optional<Completion> ResponseCache::load(const std::string& hash) const {
  auto path = root_ / (hash + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto j = json::parse(io::read_file(path));
    Completion c;
    c.text = j.at("text").get<std::string>();
    c.meta = j.value("meta", std::map<std::string, std::string>{});
    c.cached = true;
    return c;
  } catch (const std::exception&) {
    return std::nullopt;  // a damaged entry is a miss; the next store replaces it
  }
}

void ResponseCache::store(const std::string& hash, const prompt::Prompt& p,
                          const ProviderConfig& cfg, int sample_index,
                          const Completion& c) {
  json entry = {{"key", cache_key(p, cfg, sample_index)},
                {"text", c.text},
                {"meta", c.meta},
                {"timestamp", utc_timestamp()}};
  io::write_file_atomic(root_ / (hash + ".json"), entry.dump(2));
}

std::mutex& ResponseCache::key_mutex(const std::string& hash) {
  std::lock_guard lock(map_mu_);
  auto& slot = key_mu_[hash];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

Client::Client(std::shared_ptr<Provider> provider, ProviderConfig cfg,
               std::optional<std::filesystem::path> cache_root, CacheMode mode)
    : provider_(std::move(provider)), cfg_(std::move(cfg)), mode_(mode) {
  cfg_.validate();
  if (cache_root && mode_ != CacheMode::off) {
    cache_ = std::make_unique<ResponseCache>(*cache_root);
  }
}

Completion Client::request_with_retry(const prompt::Prompt& p) {
  auto delay = cfg_.backoff_base;
  for (int attempt = 1;; ++attempt) {
    RawResponse r = provider_->send(p, cfg_);
    if (r.status >= 200 && r.status < 300) {
      return Completion{std::move(r.text), std::move(r.meta), false};
    }
    std::string what = "provider returned " + std::to_string(r.status) +
                       (r.error.empty() ? "" : ": " + r.error);
    if (r.status == 401 || r.status == 403) {
      throw ProviderError(ErrorKind::auth, r.status, what, attempt);
    }
    if (!is_transient(r.status)) {
      throw ProviderError(ErrorKind::request, r.status, what, attempt);
    }
    if (attempt > cfg_.retry_limit) {
      throw ProviderError(ErrorKind::transient, r.status,
                          what + " (after " + std::to_string(attempt) + " attempts)",
                          attempt);
    }
    std::this_thread::sleep_for(delay);
    delay = std::min(delay * 2, cfg_.backoff_cap);
  }
}

Completion Client::complete(const prompt::Prompt& p, int sample_index) {
  if (!cache_) return request_with_retry(p);
  auto hash = ResponseCache::key_hash(p, cfg_, sample_index);
  // Holding the key lock across the request keeps concurrent identical
  // prompts from issuing duplicate calls.
  std::lock_guard lock(cache_->key_mutex(hash));
  if (mode_ == CacheMode::read_write) {
    if (auto hit = cache_->load(hash)) return *hit;
  }
  auto c = request_with_retry(p);
  cache_->store(hash, p, cfg_, sample_index, c);
  return c;
}

std::vector<BatchItem> Client::complete_batch(const std::vector<prompt::Prompt>& prompts,
                                              int sample_index) {
  std::vector<std::optional<BatchItem>> slots(prompts.size());
  parallel_for(prompts.size(), static_cast<std::size_t>(cfg_.max_inflight),
               [&](std::size_t i) {
                 try {
                   slots[i].emplace(complete(prompts[i], sample_index));
                 } catch (const ProviderError& e) {
                   slots[i].emplace(e);
                 }
               });
  std::vector<BatchItem> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace motkit::llm
