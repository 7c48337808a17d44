#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "judgeaudit/core.hpp"

namespace judgeaudit {

struct ProviderConfig {
    std::string name;
    std::string url;                 // chat-completions endpoint base, empty for mocks
    std::string credential_env;      // env var holding the API key
    int max_in_flight = 10;
    int max_retries = 3;
    double timeout_s = 60.0;
    double temperature = 0.0;
    int retry_base_ms = 250;         // first backoff step; doubles per attempt
};

struct ChatRequest {
    std::string model;
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 0;   // 0 = provider default
    int attempt = 0;      // >0 only for explicit re-queries; salts the fingerprint
};

struct ChatResponse {
    std::string text;
    std::string finish = "stop";
    std::string fingerprint;
    bool from_cache = false;
};

// Cache key: hash of (model, prompt, temperature); attempt > 0 appends a salt
// so a deliberate re-query is cached separately from the first try.
std::string request_fingerprint(const ChatRequest& req);

// Transient failure a provider may raise internally; complete() retries these.
struct TransientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raw completion backend. Implementations: HTTP client, scripted mock.
class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string complete_raw(const ChatRequest& req) = 0;
};

// Directory of content-addressed JSON files, one per fingerprint. Reads are
// lock-free; writes are serialized and go through a temp-file rename.
class ResponseCache {
  public:
    explicit ResponseCache(std::filesystem::path dir);
    std::optional<std::string> lookup(const std::string& fingerprint) const;
    void store(const std::string& fingerprint, const ChatRequest& req, const std::string& text);
    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
    mutable std::mutex write_mutex_;
};

// A configured provider: admission control + retries + caching around a backend.
class Provider {
  public:
    Provider(ProviderConfig cfg, std::unique_ptr<Backend> backend, ResponseCache* cache = nullptr);

    ChatResponse complete(const ChatRequest& req);

    void set_offline(bool offline) { offline_ = offline; }
    const ProviderConfig& config() const { return cfg_; }

    // Instrumentation for tests and manifests.
    int peak_in_flight() const { return peak_in_flight_.load(); }
    long long backend_calls() const { return backend_calls_.load(); }
    long long cache_hits() const { return cache_hits_.load(); }

  private:
    ProviderConfig cfg_;
    std::unique_ptr<Backend> backend_;
    ResponseCache* cache_;
    bool offline_ = false;
    std::counting_semaphore<> slots_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_in_flight_{0};
    std::atomic<long long> backend_calls_{0};
    std::atomic<long long> cache_hits_{0};
};

// Routes model ids to providers.
class ProviderHub {
  public:
    void add(std::shared_ptr<Provider> provider, const std::vector<std::string>& models);
    Provider& for_model(const std::string& model) const;
    bool has_model(const std::string& model) const;
    std::vector<std::shared_ptr<Provider>> providers() const;
    void set_offline(bool offline);

  private:
    std::unordered_map<std::string, std::shared_ptr<Provider>> by_model_;
    std::vector<std::shared_ptr<Provider>> providers_;
};

// --- response parsing ---

// Pulls the first well-formed JSON object holding "output_label" and "reason"
// out of a generation response; tolerates code fences and surrounding prose.
// Throws ExtractionFailed / InvalidLabel.
struct ExtractedAnswer {
    std::string label;
    std::string reasoning;
};
ExtractedAnswer extract_json_answer(const std::string& raw,
                                    const std::vector<std::string>& valid_labels);

// Strict "1"/"2" parse with a lenient single-digit fallback. Throws InvalidVerdict.
RawChoice parse_pairwise_choice(const std::string& raw);

// Generic helper: first balanced JSON object in raw that contains all of the
// required keys, after stripping markdown fences. nullopt when none parses.
std::optional<ordered_json> first_json_object(const std::string& raw,
                                              const std::vector<std::string>& required_keys);

}  // namespace judgeaudit
