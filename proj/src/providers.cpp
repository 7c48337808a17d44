#include "judgeaudit/providers.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <thread>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

std::string request_fingerprint(const ChatRequest& req) {
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.6f", req.temperature);
    std::string canon = req.model;
    canon += '\x1f';
    canon += req.prompt;
    canon += '\x1f';
    canon += temp;
    if (req.attempt > 0) {
        canon += "\x1f#attempt=";
        canon += std::to_string(req.attempt);
    }
    return sha256_hex(canon);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::lookup(const std::string& fingerprint) const {
    const auto path = dir_ / (fingerprint + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    const auto j = ordered_json::parse(read_file(path));
    return j.at("response").at("text").get<std::string>();
}

void ResponseCache::store(const std::string& fingerprint, const ChatRequest& req,
                          const std::string& text) {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["fingerprint"] = fingerprint;
    j["request"] = {{"model", req.model},
                    {"prompt", req.prompt},
                    {"temperature", req.temperature},
                    {"attempt", req.attempt}};
    j["response"] = {{"text", text}};
    const auto path = dir_ / (fingerprint + ".json");
    const auto tmp = dir_ / (fingerprint + ".tmp");

    std::lock_guard<std::mutex> lock(write_mutex_);
    if (std::filesystem::exists(path)) return;
    write_file(tmp, j.dump(2));
    std::filesystem::rename(tmp, path);
}

Provider::Provider(ProviderConfig cfg, std::unique_ptr<Backend> backend, ResponseCache* cache)
    : cfg_(std::move(cfg)),
      backend_(std::move(backend)),
      cache_(cache),
      slots_(std::max(1, cfg_.max_in_flight)) {}

ChatResponse Provider::complete(const ChatRequest& req) {
    if (req.prompt.empty()) fail(Err::MalformedResponse, "empty prompt");
    ChatResponse resp;
    resp.fingerprint = request_fingerprint(req);

    if (cache_) {
        if (auto hit = cache_->lookup(resp.fingerprint)) {
            cache_hits_++;
            resp.text = *hit;
            resp.from_cache = true;
            return resp;
        }
    }
    if (offline_)
        fail(Err::OfflineCacheMiss,
             "offline mode and no cached response for " + resp.fingerprint.substr(0, 12));

    slots_.acquire();
    const int now = ++in_flight_;
    int peak = peak_in_flight_.load();
    while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
    }
    std::string text;
    try {
        int attempt = 0;
        for (;;) {
            try {
                backend_calls_++;
                text = backend_->complete_raw(req);
                break;
            } catch (const TransientError& e) {
                if (attempt >= cfg_.max_retries) {
                    fail(Err::TransientExhausted,
                         std::string("retries spent for ") + req.model + ": " + e.what());
                }
                const auto delay = std::chrono::milliseconds(
                    static_cast<long long>(cfg_.retry_base_ms) << attempt);
                std::this_thread::sleep_for(delay);
                attempt++;
            }
        }
    } catch (...) {
        in_flight_--;
        slots_.release();
        throw;
    }
    in_flight_--;
    slots_.release();

    if (trim(text).empty()) fail(Err::MalformedResponse, "empty body from " + cfg_.name);
    if (cache_) cache_->store(resp.fingerprint, req, text);
    resp.text = std::move(text);
    return resp;
}

void ProviderHub::add(std::shared_ptr<Provider> provider, const std::vector<std::string>& models) {
    for (const auto& m : models) by_model_[m] = provider;
    providers_.push_back(std::move(provider));
}

Provider& ProviderHub::for_model(const std::string& model) const {
    auto it = by_model_.find(model);
    if (it == by_model_.end()) fail(Err::ConfigError, "no provider configured for model " + model);
    return *it->second;
}

bool ProviderHub::has_model(const std::string& model) const {
    return by_model_.count(model) > 0;
}

std::vector<std::shared_ptr<Provider>> ProviderHub::providers() const {
    return providers_;
}

void ProviderHub::set_offline(bool offline) {
    for (auto& p : providers_) p->set_offline(offline);
}

namespace {

// Strip ```fenced``` markers so a fenced JSON body parses like a bare one.
std::string strip_fences(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    size_t i = 0;
    while (i < raw.size()) {
        if (raw.compare(i, 3, "```") == 0) {
            i += 3;
            while (i < raw.size() && raw[i] != '\n' && raw[i] != '`') i++;  // language tag
            continue;
        }
        out.push_back(raw[i]);
        i++;
    }
    return out;
}

}  // namespace

std::optional<ordered_json> first_json_object(const std::string& raw,
                                              const std::vector<std::string>& required_keys) {
    const std::string text = strip_fences(raw);
    for (size_t start = 0; start < text.size(); start++) {
        if (text[start] != '{') continue;
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (size_t i = start; i < text.size(); i++) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') depth++;
            else if (c == '}') {
                depth--;
                if (depth == 0) {
                    const std::string candidate = text.substr(start, i - start + 1);
                    auto parsed = ordered_json::parse(candidate, nullptr, false);
                    if (!parsed.is_discarded() && parsed.is_object()) {
                        bool ok = true;
                        for (const auto& k : required_keys) {
                            if (!parsed.contains(k)) {
                                ok = false;
                                break;
                            }
                        }
                        if (ok) return parsed;
                    }
                    break;  // advance past this '{'
                }
            }
        }
    }
    return std::nullopt;
}

ExtractedAnswer extract_json_answer(const std::string& raw,
                                    const std::vector<std::string>& valid_labels) {
    auto obj = first_json_object(raw, {"output_label", "reason"});
    if (!obj) fail(Err::ExtractionFailed, "no JSON object with output_label/reason");
    std::string label = trim(obj->at("output_label").is_string()
                                 ? obj->at("output_label").get<std::string>()
                                 : obj->at("output_label").dump());
    label = strip_punct(label);
    if (label.size() != 1 || !std::isalpha(static_cast<unsigned char>(label[0])))
        fail(Err::ExtractionFailed, "label is not a single letter: '" + label + "'");
    label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
    if (!valid_labels.empty() &&
        std::find(valid_labels.begin(), valid_labels.end(), label) == valid_labels.end())
        fail(Err::InvalidLabel, "label " + label + " not among task options");
    std::string reason = obj->at("reason").is_string() ? obj->at("reason").get<std::string>()
                                                       : obj->at("reason").dump();
    return {label, reason};
}

RawChoice parse_pairwise_choice(const std::string& raw) {
    const std::string t = trim(raw);
    if (t == "1") return RawChoice::First;
    if (t == "2") return RawChoice::Second;
    // Lenient fallback: accept when the only digit in the response is 1 or 2.
    char digit = 0;
    int digit_count = 0;
    for (const char c : t) {
        if (std::isdigit(static_cast<unsigned char>(c))) {
            digit = c;
            digit_count++;
        }
    }
    if (digit_count == 1 && (digit == '1' || digit == '2'))
        return digit == '1' ? RawChoice::First : RawChoice::Second;
    fail(Err::InvalidVerdict, "cannot read a 1/2 choice from: '" + t.substr(0, 80) + "'");
}

}  // namespace judgeaudit
