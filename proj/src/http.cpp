#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "judgeaudit/http.hpp"

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

HttpBackend::HttpBackend(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    std::string url = cfg_.url;
    if (url.empty()) fail(Err::ConfigError, "provider " + cfg_.name + " has no endpoint URL");
    const size_t scheme_end = url.find("://");
    size_t path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = url;
        path_ = "/v1/chat/completions";
    } else {
        scheme_host_ = url.substr(0, path_start);
        path_ = url.substr(path_start);
        if (path_ == "/" || path_.empty()) path_ = "/v1/chat/completions";
    }
}

std::string HttpBackend::complete_raw(const ChatRequest& req) {
    const char* key = cfg_.credential_env.empty() ? nullptr : std::getenv(cfg_.credential_env.c_str());
    if (!cfg_.credential_env.empty() && (!key || !*key))
        fail(Err::AuthError, "credential env var " + cfg_.credential_env + " is not set");

    ordered_json body;
    body["model"] = req.model;
    body["messages"] = ordered_json::array({ordered_json{{"role", "user"}, {"content", req.prompt}}});
    body["temperature"] = req.temperature;
    if (req.max_tokens > 0) body["max_tokens"] = req.max_tokens;

    httplib::Client client(scheme_host_);
    client.set_connection_timeout(static_cast<time_t>(cfg_.timeout_s), 0);
    client.set_read_timeout(static_cast<time_t>(cfg_.timeout_s), 0);
    httplib::Headers headers;
    if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw TransientError("no response from " + scheme_host_);
    if (res->status == 401 || res->status == 403)
        fail(Err::AuthError, "provider " + cfg_.name + " rejected the credential");
    if (res->status == 429 || res->status >= 500)
        throw TransientError("status " + std::to_string(res->status) + " from " + cfg_.name);
    if (res->status != 200)
        fail(Err::MalformedResponse,
             "status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));

    const auto j = ordered_json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
        fail(Err::MalformedResponse, "unexpected completion payload from " + cfg_.name);
    return j["choices"][0].at("message").at("content").get<std::string>();
}

}  // namespace judgeaudit
