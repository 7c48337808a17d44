#pragma once

#include <string>

#include "judgeaudit/providers.hpp"

namespace judgeaudit {

// OpenAI-compatible chat-completions backend. The credential is read from the
// configured environment variable on every call, never stored in files.
class HttpBackend : public Backend {
  public:
    explicit HttpBackend(ProviderConfig cfg);
    std::string complete_raw(const ChatRequest& req) override;

  private:
    ProviderConfig cfg_;
    std::string scheme_host_;  // e.g. https://api.example.com
    std::string path_;         // e.g. /v1/chat/completions
};

}  // namespace judgeaudit
