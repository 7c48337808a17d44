#pragma once

// Shared helpers for the test suites: fixture paths, scripted providers wired
// into a hub, and small task factories.

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "judgeaudit/core.hpp"
#include "judgeaudit/providers.hpp"
#include "judgeaudit/scripted.hpp"

namespace judgeaudit::testsupport {

inline std::filesystem::path fixtures() {
    const char* env = std::getenv("JUDGEAUDIT_FIXTURES");
    return env ? std::filesystem::path(env) : std::filesystem::path("tests/fixtures");
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("judgeaudit-" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct SharedScriptedBackend : Backend {
    std::shared_ptr<ScriptedProvider> inner;
    std::string complete_raw(const ChatRequest& r) override { return inner->complete_raw(r); }
};

// One hub entry routing every scripted model through a shared mock.
inline std::shared_ptr<Provider> add_scripted(ProviderHub& hub,
                                              std::shared_ptr<ScriptedProvider> scripted,
                                              ResponseCache* cache = nullptr,
                                              int max_in_flight = 10) {
    auto backend = std::make_unique<SharedScriptedBackend>();
    backend->inner = scripted;
    ProviderConfig cfg;
    cfg.name = "scripted";
    cfg.max_in_flight = max_in_flight;
    auto provider = std::make_shared<Provider>(cfg, std::move(backend), cache);
    hub.add(provider, scripted->models());
    return provider;
}

inline QuestionTask mc_task(int i, const std::string& gold = "B") {
    QuestionTask t;
    t.task_id = "task" + std::to_string(i);
    t.kind = TaskKind::MultipleChoice;
    t.passage = "Recorded account number " + std::to_string(i) +
                " describes what happened at the site in detail.";
    t.question = "What does account number " + std::to_string(i) + " establish?";
    t.options = {{"A", "the first claim"},
                 {"B", "the second claim"},
                 {"C", "the third claim"},
                 {"D", "the fourth claim"}};
    t.groundtruth_label = gold;
    return t;
}

inline ModelAnswer mc_answer(const std::string& task_id, const std::string& model,
                             const std::string& label, const std::string& reasoning) {
    ModelAnswer a;
    a.task_id = task_id;
    a.author_model = model;
    a.kind = TaskKind::MultipleChoice;
    a.label_choice = label;
    a.reasoning = reasoning;
    return finalize_answer(std::move(a));
}

}  // namespace judgeaudit::testsupport
