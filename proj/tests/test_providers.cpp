#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "judgeaudit/http.hpp"
#include "judgeaudit/prompts.hpp"
#include "judgeaudit/providers.hpp"
#include "judgeaudit/scripted.hpp"
#include "judgeaudit/util.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

using namespace judgeaudit;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("judgeaudit-" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// counts raw calls; optionally slow or flaky
class CountingBackend : public Backend {
  public:
    std::atomic<int> calls{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    int fail_first = 0;  // throw TransientError for the first N calls
    int sleep_ms = 0;
    std::string reply = "pong";

    std::string complete_raw(const ChatRequest& req) override {
        const int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        if (sleep_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
        const int c = ++calls;
        --in_flight;
        if (c <= fail_first) throw TransientError("synthetic flake");
        return reply + ":" + req.prompt;
    }
};

}  // namespace

TEST_CASE("cache: identical request is served with zero backend calls") {
    const auto dir = fresh_dir("cache");
    ResponseCache cache(dir);
    auto backend = std::make_unique<CountingBackend>();
    auto* counter = backend.get();
    Provider p({.name = "test"}, std::move(backend), &cache);

    const ChatRequest req{"m", "hello", 0.0};
    const auto r1 = p.complete(req);
    CHECK_FALSE(r1.from_cache);
    const auto r2 = p.complete(req);
    CHECK(r2.from_cache);
    CHECK(r2.text == r1.text);
    CHECK(counter->calls.load() == 1);
    CHECK(p.cache_hits() == 1);

    // cache transparency: same text with caching off
    Provider p2({.name = "nocache"}, std::make_unique<CountingBackend>(), nullptr);
    CHECK(p2.complete(req).text == r1.text);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cache files persist the prompt for audits") {
    const auto dir = fresh_dir("cachefiles");
    ResponseCache cache(dir);
    Provider p({.name = "t"}, std::make_unique<CountingBackend>(), &cache);
    p.complete({"m", "auditable prompt text", 0.0});
    bool found = false;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto j = ordered_json::parse(read_file(e.path()));
        if (j.at("request").at("prompt") == "auditable prompt text") found = true;
    }
    CHECK(found);
    std::filesystem::remove_all(dir);
}

TEST_CASE("offline mode fails on a cache miss and serves hits") {
    const auto dir = fresh_dir("offline");
    ResponseCache cache(dir);
    Provider p({.name = "t"}, std::make_unique<CountingBackend>(), &cache);
    p.complete({"m", "warm", 0.0});
    p.set_offline(true);
    CHECK(p.complete({"m", "warm", 0.0}).from_cache);
    try {
        p.complete({"m", "cold", 0.0});
        FAIL("expected OfflineCacheMiss");
    } catch (const Error& e) {
        CHECK(e.kind == Err::OfflineCacheMiss);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("concurrency bound: 100 queued requests never exceed max_in_flight") {
    auto backend = std::make_unique<CountingBackend>();
    auto* counter = backend.get();
    counter->sleep_ms = 3;
    ProviderConfig cfg;
    cfg.name = "stress";
    cfg.max_in_flight = 10;
    Provider p(cfg, std::move(backend), nullptr);

    std::vector<std::thread> pool;
    std::atomic<int> done{0};
    for (int i = 0; i < 100; i++) {
        pool.emplace_back([&p, &done, i] {
            p.complete({"m", "prompt " + std::to_string(i), 0.0});
            done++;
        });
    }
    for (auto& t : pool) t.join();
    CHECK(done.load() == 100);
    CHECK(counter->calls.load() == 100);
    CHECK(counter->peak.load() <= 10);
    CHECK(p.peak_in_flight() <= 10);
}

TEST_CASE("transient failures retry with backoff, then exhaust") {
    ProviderConfig cfg;
    cfg.name = "flaky";
    cfg.max_retries = 3;
    cfg.retry_base_ms = 1;
    {
        auto backend = std::make_unique<CountingBackend>();
        backend->fail_first = 3;
        auto* counter = backend.get();
        Provider p(cfg, std::move(backend), nullptr);
        CHECK(p.complete({"m", "x", 0.0}).text == "pong:x");
        CHECK(counter->calls.load() == 4);
    }
    {
        auto backend = std::make_unique<CountingBackend>();
        backend->fail_first = 100;
        Provider p(cfg, std::move(backend), nullptr);
        try {
            p.complete({"m", "x", 0.0});
            FAIL("expected TransientExhausted");
        } catch (const Error& e) {
            CHECK(e.kind == Err::TransientExhausted);
        }
    }
}

TEST_CASE("empty body raises MalformedResponse") {
    auto backend = std::make_unique<CountingBackend>();
    backend->reply = "";
    Provider p({.name = "t"}, std::move(backend), nullptr);
    try {
        p.complete({"m", "", 0.0});  // empty prompt is also malformed
        FAIL("expected MalformedResponse");
    } catch (const Error& e) {
        CHECK(e.kind == Err::MalformedResponse);
    }
}

TEST_CASE("extract_json_answer accepts prose, fences, and rejects missing keys") {
    const std::vector<std::string> labels = {"A", "B", "C", "D"};
    auto r = extract_json_answer(R"({"output_label":"A","reason":"The text states..."})", labels);
    CHECK(r.label == "A");
    CHECK(r.reasoning == "The text states...");

    auto fenced = extract_json_answer(
        "Sure, here is my answer:\n```json\n{\"output_label\": \"b\", \"reason\": \"ok\"}\n```",
        labels);
    CHECK(fenced.label == "B");  // normalized to uppercase

    try {
        extract_json_answer(R"({"reason":"no label here"})", labels);
        FAIL("expected ExtractionFailed");
    } catch (const Error& e) {
        CHECK(e.kind == Err::ExtractionFailed);
    }
    try {
        extract_json_answer(R"({"output_label":"E","reason":"x"})", labels);
        FAIL("expected InvalidLabel");
    } catch (const Error& e) {
        CHECK(e.kind == Err::InvalidLabel);
    }
}

TEST_CASE("parse_pairwise_choice: strict, lenient, and invalid") {
    CHECK(parse_pairwise_choice("1") == RawChoice::First);
    CHECK(parse_pairwise_choice(" 2\n") == RawChoice::Second);
    CHECK(parse_pairwise_choice("Answer: 2.") == RawChoice::Second);  // single digit fallback
    for (const std::string bad : {"Both are good", "12", "3", "1 or 2"}) {
        try {
            parse_pairwise_choice(bad);
            FAIL("expected InvalidVerdict for: ", bad);
        } catch (const Error& e) {
            CHECK(e.kind == Err::InvalidVerdict);
        }
    }
}

namespace {

QuestionTask scripted_task(int i) {
    QuestionTask t;
    t.task_id = "t" + std::to_string(i);
    t.kind = TaskKind::MultipleChoice;
    t.passage = "Passage body number " + std::to_string(i) + ".";
    t.question = "Scripted question number " + std::to_string(i) + "?";
    t.options = {{"A", "alpha"}, {"B", "beta"}, {"C", "gamma"}, {"D", "delta"}};
    t.groundtruth_label = "B";
    return t;
}

std::string eval_prompt(const PromptSet& prompts, const QuestionTask& t, const ModelAnswer& a1,
                        const ModelAnswer& a2) {
    return render_template(prompts.evaluator, {{"article", t.passage},
                                               {"question", t.question},
                                               {"answer1", candidate_block(a1)},
                                               {"answer2", candidate_block(a2)}});
}

ModelAnswer scripted_answer(const ScriptedModelParams& p, const QuestionTask& t,
                            const std::string& label, bool with_marker) {
    ModelAnswer a;
    a.task_id = t.task_id;
    a.author_model = p.model;
    a.kind = TaskKind::MultipleChoice;
    a.label_choice = label;
    a.reasoning = with_marker ? ScriptedProvider::scripted_reasoning(p, label, 0)
                              : "A plain reading of the passage supports option " + label + ".";
    return finalize_answer(std::move(a));
}

}  // namespace

TEST_CASE("scripted provider is deterministic") {
    ScriptedProvider sp;
    ScriptedModelParams p;
    p.model = "scripted-a";
    p.seed = 42;
    sp.add_model(p);
    std::vector<QuestionTask> tasks = {scripted_task(1)};
    sp.set_answer_key(tasks);

    const PromptSet prompts = PromptSet::builtin();
    const std::string prompt = render_template(
        prompts.generator_qa, {{"questions", question_block(tasks[0])}, {"text", tasks[0].passage}});
    const std::string r1 = sp.complete_raw({"scripted-a", prompt, 0.0});
    const std::string r2 = sp.complete_raw({"scripted-a", prompt, 0.0});
    CHECK(r1 == r2);

    const auto extracted = extract_json_answer(r1, tasks[0].option_labels());
    CHECK(extracted.label == sp.belief_label("scripted-a", tasks[0].question));
    CHECK(contains_token(extracted.reasoning, sp.params("scripted-a").marker));
}

TEST_CASE("scripted judge monotonicity: style weight raises marker-side pick rate") {
    const PromptSet prompts = PromptSet::builtin();
    std::vector<QuestionTask> tasks;
    for (int i = 0; i < 120; i++) tasks.push_back(scripted_task(i));

    double prev_rate = -1.0;
    for (const double style : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        ScriptedProvider sp;
        ScriptedModelParams p;
        p.model = "sweeper";
        p.style_weight = style;
        p.belief_weight = 0.2;
        p.noise_scale = 0.7;
        p.seed = 5;
        sp.add_model(p);
        sp.set_answer_key(tasks);
        const auto& params = sp.params("sweeper");

        int marked_picked = 0;
        for (const auto& t : tasks) {
            const auto marked = scripted_answer(params, t, "A", true);
            const auto plain = scripted_answer(params, t, "C", false);
            const std::string raw = sp.complete_raw({"sweeper", eval_prompt(prompts, t, marked, plain), 0.0});
            if (parse_pairwise_choice(raw) == RawChoice::First) marked_picked++;
        }
        const double rate = static_cast<double>(marked_picked) / tasks.size();
        CHECK(rate >= prev_rate);  // never decreases as style weight grows
        prev_rate = rate;
    }
    CHECK(prev_rate > 0.9);  // with style weight 1.0 the marker side dominates
}

TEST_CASE("order-biased scripted judge answers 1 regardless of content") {
    ScriptedProvider sp;
    ScriptedModelParams p;
    p.model = "biased";
    p.always_first = true;
    sp.add_model(p);
    const auto t = scripted_task(0);
    sp.set_answer_key({t});
    const PromptSet prompts = PromptSet::builtin();
    const auto a1 = scripted_answer(p, t, "A", false);
    const auto a2 = scripted_answer(p, t, "B", false);
    CHECK(sp.complete_raw({"biased", eval_prompt(prompts, t, a1, a2), 0.0}) == "1");
    CHECK(sp.complete_raw({"biased", eval_prompt(prompts, t, a2, a1), 0.0}) == "1");
}

TEST_CASE("http backend speaks the chat-completions protocol") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        hits++;
        const auto body = ordered_json::parse(req.body);
        CHECK(body.at("model") == "test-model");
        const std::string content = body.at("messages")[0].at("content");
        ordered_json reply;
        reply["choices"] = ordered_json::array(
            {ordered_json{{"message", ordered_json{{"role", "assistant"},
                                                   {"content", "echo: " + content}}}}});
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ProviderConfig cfg;
    cfg.name = "local";
    cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.timeout_s = 5;
    Provider p(cfg, std::make_unique<HttpBackend>(cfg), nullptr);
    const auto resp = p.complete({"test-model", "ping", 0.0});
    CHECK(resp.text == "echo: ping");
    CHECK(hits.load() == 1);

    server.stop();
    server_thread.join();
}

TEST_CASE("http backend reports missing credentials as AuthError") {
    ProviderConfig cfg;
    cfg.name = "remote";
    cfg.url = "http://127.0.0.1:1/v1/chat/completions";
    cfg.credential_env = "JUDGEAUDIT_TEST_MISSING_KEY";
    ::unsetenv("JUDGEAUDIT_TEST_MISSING_KEY");
    HttpBackend backend(cfg);
    try {
        backend.complete_raw({"m", "x", 0.0});
        FAIL("expected AuthError");
    } catch (const Error& e) {
        CHECK(e.kind == Err::AuthError);
        CHECK(std::string(e.what()).find("JUDGEAUDIT_TEST_MISSING_KEY") != std::string::npos);
    }
}

TEST_CASE("request fingerprints key on model, prompt, and temperature") {
    const std::string f1 = request_fingerprint({"m", "p", 0.0});
    CHECK(f1 == request_fingerprint({"m", "p", 0.0}));
    CHECK(f1 != request_fingerprint({"m", "p", 0.7}));
    CHECK(f1 != request_fingerprint({"m2", "p", 0.0}));
    CHECK(f1 != request_fingerprint({"m", "p2", 0.0}));
    CHECK(f1 != request_fingerprint({"m", "p", 0.0, 0, 1}));  // explicit re-query
}

TEST_CASE("http provider retries rate-limit responses and then succeeds") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int n = ++hits;
        if (n <= 2) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        ordered_json reply;
        reply["choices"] = ordered_json::array(
            {ordered_json{{"message", ordered_json{{"role", "assistant"}, {"content", "ok"}}}}});
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ProviderConfig cfg;
    cfg.name = "ratelimited";
    cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.timeout_s = 5;
    cfg.max_retries = 3;
    cfg.retry_base_ms = 1;
    Provider p(cfg, std::make_unique<HttpBackend>(cfg), nullptr);
    CHECK(p.complete({"m", "please", 0.0}).text == "ok");
    CHECK(hits.load() == 3);

    // a persistent 500 eventually exhausts the retry budget
    hits.store(100);
    server.Post("/always500", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
    });
    ProviderConfig cfg2 = cfg;
    cfg2.url = "http://127.0.0.1:" + std::to_string(port) + "/always500";
    cfg2.max_retries = 1;
    Provider p2(cfg2, std::make_unique<HttpBackend>(cfg2), nullptr);
    try {
        p2.complete({"m", "please", 0.0});
        FAIL("expected TransientExhausted");
    } catch (const Error& e) {
        CHECK(e.kind == Err::TransientExhausted);
    }

    server.stop();
    server_thread.join();
}
