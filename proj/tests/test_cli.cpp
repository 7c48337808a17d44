#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "judgeaudit/cli.hpp"
#include "judgeaudit/util.hpp"
#include "test_support.hpp"

using namespace judgeaudit;
using namespace judgeaudit::testsupport;

namespace {

int run(std::vector<std::string> args) {
    std::vector<char*> argv;
    args.insert(args.begin(), "judgeaudit");
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

// provider + run configs for a fully scripted world over the small fixture
struct ConfigFiles {
    std::filesystem::path dir;
    std::filesystem::path run_json;
    std::filesystem::path providers_json;
    std::filesystem::path out;
};

ConfigFiles write_configs(const std::string& tag,
                          const std::vector<std::string>& conditions = {"synonym"}) {
    ConfigFiles f;
    f.dir = fresh_dir("cli-" + tag);
    f.out = f.dir / "run";
    f.providers_json = f.dir / "providers.json";
    f.run_json = f.dir / "run.json";

    ordered_json providers;
    providers["providers"] = ordered_json::array();
    ordered_json scripted;
    scripted["name"] = "scripted";
    scripted["kind"] = "scripted";
    scripted["max_in_flight"] = 10;
    scripted["models"] = ordered_json::array();
    for (const auto& [model, competence] :
         std::map<std::string, double>{{"alpha", 0.8}, {"bravo", 0.4}, {"helper", 0.5},
                                       {"proxy", 0.5}}) {
        ordered_json m;
        m["model"] = model;
        m["competence"] = competence;
        m["seed"] = 77;
        scripted["models"].push_back(m);
    }
    providers["providers"].push_back(scripted);
    write_file(f.providers_json, providers.dump(2));

    ordered_json run;
    run["corpus"] = {{"path", (fixtures() / "quality_small.jsonl").string()},
                     {"kind", "quality"}};
    run["providers"] = f.providers_json.string();
    run["models"] = {{"generators", {"alpha", "bravo"}},
                     {"judges", {"alpha", "bravo"}},
                     {"helper", "helper"},
                     {"quality_proxy", "proxy"}};
    run["conditions"] = conditions;
    run["seed"] = 3;
    run["out"] = f.out.string();
    run["workers"] = 4;
    write_file(f.run_json, run.dump(2));
    return f;
}

}  // namespace

TEST_CASE("config loading validates structure and reports unknown files") {
    CHECK(run({"report", "--config", "/nonexistent/run.json"}) == 2);

    const auto dir = fresh_dir("cli-badcfg");
    const auto bad = dir / "bad.json";
    write_file(bad, "{\"corpus\": {}}");
    CHECK(run({"report", "--config", bad.string()}) == 2);
}

TEST_CASE("helper model may not judge") {
    auto f = write_configs("rolecheck");
    auto j = ordered_json::parse(read_file(f.run_json));
    j["models"]["judges"] = {"alpha", "helper"};
    j["models"]["generators"] = {"alpha", "helper"};
    write_file(f.run_json, j.dump(2));
    CHECK(run({"audit", "--config", f.run_json.string()}) == 2);
}

TEST_CASE("report before any stage exits with the missing-stage code") {
    const auto f = write_configs("missingstage");
    CHECK(run({"report", "--config", f.run_json.string()}) == 3);
}

TEST_CASE("missing credential env for a hosted provider names the variable") {
    const auto f = write_configs("auth");
    ordered_json providers;
    providers["providers"] = ordered_json::array();
    ordered_json hosted;
    hosted["name"] = "hosted";
    hosted["kind"] = "openai";
    hosted["url"] = "http://127.0.0.1:9/v1/chat/completions";
    hosted["credential_env"] = "JUDGEAUDIT_CLI_TEST_KEY";
    hosted["models"] = {"alpha", "bravo", "helper", "proxy"};
    providers["providers"].push_back(hosted);
    write_file(f.providers_json, providers.dump(2));
    ::unsetenv("JUDGEAUDIT_CLI_TEST_KEY");
    CHECK(run({"generate", "--config", f.run_json.string()}) == 2);
}

TEST_CASE("staged commands mirror the full audit and resume from the bundle") {
    const auto f = write_configs("staged");
    CHECK(run({"generate", "--config", f.run_json.string()}) == 0);
    const auto answers_path = BundlePaths{f.out}.answers();
    REQUIRE(std::filesystem::exists(answers_path));
    const std::string answers_once = read_file(answers_path);
    // two generator models over 12 tasks
    CHECK(load_answers_file(answers_path).size() == 24);

    // rerun adds nothing and reuses the cache
    CHECK(run({"generate", "--config", f.run_json.string()}) == 0);
    CHECK(read_file(answers_path) == answers_once);

    CHECK(run({"pair", "--config", f.run_json.string()}) == 0);
    REQUIRE(std::filesystem::exists(BundlePaths{f.out}.pairs()));
    CHECK(run({"perturb", "--config", f.run_json.string(), "--method", "synonym"}) == 0);
    CHECK(run({"judge", "--config", f.run_json.string()}) == 0);
    CHECK(run({"recognize", "--config", f.run_json.string()}) == 0);
    CHECK(run({"report", "--config", f.run_json.string()}) == 0);
    CHECK(std::filesystem::exists(f.out / "report.md"));
    CHECK(std::filesystem::exists(f.out / "metrics.csv"));

    // judging issued exactly two provider calls per judged pair variant
    const auto verdicts = load_verdicts_file(BundlePaths{f.out}.verdicts());
    size_t eval_prompts = 0;
    for (const auto& entry : std::filesystem::directory_iterator(f.out / "cache")) {
        const auto j = ordered_json::parse(read_file(entry.path()));
        const std::string prompt = j.at("request").at("prompt");
        if (prompt.find("which answer is correct") != std::string::npos) eval_prompts++;
    }
    CHECK(eval_prompts == verdicts.size() * 2);
    std::filesystem::remove_all(f.dir);
}

TEST_CASE("manifest records ambiguity rates and prompt hashes") {
    const auto f = write_configs("manifest");
    REQUIRE(run({"audit", "--config", f.run_json.string()}) == 0);
    const auto manifest = ordered_json::parse(read_file(BundlePaths{f.out}.manifest()));
    CHECK(manifest.at("counts").at("verdicts").get<long long>() > 0);
    CHECK(manifest.at("ambiguity").size() > 0);
    CHECK(manifest.at("prompt_hashes").size() == 9);
    CHECK(manifest.at("stopword_list_hash") == stopword_list_hash());
    CHECK(manifest.at("synonym_k") == 2);
    std::filesystem::remove_all(f.dir);
}

TEST_CASE("metrics.csv numbers match an independent recount of the bundle") {
    const auto f = write_configs("oracle");
    REQUIRE(run({"audit", "--config", f.run_json.string()}) == 0);
    REQUIRE(run({"report", "--config", f.run_json.string()}) == 0);

    // independent recount: ambiguity per judge/condition straight off the JSONL
    const auto verdicts = load_verdicts_file(BundlePaths{f.out}.verdicts());
    std::map<std::string, std::pair<long long, long long>> amb;
    for (const auto& v : verdicts) {
        auto& slot = amb[v.judge_model + "," + v.condition];
        slot.first++;
        if (v.outcome == Preferred::Ambiguous) slot.second++;
    }

    std::map<std::string, std::pair<long long, double>> csv_amb;  // judge,cond -> n,value
    std::istringstream csv(read_file(f.out / "metrics.csv"));
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
        std::vector<std::string> cols;
        std::istringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        if (cols.size() == 6 && cols[0] == "ambiguity_rate")
            csv_amb[cols[1] + "," + cols[2]] = {std::stoll(cols[4]), std::stod(cols[5])};
    }
    REQUIRE(!csv_amb.empty());
    for (const auto& [key, expected] : amb) {
        REQUIRE(csv_amb.count(key));
        CHECK(csv_amb[key].first == expected.first);
        const double rate = expected.first
                                ? static_cast<double>(expected.second) / expected.first
                                : 0.0;
        CHECK(csv_amb[key].second == doctest::Approx(rate).epsilon(1e-9));
    }
    std::filesystem::remove_all(f.dir);
}

TEST_CASE("quality-check: scripted proxy judgments and human CSV ingestion") {
    const auto f = write_configs("quality");
    REQUIRE(run({"audit", "--config", f.run_json.string()}) == 0);
    REQUIRE(run({"quality-check", "--config", f.run_json.string(), "--condition", "synonym"}) == 0);
    const auto rows = read_jsonl(BundlePaths{f.out}.quality());
    REQUIRE(!rows.empty());
    for (const auto& r : rows) {
        CHECK(r.at("source") == "proxy");
        const std::string picked = r.at("picked");
        CHECK((picked == "original" || picked == "perturbed" || picked == "ambiguous"));
    }

    // blinded order randomization shows both sides first across items
    std::set<bool> orders;
    for (const auto& r : rows) orders.insert(r.at("original_first").get<bool>());
    CHECK(orders.size() == 2);

    // ingest external human judgments in the same record stream
    REQUIRE(run({"quality-check", "--config", f.run_json.string(), "--condition", "synonym",
                 "--human-csv", (fixtures() / "human_sample.csv").string()}) == 0);
    const auto all_rows = read_jsonl(BundlePaths{f.out}.quality());
    CHECK(all_rows.size() == rows.size() + 100);

    // report now carries the binomial quality line; balanced prefs -> p near 1
    REQUIRE(run({"report", "--config", f.run_json.string()}) == 0);
    const std::string report = read_file(f.out / "report.md");
    CHECK(report.find("quality control binomial") != std::string::npos);
    std::filesystem::remove_all(f.dir);
}

TEST_CASE("offline mode replays a cached run and rejects cold prompts") {
    const auto f = write_configs("offline");
    REQUIRE(run({"audit", "--config", f.run_json.string()}) == 0);
    // wipe the bundle but keep the cache: the offline rerun must rebuild it
    for (const auto& name : {"answers.jsonl", "pairs.jsonl", "verdicts.jsonl",
                             "recognitions.jsonl", "manifest.json"})
        std::filesystem::remove(f.out / name);
    CHECK(run({"--offline", "audit", "--config", f.run_json.string()}) == 0);
    CHECK(std::filesystem::exists(BundlePaths{f.out}.verdicts()));

    // cold cache in a new out dir cannot run offline
    CHECK(run({"--offline", "audit", "--config", f.run_json.string(), "--out",
               (f.dir / "cold").string()}) == 2);
    std::filesystem::remove_all(f.dir);
}

TEST_CASE("convert subcommand bridges upstream formats") {
    const auto dir = fresh_dir("cli-convert");
    const auto in = dir / "raw.jsonl";
    ordered_json rec;
    rec["article"] = "Body text.";
    rec["questions"] = ordered_json::array({ordered_json{
        {"question", "Q?"}, {"options", {"a", "b", "c", "d"}}, {"gold_label", 1}}});
    write_file(in, rec.dump() + "\n");
    const auto out = dir / "conv.jsonl";
    CHECK(run({"convert", "--from", "quality-raw", "--in", in.string(), "--out-file",
               out.string()}) == 0);
    CHECK(load_quality(out).size() == 1);
    CHECK(run({"convert", "--from", "bogus", "--in", in.string(), "--out-file", out.string()}) ==
          2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("scripted end-to-end report matches the golden fixture byte-for-byte") {
    const auto dir = fresh_dir("cli-golden");
    ordered_json providers;
    providers["providers"] = ordered_json::array();
    ordered_json scripted;
    scripted["name"] = "scripted";
    scripted["kind"] = "scripted";
    scripted["models"] = ordered_json::array();
    for (const auto& [model, comp] : std::map<std::string, double>{
             {"alpha", 0.75}, {"bravo", 0.4}, {"helper", 0.5}}) {
        scripted["models"].push_back(
            ordered_json{{"model", model}, {"competence", comp}, {"seed", 31}});
    }
    providers["providers"].push_back(scripted);
    write_file(dir / "providers.json", providers.dump(2));

    ordered_json cfg;
    cfg["corpus"] = {{"path", (fixtures() / "quality_small.jsonl").string()},
                     {"kind", "quality"}};
    cfg["providers"] = (dir / "providers.json").string();
    cfg["models"] = {{"generators", {"alpha", "bravo"}},
                     {"judges", {"alpha", "bravo"}},
                     {"helper", "helper"}};
    cfg["conditions"] = {"synonym", "paraphrase", "cross_reason", "plugin:spelling-error"};
    cfg["seed"] = 9;
    cfg["out"] = (dir / "run").string();
    cfg["workers"] = 8;
    write_file(dir / "run.json", cfg.dump(2));

    REQUIRE(run({"audit", "--config", (dir / "run.json").string()}) == 0);
    REQUIRE(run({"report", "--config", (dir / "run.json").string()}) == 0);
    CHECK(read_file(dir / "run" / "report.md") ==
          read_file(fixtures() / "golden" / "report.md"));
    CHECK(read_file(dir / "run" / "metrics.csv") ==
          read_file(fixtures() / "golden" / "metrics.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("prompt overrides are honored and pinned by hash in the manifest") {
    auto f = write_configs("prompts");
    const auto tpl = f.dir / "evaluator.txt";
    // the scripted mock recognizes roles by their anchor line, so an override
    // aimed at scripted runs keeps it; wording after the anchor is free
    write_file(tpl,
               "Here are two answers to a question I found. Custom comparison wording.\n\n"
               "Text Passage:\n\n{article}\n\nQuestion:\n\n{question}\n\n"
               "Answer1:\n\n{answer1}\n\nAnswer2:\n\n{answer2}\n\n"
               "Can you tell me which answer is correct? Please answer with only \"1\" or \"2\" "
               "and no other text.\n");
    auto cfg = ordered_json::parse(read_file(f.run_json));
    cfg["prompts"] = {{"evaluator", tpl.string()}};
    write_file(f.run_json, cfg.dump(2));

    REQUIRE(run({"audit", "--config", f.run_json.string()}) == 0);
    const auto manifest = ordered_json::parse(read_file(BundlePaths{f.out}.manifest()));
    CHECK(manifest.at("prompt_hashes").at("evaluator") == sha256_hex(read_file(tpl)));
    CHECK(manifest.at("prompt_hashes").at("evaluator") !=
          sha256_hex(PromptSet::builtin().evaluator));

    // the overridden template really reached the judge
    bool saw_custom = false;
    for (const auto& entry : std::filesystem::directory_iterator(f.out / "cache")) {
        const auto j = ordered_json::parse(read_file(entry.path()));
        if (j.at("request").at("prompt").get<std::string>().find("Custom comparison wording.") !=
            std::string::npos)
            saw_custom = true;
    }
    CHECK(saw_custom);

    // corpus manifest rides along with every staged run
    const auto cm = ordered_json::parse(read_file(f.out / "corpus_manifest.json"));
    CHECK(cm.at("task_count") == 12);
    std::filesystem::remove_all(f.dir);
}

TEST_CASE("recognize --harmful-only probes only pairs the judge answered wrong") {
    const auto f = write_configs("harmfulonly", {});
    REQUIRE(run({"generate", "--config", f.run_json.string()}) == 0);
    REQUIRE(run({"pair", "--config", f.run_json.string()}) == 0);
    REQUIRE(run({"recognize", "--config", f.run_json.string(), "--harmful-only"}) == 0);

    const BundlePaths paths{f.out};
    const auto answers = load_answers_file(paths.answers());
    std::map<std::string, const ModelAnswer*> by_id;
    for (const auto& a : answers) by_id[a.answer_id] = &a;
    std::map<std::string, PairRecord> pair_by_key;
    for (const auto& p : load_pairs_file(paths.pairs()))
        pair_by_key[p.task_id + "|" + p.first_answer_id + "|" + p.second_answer_id] = p;

    const auto recogs = load_recognitions_file(paths.recognitions());
    REQUIRE(!recogs.empty());
    for (const auto& r : recogs) {
        const auto& p =
            pair_by_key.at(r.task_id + "|" + r.first_answer_id + "|" + r.second_answer_id);
        const bool judge_first = by_id.at(r.first_answer_id)->author_model == r.judge_model;
        const bool own_correct = judge_first ? p.first_correct : p.second_correct;
        CHECK_FALSE(own_correct);  // only harmful-quadrant pairs were probed
    }
    std::filesystem::remove_all(f.dir);
}

TEST_CASE("quality-check resumes without duplicating proxy judgments") {
    const auto f = write_configs("qualresume");
    REQUIRE(run({"audit", "--config", f.run_json.string()}) == 0);
    REQUIRE(run({"quality-check", "--config", f.run_json.string(), "--condition", "synonym"}) == 0);
    const auto once = read_jsonl(BundlePaths{f.out}.quality()).size();
    REQUIRE(run({"quality-check", "--config", f.run_json.string(), "--condition", "synonym"}) == 0);
    CHECK(read_jsonl(BundlePaths{f.out}.quality()).size() == once);
    std::filesystem::remove_all(f.dir);
}
