#include "judgeaudit/datasets.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

ordered_json CorpusManifest::to_json() const {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["corpus_id"] = corpus_id;
    j["kind"] = task_kind_name(kind);
    j["source_path"] = source_path;
    j["task_count"] = task_count;
    if (subsample) {
        j["subsample"] = {{"seed", subsample->seed}, {"n", subsample->n}};
    }
    return j;
}

namespace {

void check_unique_ids(const std::vector<QuestionTask>& tasks) {
    std::unordered_set<std::string> seen;
    for (const auto& t : tasks) {
        if (!seen.insert(t.task_id).second)
            fail(Err::DuplicateTaskId, "duplicate task_id " + t.task_id);
    }
}

std::string require_string(const ordered_json& j, const char* field, size_t lineno) {
    if (!j.contains(field))
        fail(Err::SchemaError, std::string("record ") + std::to_string(lineno) +
                                   " missing field '" + field + "'");
    return j.at(field).get<std::string>();
}

}  // namespace

std::vector<QuestionTask> load_quality(const std::filesystem::path& path) {
    std::vector<QuestionTask> tasks;
    size_t lineno = 0;
    for (const auto& j : read_jsonl(path)) {
        lineno++;
        QuestionTask t;
        t.kind = TaskKind::MultipleChoice;
        t.task_id = j.contains("task_id") ? j["task_id"].get<std::string>()
                                          : "q" + std::to_string(lineno);
        t.passage = require_string(j, "passage", lineno);
        t.question = require_string(j, "question", lineno);
        if (!j.contains("options") || !j["options"].is_array())
            fail(Err::SchemaError, "record " + std::to_string(lineno) + " missing options");
        const auto& opts = j["options"];
        if (opts.size() != 4)
            fail(Err::SchemaError, "record " + std::to_string(lineno) + " has " +
                                       std::to_string(opts.size()) + " options, expected 4");
        int i = 0;
        for (const auto& o : opts) {
            t.options.push_back({std::string(1, static_cast<char>('A' + i)), o.get<std::string>()});
            i++;
        }
        t.groundtruth_label = require_string(j, "gold_label", lineno);
        t.validate();
        tasks.push_back(std::move(t));
    }
    check_unique_ids(tasks);
    return tasks;
}

std::vector<QuestionTask> load_code_corpus(const std::filesystem::path& path) {
    std::vector<QuestionTask> tasks;
    size_t lineno = 0;
    for (const auto& j : read_jsonl(path)) {
        lineno++;
        QuestionTask t;
        t.kind = TaskKind::Code;
        t.task_id = j.contains("task_id") ? j["task_id"].get<std::string>()
                                          : "c" + std::to_string(lineno);
        t.question = j.contains("problem") ? j["problem"].get<std::string>()
                                           : require_string(j, "question", lineno);
        if (!j.contains("tests") || !j["tests"].is_array())
            fail(Err::SchemaError, "record " + std::to_string(lineno) + " missing tests");
        for (const auto& tc : j["tests"]) {
            if (tc.is_string()) {
                t.test_cases.push_back({tc.get<std::string>(), ""});
            } else {
                t.test_cases.push_back(
                    {tc.at("call").get<std::string>(), tc.value("expected", std::string())});
            }
        }
        if (t.test_cases.empty())
            fail(Err::NoTestCases, "record " + std::to_string(lineno) + " has no test cases");
        t.validate();
        tasks.push_back(std::move(t));
    }
    check_unique_ids(tasks);
    return tasks;
}

std::vector<QuestionTask> load_corpus(const std::filesystem::path& path, TaskKind kind) {
    return kind == TaskKind::Code ? load_code_corpus(path) : load_quality(path);
}

std::vector<QuestionTask> subsample_tasks(std::vector<QuestionTask> tasks,
                                          const SubsampleSpec& spec) {
    if (spec.n == 0 || spec.n >= tasks.size()) return tasks;
    // Rank every task by a seed-keyed hash of its id; take the lowest n. The
    // selected id set depends only on (seed, ids), not on file order.
    std::vector<std::pair<std::uint64_t, size_t>> ranked;
    ranked.reserve(tasks.size());
    for (size_t i = 0; i < tasks.size(); i++) {
        ranked.emplace_back(stable_hash64(std::to_string(spec.seed) + "|" + tasks[i].task_id), i);
    }
    std::sort(ranked.begin(), ranked.end());
    std::set<size_t> keep;
    for (size_t i = 0; i < spec.n; i++) keep.insert(ranked[i].second);
    std::vector<QuestionTask> out;
    out.reserve(spec.n);
    for (size_t i = 0; i < tasks.size(); i++) {
        if (keep.count(i)) out.push_back(std::move(tasks[i]));
    }
    return out;
}

CorpusManifest make_manifest(const std::filesystem::path& path, TaskKind kind,
                             const std::vector<QuestionTask>& tasks,
                             std::optional<SubsampleSpec> subsample) {
    CorpusManifest m;
    m.corpus_id = path.stem().string();
    m.kind = kind;
    m.source_path = path.string();
    m.task_count = tasks.size();
    m.subsample = subsample;
    return m;
}

std::size_t convert_quality_raw(const std::filesystem::path& in, const std::filesystem::path& out) {
    std::vector<ordered_json> records;
    for (const auto& j : read_jsonl(in)) {
        const std::string article = j.at("article").get<std::string>();
        const std::string set_id =
            j.contains("article_id") ? j["article_id"].get<std::string>() : sha256_hex(article).substr(0, 8);
        int qi = 0;
        for (const auto& q : j.at("questions")) {
            qi++;
            ordered_json rec;
            rec["task_id"] = set_id + "_" + std::to_string(qi);
            rec["passage"] = article;
            rec["question"] = q.at("question").get<std::string>();
            rec["options"] = q.at("options");
            const int gold = q.at("gold_label").get<int>();  // 1-indexed upstream
            if (gold < 1 || gold > static_cast<int>(q.at("options").size()))
                fail(Err::SchemaError, "gold_label out of range in " + rec["task_id"].get<std::string>());
            rec["gold_label"] = std::string(1, static_cast<char>('A' + gold - 1));
            records.push_back(std::move(rec));
        }
    }
    write_jsonl(out, records);
    return records.size();
}

std::size_t convert_mbpp_raw(const std::filesystem::path& in, const std::filesystem::path& out) {
    std::vector<ordered_json> records;
    for (const auto& j : read_jsonl(in)) {
        ordered_json rec;
        if (j.contains("task_id")) {
            rec["task_id"] = j["task_id"].is_string()
                                 ? j["task_id"].get<std::string>()
                                 : "mbpp_" + std::to_string(j["task_id"].get<long long>());
        } else {
            rec["task_id"] = "mbpp_" + std::to_string(records.size() + 1);
        }
        rec["problem"] = j.contains("text") ? j["text"].get<std::string>()
                                            : j.at("prompt").get<std::string>();
        ordered_json tests = ordered_json::array();
        for (const auto& a : j.at("test_list")) tests.push_back(a.get<std::string>());
        if (tests.empty()) fail(Err::NoTestCases, "record without asserts in " + in.string());
        rec["tests"] = tests;
        records.push_back(std::move(rec));
    }
    write_jsonl(out, records);
    return records.size();
}

}  // namespace judgeaudit
