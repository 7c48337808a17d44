#include "judgeaudit/core.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

const char* err_name(Err e) {
    switch (e) {
        case Err::ComparablePair: return "ComparablePair";
        case Err::AuthorBothSides: return "AuthorBothSides";
        case Err::AuthError: return "AuthError";
        case Err::TransientExhausted: return "TransientExhausted";
        case Err::MalformedResponse: return "MalformedResponse";
        case Err::ExtractionFailed: return "ExtractionFailed";
        case Err::InvalidLabel: return "InvalidLabel";
        case Err::InvalidVerdict: return "InvalidVerdict";
        case Err::OfflineCacheMiss: return "OfflineCacheMiss";
        case Err::SchemaError: return "SchemaError";
        case Err::DuplicateTaskId: return "DuplicateTaskId";
        case Err::NoTestCases: return "NoTestCases";
        case Err::NoCandidates: return "NoCandidates";
        case Err::HelperMalformed: return "HelperMalformed";
        case Err::WordVanished: return "WordVanished";
        case Err::ParaphraseChangedLabel: return "ParaphraseChangedLabel";
        case Err::GenerationRefused: return "GenerationRefused";
        case Err::RestyleMalformed: return "RestyleMalformed";
        case Err::CommentLost: return "CommentLost";
        case Err::SandboxUnavailable: return "SandboxUnavailable";
        case Err::DuplicateName: return "DuplicateName";
        case Err::PluginContract: return "PluginContract";
        case Err::EmptySelection: return "EmptySelection";
        case Err::PairMismatch: return "PairMismatch";
        case Err::ZeroVariance: return "ZeroVariance";
        case Err::ZeroVarianceDifferences: return "ZeroVarianceDifferences";
        case Err::DegenerateMargin: return "DegenerateMargin";
        case Err::ConfigError: return "ConfigError";
        case Err::MissingStage: return "MissingStage";
    }
    return "Error";
}

std::string task_kind_name(TaskKind k) {
    return k == TaskKind::Code ? "code" : "multiple_choice";
}

TaskKind task_kind_from(const std::string& s) {
    if (s == "code") return TaskKind::Code;
    if (s == "multiple_choice" || s == "quality" || s == "qa") return TaskKind::MultipleChoice;
    fail(Err::SchemaError, "unknown task kind: " + s);
}

std::vector<std::string> QuestionTask::option_labels() const {
    std::vector<std::string> out;
    out.reserve(options.size());
    for (const auto& o : options) out.push_back(o.label);
    return out;
}

const std::string* QuestionTask::option_text(const std::string& label) const {
    for (const auto& o : options) {
        if (o.label == label) return &o.text;
    }
    return nullptr;
}

void QuestionTask::validate() const {
    if (task_id.empty()) fail(Err::SchemaError, "task_id empty");
    if (question.empty()) fail(Err::SchemaError, "question empty in task " + task_id);
    if (kind == TaskKind::MultipleChoice) {
        if (options.size() < 2)
            fail(Err::SchemaError, "task " + task_id + " needs >=2 options");
        if (!option_text(groundtruth_label))
            fail(Err::SchemaError, "task " + task_id + " groundtruth label '" +
                                       groundtruth_label + "' not among options");
    } else {
        if (test_cases.empty()) fail(Err::NoTestCases, "task " + task_id + " has no test cases");
    }
}

std::string lineage_name(const Lineage l, const std::string& plugin) {
    switch (l) {
        case Lineage::Original: return "original";
        case Lineage::SynonymReplaced: return "synonym_replaced";
        case Lineage::JudgeParaphrased: return "judge_paraphrased";
        case Lineage::CrossReason: return "cross_reason";
        case Lineage::Restyled: return "restyled";
        case Lineage::PluginPerturbed: return "plugin:" + plugin;
    }
    return "original";
}

std::pair<Lineage, std::string> lineage_from(const std::string& s) {
    if (s == "original") return {Lineage::Original, ""};
    if (s == "synonym_replaced") return {Lineage::SynonymReplaced, ""};
    if (s == "judge_paraphrased") return {Lineage::JudgeParaphrased, ""};
    if (s == "cross_reason") return {Lineage::CrossReason, ""};
    if (s == "restyled") return {Lineage::Restyled, ""};
    if (s.rfind("plugin:", 0) == 0) return {Lineage::PluginPerturbed, s.substr(7)};
    fail(Err::SchemaError, "unknown lineage: " + s);
}

void ModelAnswer::validate() const {
    const bool original = lineage == Lineage::Original;
    if (original != parent_answer_id.empty())
        fail(Err::SchemaError, "lineage=original <=> parent_answer_id absent (answer for task " +
                                   task_id + ")");
    if (kind == TaskKind::MultipleChoice && label_choice.empty())
        fail(Err::SchemaError, "multiple-choice answer without label (task " + task_id + ")");
    if (kind == TaskKind::Code && !label_choice.empty())
        fail(Err::SchemaError, "code answer with label (task " + task_id + ")");
}

std::string compute_answer_id(const ModelAnswer& ans) {
    std::string canon;
    canon += "task:";
    canon += ans.task_id;
    canon += "\nauthor:";
    canon += ans.author_model;
    canon += "\nlabel:";
    canon += ans.label_choice;
    canon += "\nlineage:";
    canon += lineage_name(ans.lineage, ans.plugin_name);
    canon += "\ncontent:";
    canon += normalize_newlines(ans.content());
    return sha256_hex(canon).substr(0, 24);
}

ModelAnswer finalize_answer(ModelAnswer ans) {
    ans.validate();
    ans.answer_id = compute_answer_id(ans);
    return ans;
}

std::string AnswerPair::base_key() const {
    std::string a = first.author_model, b = second.author_model;
    if (a > b) std::swap(a, b);
    return task_id + "|" + a + "|" + b;
}

std::string AnswerPair::variant_key() const {
    return task_id + "|" + first.answer_id + "|" + second.answer_id;
}

void AnswerPair::validate() const {
    if (first.task_id != second.task_id || first.task_id != task_id)
        fail(Err::SchemaError, "pair sides disagree on task id");
}

std::string quadrant_name(Quadrant q) {
    switch (q) {
        case Quadrant::Harmful: return "harmful";
        case Quadrant::Legitimate: return "legitimate";
        case Quadrant::ThirdParty: return "third_party";
    }
    return "third_party";
}

Quadrant classify_quadrant(const AnswerPair& pair, const std::string& judge_model) {
    if (pair.comparable())
        fail(Err::ComparablePair, "both sides share correctness on task " + pair.task_id);
    const bool judge_first = pair.first.author_model == judge_model;
    const bool judge_second = pair.second.author_model == judge_model;
    if (judge_first && judge_second)
        fail(Err::AuthorBothSides, "judge " + judge_model + " authored both sides of " + pair.task_id);
    if (!judge_first && !judge_second) return Quadrant::ThirdParty;
    const bool own_correct = judge_first ? pair.first_correct : pair.second_correct;
    return own_correct ? Quadrant::Legitimate : Quadrant::Harmful;
}

Preferred resolve_verdict(RawChoice query_a, RawChoice query_b) {
    if (query_a == RawChoice::First && query_b == RawChoice::Second) return Preferred::First;
    if (query_a == RawChoice::Second && query_b == RawChoice::First) return Preferred::Second;
    return Preferred::Ambiguous;
}

namespace {

std::string raw_choice_str(std::optional<RawChoice> c) {
    if (!c) return "invalid";
    return *c == RawChoice::First ? "1" : "2";
}

std::optional<RawChoice> raw_choice_parse(const std::string& s) {
    if (s == "1") return RawChoice::First;
    if (s == "2") return RawChoice::Second;
    return std::nullopt;
}

}  // namespace

std::string stat_test_name(StatTest t) {
    switch (t) {
        case StatTest::PearsonR: return "pearson_r";
        case StatTest::ChiSquare: return "chi_square";
        case StatTest::PairedT: return "paired_t";
        case StatTest::Binomial: return "binomial";
    }
    return "pearson_r";
}

ordered_json answer_to_json(const ModelAnswer& a) {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["answer_id"] = a.answer_id;
    j["task_id"] = a.task_id;
    j["author_model"] = a.author_model;
    j["kind"] = task_kind_name(a.kind);
    if (a.kind == TaskKind::MultipleChoice) {
        j["label_choice"] = a.label_choice;
        j["reasoning"] = a.reasoning;
    } else {
        j["code_solution"] = a.code_solution;
    }
    j["lineage"] = lineage_name(a.lineage, a.plugin_name);
    if (!a.parent_answer_id.empty()) j["parent_answer_id"] = a.parent_answer_id;
    if (!a.perturber_model.empty()) j["perturber_model"] = a.perturber_model;
    return j;
}

ModelAnswer answer_from_json(const ordered_json& j) {
    ModelAnswer a;
    a.answer_id = j.at("answer_id").get<std::string>();
    a.task_id = j.at("task_id").get<std::string>();
    a.author_model = j.at("author_model").get<std::string>();
    a.kind = task_kind_from(j.at("kind").get<std::string>());
    if (a.kind == TaskKind::MultipleChoice) {
        a.label_choice = j.at("label_choice").get<std::string>();
        a.reasoning = j.at("reasoning").get<std::string>();
    } else {
        a.code_solution = j.at("code_solution").get<std::string>();
    }
    std::tie(a.lineage, a.plugin_name) = lineage_from(j.at("lineage").get<std::string>());
    if (j.contains("parent_answer_id")) a.parent_answer_id = j["parent_answer_id"].get<std::string>();
    if (j.contains("perturber_model")) a.perturber_model = j["perturber_model"].get<std::string>();
    return a;
}

ordered_json pair_to_json(const AnswerPair& p) {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["task_id"] = p.task_id;
    j["first_answer_id"] = p.first.answer_id;
    j["second_answer_id"] = p.second.answer_id;
    j["first_author"] = p.first.author_model;
    j["second_author"] = p.second.author_model;
    j["first_correct"] = p.first_correct;
    j["second_correct"] = p.second_correct;
    j["condition"] = p.condition;
    return j;
}

PairRecord pair_record_from_json(const ordered_json& j) {
    PairRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.first_answer_id = j.at("first_answer_id").get<std::string>();
    r.second_answer_id = j.at("second_answer_id").get<std::string>();
    r.first_author = j.at("first_author").get<std::string>();
    r.second_author = j.at("second_author").get<std::string>();
    r.first_correct = j.at("first_correct").get<bool>();
    r.second_correct = j.at("second_correct").get<bool>();
    r.condition = j.at("condition").get<std::string>();
    return r;
}

ordered_json verdict_to_json(const JudgeVerdict& v) {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["judge_model"] = v.judge_model;
    j["task_id"] = v.task_id;
    j["first_answer_id"] = v.first_answer_id;
    j["second_answer_id"] = v.second_answer_id;
    j["condition"] = v.condition;
    j["query_a"] = raw_choice_str(v.query_a);
    j["query_b"] = raw_choice_str(v.query_b);
    switch (v.outcome) {
        case Preferred::First:
        case Preferred::Second:
            j["outcome"] = "prefers";
            j["preferred_answer_id"] = v.preferred_answer_id.value_or("");
            break;
        case Preferred::Ambiguous:
            j["outcome"] = "ambiguous";
            break;
    }
    if (v.correct) j["correct"] = *v.correct;
    if (!v.cause.empty()) j["cause"] = v.cause;
    return j;
}

JudgeVerdict verdict_from_json(const ordered_json& j) {
    JudgeVerdict v;
    v.judge_model = j.at("judge_model").get<std::string>();
    v.task_id = j.at("task_id").get<std::string>();
    v.first_answer_id = j.at("first_answer_id").get<std::string>();
    v.second_answer_id = j.at("second_answer_id").get<std::string>();
    v.condition = j.at("condition").get<std::string>();
    v.query_a = raw_choice_parse(j.at("query_a").get<std::string>());
    v.query_b = raw_choice_parse(j.at("query_b").get<std::string>());
    if (j.at("outcome").get<std::string>() == "prefers") {
        const std::string pid = j.at("preferred_answer_id").get<std::string>();
        v.preferred_answer_id = pid;
        v.outcome = (pid == v.first_answer_id) ? Preferred::First : Preferred::Second;
    } else {
        v.outcome = Preferred::Ambiguous;
    }
    if (j.contains("correct")) v.correct = j["correct"].get<bool>();
    if (j.contains("cause")) v.cause = j["cause"].get<std::string>();
    return v;
}

ordered_json recognition_to_json(const RecognitionVerdict& v) {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["judge_model"] = v.judge_model;
    j["task_id"] = v.task_id;
    j["first_answer_id"] = v.first_answer_id;
    j["second_answer_id"] = v.second_answer_id;
    j["condition"] = v.condition;
    j["query_a"] = raw_choice_str(v.query_a);
    j["query_b"] = raw_choice_str(v.query_b);
    if (v.picked_answer_id) {
        j["picked"] = *v.picked_answer_id;
    } else {
        j["picked"] = nullptr;
    }
    if (v.is_correct) j["is_correct"] = *v.is_correct;
    if (!v.cause.empty()) j["cause"] = v.cause;
    return j;
}

RecognitionVerdict recognition_from_json(const ordered_json& j) {
    RecognitionVerdict v;
    v.judge_model = j.at("judge_model").get<std::string>();
    v.task_id = j.at("task_id").get<std::string>();
    v.first_answer_id = j.at("first_answer_id").get<std::string>();
    v.second_answer_id = j.at("second_answer_id").get<std::string>();
    v.condition = j.at("condition").get<std::string>();
    v.query_a = raw_choice_parse(j.at("query_a").get<std::string>());
    v.query_b = raw_choice_parse(j.at("query_b").get<std::string>());
    if (!j.at("picked").is_null()) v.picked_answer_id = j["picked"].get<std::string>();
    if (j.contains("is_correct")) v.is_correct = j["is_correct"].get<bool>();
    if (j.contains("cause")) v.cause = j["cause"].get<std::string>();
    return v;
}

ordered_json task_to_json(const QuestionTask& t) {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["task_id"] = t.task_id;
    j["kind"] = task_kind_name(t.kind);
    j["question"] = t.question;
    if (t.kind == TaskKind::MultipleChoice) {
        j["passage"] = t.passage;
        ordered_json opts = ordered_json::array();
        for (const auto& o : t.options) opts.push_back(o.text);
        j["options"] = opts;
        j["gold_label"] = t.groundtruth_label;
    } else {
        ordered_json tests = ordered_json::array();
        for (const auto& tc : t.test_cases) {
            ordered_json tj;
            tj["call"] = tc.call;
            tj["expected"] = tc.expected;
            tests.push_back(tj);
        }
        j["tests"] = tests;
    }
    return j;
}

QuestionTask task_from_json(const ordered_json& j) {
    QuestionTask t;
    t.task_id = j.at("task_id").get<std::string>();
    t.kind = task_kind_from(j.at("kind").get<std::string>());
    t.question = j.at("question").get<std::string>();
    if (t.kind == TaskKind::MultipleChoice) {
        t.passage = j.at("passage").get<std::string>();
        int i = 0;
        for (const auto& o : j.at("options")) {
            t.options.push_back({std::string(1, static_cast<char>('A' + i)), o.get<std::string>()});
            i++;
        }
        t.groundtruth_label = j.at("gold_label").get<std::string>();
    } else {
        for (const auto& tc : j.at("tests")) {
            t.test_cases.push_back({tc.at("call").get<std::string>(),
                                    tc.value("expected", std::string())});
        }
    }
    t.validate();
    return t;
}

std::vector<ordered_json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Err::MissingStage, "cannot open " + path.string());
    std::vector<ordered_json> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        try {
            out.push_back(ordered_json::parse(trimmed));
        } catch (const std::exception& e) {
            fail(Err::SchemaError,
                 path.string() + ":" + std::to_string(lineno) + " bad JSON: " + e.what());
        }
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<ordered_json>& records) {
    std::string buf;
    for (const auto& r : records) {
        buf += r.dump();
        buf += '\n';
    }
    write_file(path, buf);
}

void append_jsonl(const std::filesystem::path& path, const ordered_json& record) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to " + path.string());
    out << record.dump() << '\n';
}

}  // namespace judgeaudit
