#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "judgeaudit/errors.hpp"

#include <nlohmann/json.hpp>

namespace judgeaudit {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kRecordSchemaVersion = 1;

enum class TaskKind { MultipleChoice, Code };

std::string task_kind_name(TaskKind k);
TaskKind task_kind_from(const std::string& s);

struct TestCase {
    std::string call;      // python expression/statement run against the solution
    std::string expected;  // expected printed value; empty = pass/fail assertion mode
};

struct OptionEntry {
    std::string label;  // "A".."D"
    std::string text;
};

struct QuestionTask {
    std::string task_id;
    TaskKind kind = TaskKind::MultipleChoice;
    std::string passage;                // QA only
    std::string question;
    std::vector<OptionEntry> options;   // QA only
    std::string groundtruth_label;      // QA only
    std::vector<TestCase> test_cases;   // Code only

    std::vector<std::string> option_labels() const;
    const std::string* option_text(const std::string& label) const;
    void validate() const;  // throws SchemaError on invariant violations
};

enum class Lineage { Original, SynonymReplaced, JudgeParaphrased, CrossReason, Restyled, PluginPerturbed };

std::string lineage_name(const Lineage l, const std::string& plugin = "");
std::pair<Lineage, std::string> lineage_from(const std::string& s);

struct ModelAnswer {
    std::string task_id;
    std::string author_model;
    TaskKind kind = TaskKind::MultipleChoice;
    std::string label_choice;       // QA only
    std::string reasoning;          // QA only
    std::string code_solution;      // Code only
    Lineage lineage = Lineage::Original;
    std::string plugin_name;        // set when lineage == PluginPerturbed
    std::string parent_answer_id;   // set iff lineage != Original
    std::string perturber_model;    // model that produced the perturbation, if any
    std::string answer_id;          // content hash, see compute_answer_id

    const std::string& content() const { return kind == TaskKind::Code ? code_solution : reasoning; }
    std::string& content() { return kind == TaskKind::Code ? code_solution : reasoning; }
    void validate() const;
};

// Deterministic content id: hash of (task_id, author_model, label, content,
// lineage) with line endings normalized so ids agree across platforms.
std::string compute_answer_id(const ModelAnswer& ans);

// Fills answer_id (and checks invariants).
ModelAnswer finalize_answer(ModelAnswer ans);

struct AnswerPair {
    std::string task_id;
    ModelAnswer first;
    ModelAnswer second;
    bool first_correct = false;
    bool second_correct = false;
    std::string condition = "original";

    bool comparable() const { return first_correct == second_correct; }
    // Stable identity of the underlying comparison across conditions: the two
    // author models, order-independent.
    std::string base_key() const;
    std::string variant_key() const;  // task + the two concrete answer ids
    void validate() const;
};

enum class Quadrant { Harmful, Legitimate, ThirdParty };

std::string quadrant_name(Quadrant q);

// Harmful iff the judge authored the incorrect side, Legitimate iff it
// authored the correct side, ThirdParty iff it authored neither.
// Throws ComparablePair / AuthorBothSides.
Quadrant classify_quadrant(const AnswerPair& pair, const std::string& judge_model);

enum class RawChoice { First, Second };

enum class Preferred { First, Second, Ambiguous };

// Combines the two order-swapped raw choices. query_a saw (first, second),
// query_b saw (second, first); only opposite position picks are consistent.
Preferred resolve_verdict(RawChoice query_a, RawChoice query_b);

struct JudgeVerdict {
    std::string judge_model;
    std::string task_id;
    std::string first_answer_id;
    std::string second_answer_id;
    std::string condition = "original";
    std::optional<RawChoice> query_a;   // nullopt = unparseable or provider error
    std::optional<RawChoice> query_b;
    Preferred outcome = Preferred::Ambiguous;
    std::optional<std::string> preferred_answer_id;
    std::optional<bool> correct;        // defined only when exactly one side is correct
    std::string cause;                  // ambiguity / failure note
};

struct RecognitionVerdict {
    std::string judge_model;
    std::string task_id;
    std::string first_answer_id;
    std::string second_answer_id;
    std::string condition = "original";
    std::optional<RawChoice> query_a;
    std::optional<RawChoice> query_b;
    std::optional<std::string> picked_answer_id;  // nullopt = ambiguous
    std::optional<bool> is_correct;               // picked side authored by judge
    std::string cause;
};

enum class StatTest { PearsonR, ChiSquare, PairedT, Binomial };

std::string stat_test_name(StatTest t);

struct StatResult {
    StatTest test = StatTest::PearsonR;
    double statistic = 0.0;
    std::optional<int> df;
    double p_value = 1.0;
    std::optional<std::pair<double, double>> ci95;
    int n = 0;
};

// --- canonical JSONL record schemas (schema version field "v") ---

ordered_json answer_to_json(const ModelAnswer& a);
ModelAnswer answer_from_json(const ordered_json& j);

ordered_json pair_to_json(const AnswerPair& p);  // reference form: answer ids + correctness
struct PairRecord {
    std::string task_id;
    std::string first_answer_id;
    std::string second_answer_id;
    std::string first_author;
    std::string second_author;
    bool first_correct = false;
    bool second_correct = false;
    std::string condition;
};
PairRecord pair_record_from_json(const ordered_json& j);

ordered_json verdict_to_json(const JudgeVerdict& v);
JudgeVerdict verdict_from_json(const ordered_json& j);

ordered_json recognition_to_json(const RecognitionVerdict& v);
RecognitionVerdict recognition_from_json(const ordered_json& j);

ordered_json task_to_json(const QuestionTask& t);
QuestionTask task_from_json(const ordered_json& j);

// JSONL helpers: one object per line, UTF-8.
std::vector<ordered_json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<ordered_json>& records);
void append_jsonl(const std::filesystem::path& path, const ordered_json& record);

}  // namespace judgeaudit
