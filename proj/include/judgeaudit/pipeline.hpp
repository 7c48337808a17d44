#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "judgeaudit/core.hpp"
#include "judgeaudit/perturb.hpp"
#include "judgeaudit/prompts.hpp"
#include "judgeaudit/providers.hpp"
#include "judgeaudit/sandbox.hpp"

namespace judgeaudit {

// Conditions a run can judge under. "original" is always present.
inline const char* kCondOriginal = "original";
inline const char* kCondSynonym = "synonym";
inline const char* kCondParaphrase = "paraphrase";
inline const char* kCondCrossReason = "cross_reason";
inline const char* kCondRestyle = "restyle";
// plugin conditions are addressed as "plugin:<name>"

struct RunPlan {
    std::string corpus_id;
    std::vector<QuestionTask> tasks;
    std::vector<std::string> generators;
    std::vector<std::string> judges;
    std::string helper_model;       // synonym planning, never a judge
    std::string restyler_model;     // code restyling, never a judge
    std::string quality_proxy;      // original-vs-perturbed quality control
    std::vector<std::string> conditions;  // perturbation conditions to run
    int synonym_k = 2;
    bool recognize_harmful_only = false;  // probe only pairs the judge got wrong
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;
    int stage_workers = 8;

    void validate() const;  // throws ConfigError on role conflicts
};

// Bundle files under a run's output directory.
struct BundlePaths {
    std::filesystem::path dir;
    std::filesystem::path answers() const { return dir / "answers.jsonl"; }
    std::filesystem::path pairs() const { return dir / "pairs.jsonl"; }
    std::filesystem::path verdicts() const { return dir / "verdicts.jsonl"; }
    std::filesystem::path recognitions() const { return dir / "recognitions.jsonl"; }
    std::filesystem::path equivalence() const { return dir / "equivalence.jsonl"; }
    std::filesystem::path quality() const { return dir / "quality.jsonl"; }
    std::filesystem::path manifest() const { return dir / "manifest.json"; }
};

std::vector<ModelAnswer> load_answers_file(const std::filesystem::path& path);
std::vector<PairRecord> load_pairs_file(const std::filesystem::path& path);
std::vector<JudgeVerdict> load_verdicts_file(const std::filesystem::path& path);
std::vector<RecognitionVerdict> load_recognitions_file(const std::filesystem::path& path);

// --- stage operations ---

struct GenerationFailure {
    std::string task_id;
    std::string model;
    std::string reason;
};

// One answer per task via complete + extraction; failures are recorded and
// the task skipped for that model, never aborting the batch.
std::vector<ModelAnswer> generate_answers(const std::vector<QuestionTask>& tasks,
                                          const std::string& model, ProviderHub& hub,
                                          const PromptSet& prompts, int workers,
                                          std::vector<GenerationFailure>* failures = nullptr);

// Pairs for tasks both models answered where exactly one answer is correct;
// side order randomized by the run seed. Code correctness runs in the sandbox
// (results memoized per answer id in `correctness_cache`).
std::vector<AnswerPair> build_pairs(const std::vector<QuestionTask>& tasks,
                                    const std::vector<ModelAnswer>& answers_x,
                                    const std::vector<ModelAnswer>& answers_y,
                                    std::uint64_t seed, const Sandbox* sandbox = nullptr,
                                    std::map<std::string, bool>* correctness_cache = nullptr);

bool answer_is_correct(const QuestionTask& task, const ModelAnswer& answer,
                       const Sandbox* sandbox = nullptr,
                       std::map<std::string, bool>* cache = nullptr);

// Two order-swapped queries resolved into one verdict. Provider errors mark
// the verdict Ambiguous with the cause recorded.
JudgeVerdict judge_pair(const std::string& judge, const QuestionTask& task, const AnswerPair& pair,
                        ProviderHub& hub, const PromptSet& prompts);

// Authorship probe issued in a fresh context with the same swap rule.
// Precondition: the judge authored exactly one side.
RecognitionVerdict probe_recognition(const std::string& judge, const QuestionTask& task,
                                     const AnswerPair& pair, ProviderHub& hub,
                                     const PromptSet& prompts);

// --- full audit ---

struct StageMask {
    bool generate = true;
    bool pair = true;
    bool perturb = true;
    bool judge = true;
    bool recognize = true;

    static StageMask all() { return {}; }
    static StageMask only(const std::string& stage);
};

struct AuditOptions {
    ProviderHub* hub = nullptr;
    const PromptSet* prompts = nullptr;
    const Sandbox* sandbox = nullptr;
    ObfuscatorRegistry* registry = nullptr;
    StageMask stages = StageMask::all();
};

struct AuditSummary {
    std::size_t answers = 0;
    std::size_t pairs = 0;
    std::size_t verdicts = 0;
    std::size_t recognitions = 0;
    std::size_t generation_failures = 0;
    std::size_t perturb_exclusions = 0;
    std::size_t restyle_discards = 0;
    std::size_t restyle_attempts = 0;
};

// Runs generate -> perturb -> pair -> judge -> recognize with record-level
// resume: anything already persisted in the bundle is not recomputed.
AuditSummary run_audit(const RunPlan& plan, const AuditOptions& opts);

// Builds the variant of a base pair judged under `condition` for `judge`:
// the judge's side is swapped for its perturbed version in self-evaluation,
// the first side in third-party evaluation. nullopt when the variant is
// unavailable (perturbation excluded or condition not applicable).
std::optional<AnswerPair> condition_pair(
    const AnswerPair& base, const std::string& judge, const std::string& condition,
    const std::map<std::string, std::map<std::string, ModelAnswer>>& variants_by_parent);

// variants_by_parent: parent answer id -> (condition[:perturber] -> variant).
std::map<std::string, std::map<std::string, ModelAnswer>> index_variants(
    const std::vector<ModelAnswer>& answers);

std::string condition_variant_key(const std::string& condition, const std::string& perturber);

}  // namespace judgeaudit
