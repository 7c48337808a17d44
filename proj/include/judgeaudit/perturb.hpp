#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "judgeaudit/core.hpp"
#include "judgeaudit/prompts.hpp"
#include "judgeaudit/providers.hpp"
#include "judgeaudit/sandbox.hpp"

namespace judgeaudit {

// --- synonym replacement ---

struct SynonymPlan {
    std::vector<std::string> selected_words;
    std::vector<std::string> replacements;
    int k = 2;
};

// Enforces the plan invariants: lengths equal k, every selected word occurs in
// the reasoning, no stop words, and neither selected words nor replacements
// appear in the question (case-insensitive, token-level).
void validate_plan(const SynonymPlan& plan, const std::string& question,
                   const std::string& reasoning);

// Asks the helper model for k replacement candidates; re-queries up to twice
// on invalid plans. Throws NoCandidates / HelperMalformed.
SynonymPlan plan_synonyms(const std::string& question, const std::string& reasoning,
                          Provider& helper, const std::string& helper_model,
                          const PromptSet& prompts, int k = 2);

// Replaces the first occurrence of each selected word, preserving the casing
// of the original token's initial letter; all other bytes unchanged.
std::string apply_synonyms(const std::string& reasoning, const SynonymPlan& plan);

ModelAnswer synonym_replace_answer(const QuestionTask& task, const ModelAnswer& parent,
                                   Provider& helper, const std::string& helper_model,
                                   const PromptSet& prompts, int k = 2);

// --- judge paraphrasing ---

// The judge rewrites the competitor's reasoning in its own words; the label
// never changes. Throws ParaphraseChangedLabel when the output contradicts it.
ModelAnswer judge_paraphrase(const QuestionTask& task, const ModelAnswer& competitor,
                             Provider& judge_provider, const std::string& judge_model,
                             const PromptSet& prompts);

// --- cross reasoning ---

// Recombines a self-evaluation pair: each side keeps its label but carries a
// reasoning generated by the other model. Throws GenerationRefused.
AnswerPair cross_reason(const QuestionTask& task, const AnswerPair& pair,
                        const std::string& judge_model, ProviderHub& hub,
                        const PromptSet& prompts);

// --- code restyling ---

struct TestTranscript {
    std::string call;
    int original_exit = 0;
    int restyled_exit = 0;
    std::string original_out;
    std::string restyled_out;
    bool matched = false;
};

struct EquivalenceReport {
    int total_tests = 0;
    int matched = 0;
    int mismatched = 0;
    bool equivalent = false;  // verdict: Equivalent iff mismatched == 0
    std::vector<TestTranscript> transcripts;

    ordered_json to_json() const;
};

// Runs every test invocation against both programs in sandboxed subprocesses
// and compares captured outputs exactly. Timeouts count as mismatches.
EquivalenceReport verify_equivalence(const std::string& original, const std::string& restyled,
                                     const std::vector<TestCase>& tests, const Sandbox& sandbox);

// Restyles code via the restyler model, preserving comments verbatim.
// Throws RestyleMalformed / CommentLost; the caller runs verify_equivalence
// and discards non-equivalent restyles.
ModelAnswer restyle_code(const ModelAnswer& parent, Provider& restyler_provider,
                         const std::string& restyler_model, const PromptSet& prompts,
                         const Sandbox& sandbox);

// --- plugin obfuscators ---

using ObfuscatorFn = std::function<ModelAnswer(const QuestionTask&, const ModelAnswer&)>;

class ObfuscatorRegistry {
  public:
    // Rejects duplicate names and transforms that break the contract (task_id
    // or label changed) on a synthetic probe.
    void register_obfuscator(const std::string& name, ObfuscatorFn fn);
    bool has(const std::string& name) const { return fns_.count(name) > 0; }
    ModelAnswer apply(const std::string& name, const QuestionTask& task,
                      const ModelAnswer& parent) const;
    std::vector<std::string> names() const;

    // Built-in "spelling-error" plugin: one character edit in each of j words
    // that are neither stop words nor present in the question.
    static ObfuscatorFn spelling_error_plugin(std::uint64_t seed, int words = 2);

  private:
    std::map<std::string, ObfuscatorFn> fns_;
};

}  // namespace judgeaudit
