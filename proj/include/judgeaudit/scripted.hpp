#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "judgeaudit/core.hpp"
#include "judgeaudit/providers.hpp"

namespace judgeaudit {

// Deterministic stand-in for a hosted model. Every response is a pure
// function of (params, prompt), so runs replay bit-identically and the two
// order-swapped judge queries always agree in normal mode.
//
// Judging and recognition both score each candidate with the same two-factor
// rule plus content-keyed noise:
//
//   score = style_weight  * style_cue
//         + belief_weight * [candidate label == own label for this question]
//         + noise_scale   * u(question, label)   // stable under text edits
//         + text_noise    * u(candidate text)    // redrawn by any text edit
//
// style_cue is 1 on the single candidate carrying this model's marker token.
// When both candidates carry the marker the style channel can no longer
// separate them and it collapses onto agreement ("that one says what I would
// say, so it must be mine"); when neither does, it contributes nothing.
struct ScriptedModelParams {
    std::string model;
    std::string marker;             // style-marker token woven into generated text
    double style_weight = 0.7;
    double belief_weight = 0.3;
    double competence = 0.6;        // P(own label = groundtruth) given an answer key
    double noise_scale = 0.7;
    double text_noise = 0.02;
    std::uint64_t seed = 1;
    bool always_first = false;      // order-biased mode: replies "1" to any pairwise query
};

std::string default_marker(const std::string& model);

class ScriptedProvider : public Backend {
  public:
    ScriptedProvider() = default;

    void add_model(ScriptedModelParams params);
    bool serves(const std::string& model) const { return params_.count(model) > 0; }
    const ScriptedModelParams& params(const std::string& model) const;
    std::vector<std::string> models() const;

    // Groundtruth key: lets the mock answer with configured competence and
    // hold per-task canned code solutions.
    void set_answer_key(const std::vector<QuestionTask>& tasks);
    void set_code_solutions(const std::string& question, std::string good, std::string bad);

    // Exact-response overlay for tests: first needle contained in the prompt wins.
    void add_canned(std::string needle, std::string response);

    std::string complete_raw(const ChatRequest& req) override;

    // The label this model stands by for a question (its generated choice and
    // its belief while judging). Exposed so tests and fixtures can align.
    std::string belief_label(const std::string& model, const std::string& question) const;

    // Deterministic generation phrasings (variant 0 = generation, 1 =
    // paraphrase, 2 = cross-reason justification).
    static std::string scripted_reasoning(const ScriptedModelParams& p, const std::string& label,
                                          int variant);

  private:
    struct TaskFacts {
        std::string gold_label;
        std::vector<std::string> labels;
        TaskKind kind = TaskKind::MultipleChoice;
        std::string code_good;
        std::string code_bad;
    };

    const TaskFacts* facts_for(const std::string& question) const;
    std::string handle_generate_qa(const ScriptedModelParams& p, const std::string& prompt) const;
    std::string handle_generate_code(const ScriptedModelParams& p, const std::string& prompt) const;
    std::string handle_pairwise(const ScriptedModelParams& p, const std::string& prompt,
                                bool recognition) const;
    std::string handle_synonym(const ScriptedModelParams& p, const std::string& prompt) const;
    std::string handle_paraphrase(const ScriptedModelParams& p, const std::string& prompt) const;
    std::string handle_cross_reason(const ScriptedModelParams& p, const std::string& prompt) const;
    std::string handle_restyle(const ScriptedModelParams& p, const std::string& prompt) const;
    std::string handle_quality(const ScriptedModelParams& p, const std::string& prompt) const;

    double candidate_score(const ScriptedModelParams& p, const std::string& question,
                           const std::string& own_label, const std::string& label,
                           const std::string& text, bool marker_here, bool marker_other) const;

    std::map<std::string, ScriptedModelParams> params_;
    std::unordered_map<std::string, TaskFacts> facts_;  // keyed by question hash
    std::vector<std::pair<std::string, std::string>> canned_;
};

}  // namespace judgeaudit
