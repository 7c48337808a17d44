#pragma once

#include <map>
#include <string>

#include "judgeaudit/core.hpp"

namespace judgeaudit {

// Role-indexed prompt templates. Placeholders use {name}; literal braces are
// written {{ and }}. Overridable per role from files; hashes go into run
// manifests so a bundle pins the exact prompts it was produced with.
struct PromptSet {
    std::string generator_qa;
    std::string generator_code;
    std::string evaluator;
    std::string recognizer;
    std::string synonym;
    std::string paraphrase;
    std::string cross_reason;
    std::string restyle;
    std::string quality;

    static PromptSet builtin();
    std::map<std::string, std::string> hashes() const;
    const std::string& by_role(const std::string& role) const;
    void set_role(const std::string& role, std::string text);
};

std::string render_template(const std::string& tpl,
                            const std::map<std::string, std::string>& values);

// Answer as presented to judges: label + reasoning for QA, raw code otherwise.
std::string candidate_block(const ModelAnswer& answer);

// Question plus its lettered options, as generators see it.
std::string question_block(const QuestionTask& task);

std::string number_word(int n);  // 2 -> "two"; falls back to digits

}  // namespace judgeaudit
