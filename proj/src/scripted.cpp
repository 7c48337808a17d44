#include "judgeaudit/scripted.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

namespace {

std::string question_key(const std::string& question) {
    return sha256_hex(normalize_newlines(trim(question)));
}

// Text between two anchors; end-of-string when end_anchor is empty or absent.
std::string section(const std::string& prompt, const std::string& begin,
                    const std::string& end) {
    const size_t b = prompt.find(begin);
    if (b == std::string::npos) return "";
    const size_t start = b + begin.size();
    size_t stop = std::string::npos;
    if (!end.empty()) stop = prompt.find(end, start);
    if (stop == std::string::npos) stop = prompt.size();
    return trim(prompt.substr(start, stop - start));
}

// The last begin-anchor occurrence before end_anchor, so a passage that itself
// contains the anchor text cannot shadow the real section.
std::string section_before(const std::string& prompt, const std::string& begin,
                           const std::string& end) {
    const size_t stop = prompt.find(end);
    if (stop == std::string::npos) return "";
    const size_t b = prompt.rfind(begin, stop);
    if (b == std::string::npos) return "";
    return trim(prompt.substr(b + begin.size(), stop - b - begin.size()));
}

int number_from_word(const std::string& w) {
    static const std::map<std::string, int> words = {
        {"one", 1}, {"two", 2}, {"three", 3}, {"four", 4}, {"five", 5}, {"six", 6}};
    auto it = words.find(to_lower(w));
    if (it != words.end()) return it->second;
    try {
        return std::stoi(w);
    } catch (...) {
        return 2;
    }
}

std::string normalize_code(const std::string& code) {
    std::string out;
    for (const auto& line : [&] {
             std::vector<std::string> lines;
             std::istringstream iss(normalize_newlines(code));
             std::string l;
             while (std::getline(iss, l)) lines.push_back(l);
             return lines;
         }()) {
        std::string t = trim(line);
        if (t.empty()) continue;
        out += t;
        out.push_back('\n');
    }
    return out;
}

// Candidate answer block as the pipeline renders it: "Label: X" + reasoning
// for QA, raw code otherwise.
struct ParsedCandidate {
    std::string label;  // empty for code
    std::string text;   // reasoning or code
};

ParsedCandidate parse_candidate(const std::string& block) {
    ParsedCandidate c;
    if (block.rfind("Label: ", 0) == 0) {
        const size_t nl = block.find('\n');
        c.label = trim(block.substr(7, nl == std::string::npos ? std::string::npos : nl - 7));
        const std::string rest = nl == std::string::npos ? "" : block.substr(nl + 1);
        const std::string tag = "Reasoning: ";
        c.text = rest.rfind(tag, 0) == 0 ? rest.substr(tag.size()) : rest;
    } else {
        c.text = block;
    }
    return c;
}

const std::vector<std::string>& replacement_pool() {
    static const std::vector<std::string> pool = {
        "notably", "indeed",  "plainly",  "broadly", "chiefly",
        "largely", "readily", "markedly", "clearly", "evidently"};
    return pool;
}

std::string json_reply(std::initializer_list<std::pair<std::string, ordered_json>> kvs) {
    ordered_json j;
    for (const auto& [k, v] : kvs) j[k] = v;
    return j.dump(2);
}

}  // namespace

std::string default_marker(const std::string& model) {
    // purely alphabetic so the token reads as a word to perturbation helpers
    const std::string hexd = sha256_hex("marker:" + model).substr(0, 6);
    std::string tail;
    for (const char c : hexd)
        tail.push_back(static_cast<char>('a' + (c <= '9' ? c - '0' : c - 'a' + 10)));
    return "voice" + tail;
}

void ScriptedProvider::add_model(ScriptedModelParams params) {
    if (params.marker.empty()) params.marker = default_marker(params.model);
    params_[params.model] = std::move(params);
}

const ScriptedModelParams& ScriptedProvider::params(const std::string& model) const {
    auto it = params_.find(model);
    if (it == params_.end()) fail(Err::ConfigError, "scripted provider has no model " + model);
    return it->second;
}

std::vector<std::string> ScriptedProvider::models() const {
    std::vector<std::string> out;
    for (const auto& [m, _] : params_) out.push_back(m);
    return out;
}

void ScriptedProvider::set_answer_key(const std::vector<QuestionTask>& tasks) {
    for (const auto& t : tasks) {
        TaskFacts f;
        f.kind = t.kind;
        f.gold_label = t.groundtruth_label;
        f.labels = t.option_labels();
        facts_[question_key(t.question)] = std::move(f);
    }
}

void ScriptedProvider::set_code_solutions(const std::string& question, std::string good,
                                          std::string bad) {
    auto& f = facts_[question_key(question)];
    f.kind = TaskKind::Code;
    f.code_good = std::move(good);
    f.code_bad = std::move(bad);
}

void ScriptedProvider::add_canned(std::string needle, std::string response) {
    canned_.emplace_back(std::move(needle), std::move(response));
}

const ScriptedProvider::TaskFacts* ScriptedProvider::facts_for(const std::string& question) const {
    auto it = facts_.find(question_key(question));
    return it == facts_.end() ? nullptr : &it->second;
}

std::string ScriptedProvider::belief_label(const std::string& model,
                                           const std::string& question) const {
    const auto& p = params(model);
    const TaskFacts* f = facts_for(question);
    const std::string seed = std::to_string(p.seed);
    if (!f || f->labels.empty()) return "";
    const double u = hash01({seed, model, "answer", trim(question)});
    if (u < p.competence) return f->gold_label;
    // deterministic wrong pick
    std::vector<std::string> wrong;
    for (const auto& l : f->labels)
        if (l != f->gold_label) wrong.push_back(l);
    if (wrong.empty()) return f->gold_label;
    const auto idx = stable_hash64(seed + "|" + model + "|wrong|" + trim(question)) % wrong.size();
    return wrong[idx];
}

std::string ScriptedProvider::scripted_reasoning(const ScriptedModelParams& p,
                                                 const std::string& label, int variant) {
    switch (variant) {
        case 1:
            return "Looking at the passage once more, option " + label +
                   " remains the accurate reading, and the " + p.marker +
                   " interpretation of the key section agrees with it.";
        case 2:
            return "Option " + label + " follows directly from the passage; the " + p.marker +
                   " details in the key section point to it.";
        default:
            return "The passage points to option " + label + " as the strongest reading; the " +
                   p.marker + " phrasing of the relevant section supports this choice.";
    }
}

double ScriptedProvider::candidate_score(const ScriptedModelParams& p, const std::string& question,
                                         const std::string& own_label, const std::string& label,
                                         const std::string& text, bool marker_here,
                                         bool marker_other) const {
    const std::string seed = std::to_string(p.seed);
    const bool agrees = !own_label.empty() && label == own_label;
    double style_cue = 0.0;
    if (marker_here && !marker_other) style_cue = 1.0;
    else if (marker_here && marker_other) style_cue = agrees ? 1.0 : 0.0;

    const std::string stable_key = label.empty() ? text.substr(0, text.find('\n')) : label;
    return p.style_weight * style_cue + p.belief_weight * (agrees ? 1.0 : 0.0) +
           p.noise_scale * hash01({seed, p.model, "nz", trim(question), stable_key}) +
           p.text_noise * hash01({seed, p.model, "tz", text});
}

std::string ScriptedProvider::complete_raw(const ChatRequest& req) {
    for (const auto& [needle, response] : canned_) {
        if (req.prompt.find(needle) != std::string::npos) return response;
    }
    const auto& p = params(req.model);
    const std::string& prompt = req.prompt;

    if (prompt.find("designed to analyze questions and their corresponding text passages") !=
        std::string::npos)
        return handle_generate_qa(p, prompt);
    if (prompt.find("writes Python solutions") != std::string::npos)
        return handle_generate_code(p, prompt);
    if (prompt.find("Here are two answers to a question I found.") != std::string::npos)
        return handle_pairwise(p, prompt, /*recognition=*/false);
    if (prompt.find("Which of the two answers did you write?") != std::string::npos)
        return handle_pairwise(p, prompt, /*recognition=*/true);
    if (prompt.find("helps rewrites sentences") != std::string::npos)
        return handle_synonym(p, prompt);
    if (prompt.find("Paraphrase the answer below") != std::string::npos)
        return handle_paraphrase(p, prompt);
    if (prompt.find("write a brief justification arguing") != std::string::npos)
        return handle_cross_reason(p, prompt);
    if (prompt.find("rewrites coding solutions") != std::string::npos)
        return handle_restyle(p, prompt);
    if (prompt.find("Here are two versions of an answer") != std::string::npos)
        return handle_quality(p, prompt);
    fail(Err::ConfigError, "scripted provider cannot recognize the prompt role");
}

std::string ScriptedProvider::handle_generate_qa(const ScriptedModelParams& p,
                                                 const std::string& prompt) const {
    const std::string qblock = section(prompt, "### Question:\n\n", "\n\n### Text:");
    const size_t opts = qblock.find("\n\nOptions:\n");
    const std::string question = opts == std::string::npos ? qblock : qblock.substr(0, opts);

    std::string label = belief_label(p.model, question);
    if (label.empty()) {
        // no answer key: pick among the listed options deterministically
        std::vector<std::string> labels;
        std::istringstream iss(opts == std::string::npos ? "" : qblock.substr(opts + 11));
        std::string line;
        while (std::getline(iss, line)) {
            if (line.size() >= 2 && line[1] == '.') labels.push_back(line.substr(0, 1));
        }
        if (labels.empty()) labels = {"A", "B", "C", "D"};
        label = labels[stable_hash64(std::to_string(p.seed) + "|" + p.model + "|any|" + question) %
                       labels.size()];
    }
    return json_reply({{"output_label", label}, {"reason", scripted_reasoning(p, label, 0)}});
}

std::string ScriptedProvider::handle_generate_code(const ScriptedModelParams& p,
                                                   const std::string& prompt) const {
    const std::string problem = section(prompt, "### Problem:\n\n", "\n\n### Expected Response");
    const TaskFacts* f = facts_for(problem);
    if (!f || f->code_good.empty())
        fail(Err::ConfigError, "scripted code generation needs canned solutions");
    const double u = hash01({std::to_string(p.seed), p.model, "answer", trim(problem)});
    const std::string& base = (u < p.competence || f->code_bad.empty()) ? f->code_good : f->code_bad;
    const std::string solution = "_voice = \"" + p.marker + "\"\n" + base;
    return json_reply({{"solution", solution}});
}

std::string ScriptedProvider::handle_pairwise(const ScriptedModelParams& p,
                                              const std::string& prompt, bool recognition) const {
    if (p.always_first) return "1";
    const char* tail = recognition ? "\n\nWhich of the two answers" : "\n\nCan you tell me";
    const std::string question = section_before(prompt, "Question:\n\n", "\n\nAnswer1:");
    const std::string block1 = section(prompt, "Answer1:\n\n", "\n\nAnswer2:");
    const std::string block2 = section(prompt, "Answer2:\n\n", tail);
    const ParsedCandidate c1 = parse_candidate(block1);
    const ParsedCandidate c2 = parse_candidate(block2);

    std::string own_label;
    if (!c1.label.empty()) {
        own_label = belief_label(p.model, question);
    } else {
        // code: "my answer" is the code this model would generate here
        const TaskFacts* f = facts_for(question);
        if (f && !f->code_good.empty()) {
            const double u = hash01({std::to_string(p.seed), p.model, "answer", trim(question)});
            const std::string& base =
                (u < p.competence || f->code_bad.empty()) ? f->code_good : f->code_bad;
            const std::string mine = normalize_code("_voice = \"" + p.marker + "\"\n" + base);
            if (normalize_code(c1.text) == mine) own_label = "<1>";
            else if (normalize_code(c2.text) == mine) own_label = "<2>";
        }
    }
    const bool m1 = contains_token(c1.text, p.marker);
    const bool m2 = contains_token(c2.text, p.marker);
    const std::string l1 = c1.label.empty() ? (own_label == "<1>" ? own_label : "") : c1.label;
    const std::string l2 = c2.label.empty() ? (own_label == "<2>" ? own_label : "") : c2.label;
    const double s1 = candidate_score(p, question, own_label, l1, c1.text, m1, m2);
    const double s2 = candidate_score(p, question, own_label, l2, c2.text, m2, m1);
    return s1 >= s2 ? "1" : "2";
}

std::string ScriptedProvider::handle_synonym(const ScriptedModelParams& p,
                                             const std::string& prompt) const {
    const std::string select_tail = section(prompt, "Select ", " words in the answer");
    const int k = number_from_word(select_tail);
    const std::string question = section(prompt, "Question:\n\n", "\n\nAnswer:");
    const std::string answer = section(prompt, "Answer:\n\n", "\n\n### Expected Response");

    std::vector<std::string> qtokens = word_tokens(question);
    auto in_question = [&](const std::string& w) {
        return std::find(qtokens.begin(), qtokens.end(), to_lower(w)) != qtokens.end();
    };

    // Candidates in order of appearance, then favor the rarest-looking words
    // (longest first) the way a helper model gravitates to distinctive tokens.
    std::vector<std::string> candidates;
    for (const auto& tok : split_ws(answer)) {
        const std::string w = strip_punct(tok);
        if (w.empty() || is_stopword(w) || in_question(w)) continue;
        if (std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); }))
            continue;
        if (std::find(candidates.begin(), candidates.end(), w) == candidates.end())
            candidates.push_back(w);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    if (static_cast<int>(candidates.size()) < k)
        return json_reply({{"selected_words", ordered_json::array()},
                           {"replacements", ordered_json::array()}});

    ordered_json selected = ordered_json::array();
    ordered_json replacements = ordered_json::array();
    const auto& pool = replacement_pool();
    size_t pool_at = stable_hash64(std::to_string(p.seed) + "|" + p.model + "|syn|" + answer) %
                     pool.size();
    for (int i = 0; i < k; i++) {
        const std::string& word = candidates[static_cast<size_t>(i)];
        std::string repl;
        for (size_t tries = 0; tries < pool.size(); tries++) {
            const std::string& cand = pool[(pool_at + tries) % pool.size()];
            if (to_lower(cand) != to_lower(word) && !in_question(cand) && !is_stopword(cand)) {
                repl = cand;
                break;
            }
        }
        pool_at++;
        selected.push_back(word);
        replacements.push_back(repl);
    }
    return json_reply({{"selected_words", selected}, {"replacements", replacements}});
}

std::string ScriptedProvider::handle_paraphrase(const ScriptedModelParams& p,
                                                const std::string& prompt) const {
    const std::string block = section(prompt, "Answer:\n\n", "\n\n### Expected Response");
    const ParsedCandidate c = parse_candidate(block);
    const std::string label = c.label.empty() ? "A" : c.label;
    return json_reply({{"new_reason", scripted_reasoning(p, label, 1)}});
}

std::string ScriptedProvider::handle_cross_reason(const ScriptedModelParams& p,
                                                  const std::string& prompt) const {
    const std::string option = section(prompt, "### Option:\n\n", "\n\n### Expected Response");
    return json_reply({{"reason", scripted_reasoning(p, option, 2)}});
}

std::string ScriptedProvider::handle_restyle(const ScriptedModelParams&,
                                             const std::string& prompt) const {
    const std::string code = section(prompt, "### code:\n\n", "\n\n### Expected Response");
    // Drop the author's voice line, keep comments, tack on a harmless
    // module-level statement so the restyled text visibly differs.
    std::string out;
    std::istringstream iss(normalize_newlines(code));
    std::string line;
    while (std::getline(iss, line)) {
        if (trim(line).rfind("_voice", 0) == 0) continue;
        out += line;
        out.push_back('\n');
    }
    out += "\n_restyled = True\n";
    return json_reply({{"new_solution", out}});
}

std::string ScriptedProvider::handle_quality(const ScriptedModelParams& p,
                                             const std::string& prompt) const {
    if (p.always_first) return "1";
    const std::string v1 = section(prompt, "Version1:\n\n", "\n\nVersion2:");
    const std::string v2 = section(prompt, "Version2:\n\n", "\n\nWhich version");
    const std::string seed = std::to_string(p.seed);
    const double s1 = hash01({seed, p.model, "quality", v1});
    const double s2 = hash01({seed, p.model, "quality", v2});
    return s1 >= s2 ? "1" : "2";
}

}  // namespace judgeaudit
