#include "judgeaudit/perturb.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

namespace {

std::vector<std::string> json_word_list(const ordered_json& v) {
    std::vector<std::string> out;
    if (v.is_array()) {
        for (const auto& e : v) out.push_back(trim(e.get<std::string>()));
        return out;
    }
    // tolerate the bracketed-string form: "[word1, word2]"
    std::string s = trim(v.get<std::string>());
    if (!s.empty() && s.front() == '[') s.erase(s.begin());
    if (!s.empty() && s.back() == ']') s.pop_back();
    std::istringstream iss(s);
    std::string item;
    while (std::getline(iss, item, ',')) {
        std::string w = strip_punct(trim(item));
        if (!w.empty()) out.push_back(w);
    }
    return out;
}

// Byte range of a token's alphanumeric core within the raw text.
struct TokenSpan {
    size_t begin = 0;
    size_t end = 0;  // half-open
    std::string core_lower;
};

std::vector<TokenSpan> token_spans(const std::string& text) {
    std::vector<TokenSpan> spans;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) i++;
        size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) i++;
        if (i == start) break;
        size_t b = start, e = i;
        while (b < e && !std::isalnum(static_cast<unsigned char>(text[b]))) b++;
        while (e > b && !std::isalnum(static_cast<unsigned char>(text[e - 1]))) e--;
        if (e > b) spans.push_back({b, e, to_lower(text.substr(b, e - b))});
    }
    return spans;
}

std::string match_initial_case(const std::string& replacement, char original_first) {
    std::string out = replacement;
    if (!out.empty()) {
        if (std::isupper(static_cast<unsigned char>(original_first)))
            out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
        else
            out[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(out[0])));
    }
    return out;
}

std::vector<std::string> comment_lines(const std::string& code) {
    std::vector<std::string> out;
    std::istringstream iss(normalize_newlines(code));
    std::string line;
    while (std::getline(iss, line)) {
        const std::string t = trim(line);
        if (!t.empty() && t[0] == '#') out.push_back(t);
    }
    return out;
}

}  // namespace

void validate_plan(const SynonymPlan& plan, const std::string& question,
                   const std::string& reasoning) {
    if (plan.selected_words.size() != static_cast<size_t>(plan.k) ||
        plan.replacements.size() != static_cast<size_t>(plan.k))
        fail(Err::HelperMalformed, "plan must supply exactly k selections and replacements");
    const auto qtokens = word_tokens(question);
    auto in_question = [&](const std::string& w) {
        return std::find(qtokens.begin(), qtokens.end(), to_lower(strip_punct(w))) != qtokens.end();
    };
    for (size_t i = 0; i < plan.selected_words.size(); i++) {
        const std::string& w = plan.selected_words[i];
        const std::string& r = plan.replacements[i];
        if (w.empty() || r.empty()) fail(Err::HelperMalformed, "empty word in plan");
        if (!contains_token(reasoning, w))
            fail(Err::HelperMalformed, "selected word '" + w + "' not in the reasoning");
        if (is_stopword(w)) fail(Err::HelperMalformed, "selected word '" + w + "' is a stop word");
        if (in_question(w))
            fail(Err::HelperMalformed, "selected word '" + w + "' appears in the question");
        if (in_question(r))
            fail(Err::HelperMalformed, "replacement '" + r + "' appears in the question");
        if (to_lower(w) == to_lower(r))
            fail(Err::HelperMalformed, "replacement equals the selected word '" + w + "'");
    }
}

SynonymPlan plan_synonyms(const std::string& question, const std::string& reasoning,
                          Provider& helper, const std::string& helper_model,
                          const PromptSet& prompts, int k) {
    // Cheap precondition: enough candidate tokens after the exclusions.
    const auto qtokens = word_tokens(question);
    std::vector<std::string> candidates;
    for (const auto& w : word_tokens(reasoning)) {
        if (is_stopword(w)) continue;
        if (std::find(qtokens.begin(), qtokens.end(), w) != qtokens.end()) continue;
        if (std::find(candidates.begin(), candidates.end(), w) == candidates.end())
            candidates.push_back(w);
    }
    if (static_cast<int>(candidates.size()) < k)
        fail(Err::NoCandidates, "only " + std::to_string(candidates.size()) +
                                    " replaceable words for k=" + std::to_string(k));

    const std::string prompt = render_template(
        prompts.synonym,
        {{"num_words", number_word(k)}, {"question", question}, {"answer", reasoning}});

    std::string last_error;
    for (int attempt = 0; attempt < 3; attempt++) {
        ChatRequest req{helper_model, prompt, helper.config().temperature, 0, attempt};
        const auto resp = helper.complete(req);
        auto obj = first_json_object(resp.text, {"selected_words", "replacements"});
        if (!obj) {
            last_error = "no JSON plan in helper response";
            continue;
        }
        SynonymPlan plan;
        plan.k = k;
        plan.selected_words = json_word_list(obj->at("selected_words"));
        plan.replacements = json_word_list(obj->at("replacements"));
        try {
            validate_plan(plan, question, reasoning);
            return plan;
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    fail(Err::HelperMalformed, "no valid plan after 3 tries: " + last_error);
}

std::string apply_synonyms(const std::string& reasoning, const SynonymPlan& plan) {
    std::string text = reasoning;
    for (size_t i = 0; i < plan.selected_words.size(); i++) {
        const std::string target = to_lower(strip_punct(plan.selected_words[i]));
        const auto spans = token_spans(text);
        bool replaced = false;
        for (const auto& s : spans) {
            if (s.core_lower != target) continue;
            const std::string cased = match_initial_case(plan.replacements[i], text[s.begin]);
            text = text.substr(0, s.begin) + cased + text.substr(s.end);
            replaced = true;
            break;
        }
        if (!replaced)
            fail(Err::WordVanished, "word '" + plan.selected_words[i] + "' no longer in the text");
    }
    return text;
}

ModelAnswer synonym_replace_answer(const QuestionTask& task, const ModelAnswer& parent,
                                   Provider& helper, const std::string& helper_model,
                                   const PromptSet& prompts, int k) {
    const auto plan = plan_synonyms(task.question, parent.reasoning, helper, helper_model, prompts, k);
    ModelAnswer out = parent;
    out.reasoning = apply_synonyms(parent.reasoning, plan);
    out.lineage = Lineage::SynonymReplaced;
    out.parent_answer_id = parent.answer_id;
    out.perturber_model = helper_model;
    return finalize_answer(std::move(out));
}

ModelAnswer judge_paraphrase(const QuestionTask& task, const ModelAnswer& competitor,
                             Provider& judge_provider, const std::string& judge_model,
                             const PromptSet& prompts) {
    if (competitor.author_model == judge_model)
        fail(Err::ConfigError, "paraphrase target must come from a different model");
    const std::string prompt =
        render_template(prompts.paraphrase,
                        {{"question", task.question}, {"answer", candidate_block(competitor)}});
    ChatRequest req{judge_model, prompt, judge_provider.config().temperature};
    const auto resp = judge_provider.complete(req);
    auto obj = first_json_object(resp.text, {"new_reason"});
    if (!obj) fail(Err::MalformedResponse, "no paraphrase JSON from " + judge_model);
    if (obj->contains("output_label")) {
        const std::string claimed = trim((*obj)["output_label"].get<std::string>());
        if (!claimed.empty() && claimed != competitor.label_choice)
            fail(Err::ParaphraseChangedLabel,
                 "paraphrase asserts option " + claimed + " instead of " + competitor.label_choice);
    }
    ModelAnswer out = competitor;
    out.reasoning = obj->at("new_reason").get<std::string>();
    out.lineage = Lineage::JudgeParaphrased;
    out.parent_answer_id = competitor.answer_id;
    out.perturber_model = judge_model;
    return finalize_answer(std::move(out));
}

namespace {

std::string reasoning_for_option(const QuestionTask& task, const std::string& label,
                                 Provider& provider, const std::string& model,
                                 const PromptSet& prompts) {
    const std::string prompt = render_template(prompts.cross_reason,
                                               {{"questions", question_block(task)},
                                                {"text", task.passage},
                                                {"option", label}});
    for (int attempt = 0; attempt < 2; attempt++) {
        ChatRequest req{model, prompt, provider.config().temperature, 0, attempt};
        const auto resp = provider.complete(req);
        if (auto obj = first_json_object(resp.text, {"reason"}))
            return obj->at("reason").get<std::string>();
    }
    fail(Err::GenerationRefused, model + " would not argue for option " + label);
}

}  // namespace

AnswerPair cross_reason(const QuestionTask& task, const AnswerPair& pair,
                        const std::string& judge_model, ProviderHub& hub,
                        const PromptSet& prompts) {
    const bool judge_first = pair.first.author_model == judge_model;
    const bool judge_second = pair.second.author_model == judge_model;
    if (judge_first == judge_second)
        fail(Err::AuthorBothSides, "cross-reason needs a self-evaluation pair");
    const ModelAnswer& own = judge_first ? pair.first : pair.second;
    const ModelAnswer& comp = judge_first ? pair.second : pair.first;
    if (own.label_choice == comp.label_choice)
        fail(Err::ComparablePair, "cross-reason needs distinct labels");

    // Each side keeps its label; the reasoning comes from the other model.
    ModelAnswer own_recombined = own;
    own_recombined.reasoning = reasoning_for_option(task, own.label_choice,
                                                    hub.for_model(comp.author_model),
                                                    comp.author_model, prompts);
    own_recombined.lineage = Lineage::CrossReason;
    own_recombined.parent_answer_id = own.answer_id;
    own_recombined.perturber_model = comp.author_model;

    ModelAnswer comp_recombined = comp;
    comp_recombined.reasoning = reasoning_for_option(task, comp.label_choice,
                                                     hub.for_model(judge_model), judge_model,
                                                     prompts);
    comp_recombined.lineage = Lineage::CrossReason;
    comp_recombined.parent_answer_id = comp.answer_id;
    comp_recombined.perturber_model = judge_model;

    AnswerPair out = pair;
    out.first = finalize_answer(judge_first ? own_recombined : comp_recombined);
    out.second = finalize_answer(judge_first ? comp_recombined : own_recombined);
    out.condition = "cross_reason";
    return out;
}

ordered_json EquivalenceReport::to_json() const {
    ordered_json j;
    j["v"] = kRecordSchemaVersion;
    j["total_tests"] = total_tests;
    j["matched"] = matched;
    j["mismatched"] = mismatched;
    j["verdict"] = equivalent ? "equivalent" : "discarded";
    ordered_json ts = ordered_json::array();
    for (const auto& t : transcripts) {
        ordered_json tj;
        tj["call"] = t.call;
        tj["original_exit"] = t.original_exit;
        tj["restyled_exit"] = t.restyled_exit;
        tj["original_out"] = t.original_out;
        tj["restyled_out"] = t.restyled_out;
        tj["matched"] = t.matched;
        ts.push_back(tj);
    }
    j["transcripts"] = ts;
    return j;
}

EquivalenceReport verify_equivalence(const std::string& original, const std::string& restyled,
                                     const std::vector<TestCase>& tests, const Sandbox& sandbox) {
    EquivalenceReport report;
    report.total_tests = static_cast<int>(tests.size());
    report.transcripts.resize(tests.size());

    const int workers = std::max(1, std::min(sandbox.config().workers,
                                             static_cast<int>(tests.size())));
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= tests.size()) return;
            const auto& t = tests[i];
            const ExecResult orig = sandbox.run_test(original, t);
            const ExecResult rest = sandbox.run_test(restyled, t);
            TestTranscript& tr = report.transcripts[i];
            tr.call = t.call;
            tr.original_exit = orig.timed_out ? -1 : orig.exit_code;
            tr.restyled_exit = rest.timed_out ? -1 : rest.exit_code;
            tr.original_out = orig.out;
            tr.restyled_out = rest.out;
            // exact output comparison; a timeout on either side is a mismatch
            tr.matched = !orig.timed_out && !rest.timed_out &&
                         orig.exit_code == rest.exit_code && orig.out == rest.out;
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; w++) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    for (const auto& tr : report.transcripts) {
        if (tr.matched) report.matched++;
        else report.mismatched++;
    }
    report.equivalent = report.mismatched == 0;
    return report;
}

ModelAnswer restyle_code(const ModelAnswer& parent, Provider& restyler_provider,
                         const std::string& restyler_model, const PromptSet& prompts,
                         const Sandbox& sandbox) {
    if (!sandbox.parses(parent.code_solution))
        fail(Err::RestyleMalformed, "original solution does not parse");
    const std::string prompt =
        render_template(prompts.restyle, {{"code", parent.code_solution}});
    const auto original_comments = comment_lines(parent.code_solution);

    std::string restyled;
    for (int attempt = 0; attempt < 2; attempt++) {
        ChatRequest req{restyler_model, prompt, restyler_provider.config().temperature, 0, attempt};
        const auto resp = restyler_provider.complete(req);
        auto obj = first_json_object(resp.text, {"new_solution"});
        if (!obj) {
            if (attempt == 1) fail(Err::RestyleMalformed, "no new_solution JSON from restyler");
            continue;
        }
        restyled = obj->at("new_solution").get<std::string>();
        bool comments_ok = true;
        for (const auto& c : original_comments) {
            if (restyled.find(c) == std::string::npos) {
                comments_ok = false;
                break;
            }
        }
        if (comments_ok) break;
        if (attempt == 1) fail(Err::CommentLost, "restyled code dropped an original comment");
        restyled.clear();
    }

    ModelAnswer out = parent;
    out.code_solution = restyled;
    out.lineage = Lineage::Restyled;
    out.parent_answer_id = parent.answer_id;
    out.perturber_model = restyler_model;
    return finalize_answer(std::move(out));
}

void ObfuscatorRegistry::register_obfuscator(const std::string& name, ObfuscatorFn fn) {
    if (fns_.count(name)) fail(Err::DuplicateName, "obfuscator '" + name + "' already registered");

    // Contract probe on a synthetic answer: the transform must keep task_id
    // and label and produce PluginPerturbed lineage.
    QuestionTask probe_task;
    probe_task.task_id = "probe";
    probe_task.kind = TaskKind::MultipleChoice;
    probe_task.question = "Which check does this probe exercise?";
    probe_task.options = {{"A", "the contract"}, {"B", "nothing"}};
    probe_task.groundtruth_label = "A";
    ModelAnswer probe;
    probe.task_id = "probe";
    probe.author_model = "probe-model";
    probe.kind = TaskKind::MultipleChoice;
    probe.label_choice = "A";
    probe.reasoning = "Deterministic sentence with several distinctive candidate tokens inside.";
    probe = finalize_answer(std::move(probe));

    const ModelAnswer transformed = fn(probe_task, probe);
    if (transformed.task_id != probe.task_id)
        fail(Err::PluginContract, "obfuscator '" + name + "' changed task_id");
    if (transformed.label_choice != probe.label_choice)
        fail(Err::PluginContract, "obfuscator '" + name + "' changed the label");
    fns_[name] = std::move(fn);
}

ModelAnswer ObfuscatorRegistry::apply(const std::string& name, const QuestionTask& task,
                                      const ModelAnswer& parent) const {
    auto it = fns_.find(name);
    if (it == fns_.end()) fail(Err::ConfigError, "no obfuscator named '" + name + "'");
    ModelAnswer out = it->second(task, parent);
    out.lineage = Lineage::PluginPerturbed;
    out.plugin_name = name;
    out.parent_answer_id = parent.answer_id;
    return finalize_answer(std::move(out));
}

std::vector<std::string> ObfuscatorRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : fns_) out.push_back(n);
    return out;
}

ObfuscatorFn ObfuscatorRegistry::spelling_error_plugin(std::uint64_t seed, int words) {
    return [seed, words](const QuestionTask& task, const ModelAnswer& parent) -> ModelAnswer {
        const auto qtokens = word_tokens(task.question);
        std::string text = parent.content();
        int edited = 0;
        const auto spans = token_spans(text);
        // deterministic pick: rank eligible tokens by a seeded hash
        std::vector<std::pair<std::uint64_t, size_t>> ranked;
        for (size_t i = 0; i < spans.size(); i++) {
            const auto& s = spans[i];
            if (s.core_lower.size() < 4 || is_stopword(s.core_lower)) continue;
            if (std::find(qtokens.begin(), qtokens.end(), s.core_lower) != qtokens.end()) continue;
            ranked.emplace_back(
                stable_hash64(std::to_string(seed) + "|spell|" + s.core_lower), i);
        }
        std::sort(ranked.begin(), ranked.end());
        // apply right-to-left so byte offsets stay valid
        std::vector<size_t> chosen;
        for (const auto& [h, i] : ranked) {
            if (edited >= words) break;
            chosen.push_back(i);
            edited++;
        }
        std::sort(chosen.rbegin(), chosen.rend());
        for (const size_t i : chosen) {
            const auto& s = spans[i];
            const size_t pos =
                s.begin + 1 +
                stable_hash64(std::to_string(seed) + "|at|" + s.core_lower) % (s.end - s.begin - 1);
            char c = text[pos];
            if (std::isalpha(static_cast<unsigned char>(c))) {
                text[pos] = (c == 'z' || c == 'Z') ? static_cast<char>(c - 1)
                                                   : static_cast<char>(c + 1);
            }
        }
        ModelAnswer out = parent;
        out.content() = text;
        return out;
    };
}

}  // namespace judgeaudit
