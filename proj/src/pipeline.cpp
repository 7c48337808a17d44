#include "judgeaudit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

namespace {

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (n == 1) {
        for (std::size_t i = 0; i < count; i++) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < n; w++) {
        pool.emplace_back([&] {
            for (;;) {
                if (stop.load()) return;
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    stop.store(true);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

Lineage lineage_for_condition(const std::string& condition, std::string* plugin) {
    if (condition == kCondSynonym) return Lineage::SynonymReplaced;
    if (condition == kCondParaphrase) return Lineage::JudgeParaphrased;
    if (condition == kCondCrossReason) return Lineage::CrossReason;
    if (condition == kCondRestyle) return Lineage::Restyled;
    if (condition.rfind("plugin:", 0) == 0) {
        if (plugin) *plugin = condition.substr(7);
        return Lineage::PluginPerturbed;
    }
    fail(Err::ConfigError, "unknown condition: " + condition);
}

std::string condition_for_answer(const ModelAnswer& a) {
    switch (a.lineage) {
        case Lineage::Original: return kCondOriginal;
        case Lineage::SynonymReplaced: return kCondSynonym;
        case Lineage::JudgeParaphrased: return kCondParaphrase;
        case Lineage::CrossReason: return kCondCrossReason;
        case Lineage::Restyled: return kCondRestyle;
        case Lineage::PluginPerturbed: return "plugin:" + a.plugin_name;
    }
    return kCondOriginal;
}

bool condition_is_judge_scoped(const std::string& condition) {
    return condition == kCondParaphrase || condition == kCondCrossReason;
}

}  // namespace

StageMask StageMask::only(const std::string& stage) {
    StageMask m{false, false, false, false, false};
    if (stage == "generate") m.generate = true;
    else if (stage == "pair") m.pair = true;
    else if (stage == "perturb") m.perturb = true;
    else if (stage == "judge") m.judge = true;
    else if (stage == "recognize") m.recognize = true;
    else fail(Err::ConfigError, "unknown stage: " + stage);
    return m;
}

void RunPlan::validate() const {
    if (generators.size() < 2) fail(Err::ConfigError, "need at least two generator models");
    if (judges.empty()) fail(Err::ConfigError, "need at least one judge model");
    for (const auto& j : judges) {
        if (std::find(generators.begin(), generators.end(), j) == generators.end())
            fail(Err::ConfigError, "judge " + j + " must also appear as a generator");
        if (j == helper_model)
            fail(Err::ConfigError, "helper model " + j + " cannot be a judge");
        if (j == restyler_model)
            fail(Err::ConfigError, "restyler model " + j + " cannot be a judge");
    }
    for (const auto& c : conditions) {
        std::string plugin;
        lineage_for_condition(c, &plugin);
        if (c == kCondSynonym && helper_model.empty())
            fail(Err::ConfigError, "synonym condition needs a helper model");
        if (c == kCondRestyle && restyler_model.empty())
            fail(Err::ConfigError, "restyle condition needs a restyler model");
    }
}

std::vector<ModelAnswer> load_answers_file(const std::filesystem::path& path) {
    std::vector<ModelAnswer> out;
    for (const auto& j : read_jsonl(path)) out.push_back(answer_from_json(j));
    return out;
}

std::vector<PairRecord> load_pairs_file(const std::filesystem::path& path) {
    std::vector<PairRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(pair_record_from_json(j));
    return out;
}

std::vector<JudgeVerdict> load_verdicts_file(const std::filesystem::path& path) {
    std::vector<JudgeVerdict> out;
    for (const auto& j : read_jsonl(path)) out.push_back(verdict_from_json(j));
    return out;
}

std::vector<RecognitionVerdict> load_recognitions_file(const std::filesystem::path& path) {
    std::vector<RecognitionVerdict> out;
    for (const auto& j : read_jsonl(path)) out.push_back(recognition_from_json(j));
    return out;
}

std::vector<ModelAnswer> generate_answers(const std::vector<QuestionTask>& tasks,
                                          const std::string& model, ProviderHub& hub,
                                          const PromptSet& prompts, int workers,
                                          std::vector<GenerationFailure>* failures) {
    Provider& provider = hub.for_model(model);
    std::vector<std::optional<ModelAnswer>> slots(tasks.size());
    std::vector<std::optional<GenerationFailure>> fails(tasks.size());

    parallel_for(tasks.size(), workers, [&](std::size_t i) {
        const QuestionTask& task = tasks[i];
        try {
            std::string prompt;
            if (task.kind == TaskKind::MultipleChoice) {
                prompt = render_template(prompts.generator_qa, {{"questions", question_block(task)},
                                                                {"text", task.passage}});
            } else {
                prompt = render_template(prompts.generator_code, {{"problem", task.question}});
            }
            const auto resp = provider.complete({model, prompt, provider.config().temperature});
            ModelAnswer a;
            a.task_id = task.task_id;
            a.author_model = model;
            a.kind = task.kind;
            if (task.kind == TaskKind::MultipleChoice) {
                const auto extracted = extract_json_answer(resp.text, task.option_labels());
                a.label_choice = extracted.label;
                a.reasoning = extracted.reasoning;
            } else {
                auto obj = first_json_object(resp.text, {"solution"});
                if (!obj) fail(Err::ExtractionFailed, "no solution JSON");
                a.code_solution = obj->at("solution").get<std::string>();
            }
            slots[i] = finalize_answer(std::move(a));
        } catch (const Error& e) {
            // cache-only misses and credential failures poison the whole run
            if (e.kind == Err::OfflineCacheMiss || e.kind == Err::AuthError) throw;
            fails[i] = GenerationFailure{task.task_id, model, e.what()};
        } catch (const std::exception& e) {
            fails[i] = GenerationFailure{task.task_id, model, e.what()};
        }
    });

    std::vector<ModelAnswer> out;
    for (std::size_t i = 0; i < tasks.size(); i++) {
        if (slots[i]) out.push_back(std::move(*slots[i]));
        else if (failures && fails[i]) failures->push_back(std::move(*fails[i]));
    }
    return out;
}

bool answer_is_correct(const QuestionTask& task, const ModelAnswer& answer,
                       const Sandbox* sandbox, std::map<std::string, bool>* cache) {
    if (task.kind == TaskKind::MultipleChoice)
        return answer.label_choice == task.groundtruth_label;
    if (cache) {
        auto it = cache->find(answer.answer_id);
        if (it != cache->end()) return it->second;
    }
    if (!sandbox) fail(Err::SandboxUnavailable, "code correctness needs a sandbox");
    const bool ok = code_answer_correct(*sandbox, answer.code_solution, task.test_cases);
    if (cache) (*cache)[answer.answer_id] = ok;
    return ok;
}

std::vector<AnswerPair> build_pairs(const std::vector<QuestionTask>& tasks,
                                    const std::vector<ModelAnswer>& answers_x,
                                    const std::vector<ModelAnswer>& answers_y,
                                    std::uint64_t seed, const Sandbox* sandbox,
                                    std::map<std::string, bool>* correctness_cache) {
    std::unordered_map<std::string, const ModelAnswer*> by_task_x, by_task_y;
    for (const auto& a : answers_x) by_task_x[a.task_id] = &a;
    for (const auto& a : answers_y) by_task_y[a.task_id] = &a;

    std::vector<AnswerPair> out;
    for (const auto& task : tasks) {
        auto ix = by_task_x.find(task.task_id);
        auto iy = by_task_y.find(task.task_id);
        if (ix == by_task_x.end() || iy == by_task_y.end()) continue;
        const bool x_ok = answer_is_correct(task, *ix->second, sandbox, correctness_cache);
        const bool y_ok = answer_is_correct(task, *iy->second, sandbox, correctness_cache);
        if (x_ok == y_ok) continue;  // comparable pair, excluded from judged sets

        AnswerPair p;
        p.task_id = task.task_id;
        const bool x_first = hash01({std::to_string(seed), "side", task.task_id,
                                     ix->second->author_model, iy->second->author_model}) < 0.5;
        p.first = x_first ? *ix->second : *iy->second;
        p.second = x_first ? *iy->second : *ix->second;
        p.first_correct = x_first ? x_ok : y_ok;
        p.second_correct = x_first ? y_ok : x_ok;
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

// Parse one swapped query; one explicit re-query on an invalid verdict, after
// which the query counts as unresolved.
std::optional<RawChoice> ask_choice(Provider& provider, const std::string& model,
                                    const std::string& prompt, std::string* cause) {
    for (int attempt = 0; attempt < 2; attempt++) {
        const auto resp = provider.complete({model, prompt, provider.config().temperature, 0, attempt});
        try {
            return parse_pairwise_choice(resp.text);
        } catch (const Error& e) {
            if (e.kind != Err::InvalidVerdict) throw;
            if (cause && attempt == 1) *cause = "invalid verdict after retry";
        }
    }
    return std::nullopt;
}

}  // namespace

JudgeVerdict judge_pair(const std::string& judge, const QuestionTask& task, const AnswerPair& pair,
                        ProviderHub& hub, const PromptSet& prompts) {
    JudgeVerdict v;
    v.judge_model = judge;
    v.task_id = pair.task_id;
    v.first_answer_id = pair.first.answer_id;
    v.second_answer_id = pair.second.answer_id;
    v.condition = pair.condition;

    Provider& provider = hub.for_model(judge);
    const std::string prompt_a = render_template(prompts.evaluator,
                                                 {{"article", task.passage},
                                                  {"question", task.question},
                                                  {"answer1", candidate_block(pair.first)},
                                                  {"answer2", candidate_block(pair.second)}});
    const std::string prompt_b = render_template(prompts.evaluator,
                                                 {{"article", task.passage},
                                                  {"question", task.question},
                                                  {"answer1", candidate_block(pair.second)},
                                                  {"answer2", candidate_block(pair.first)}});
    try {
        v.query_a = ask_choice(provider, judge, prompt_a, &v.cause);
        v.query_b = ask_choice(provider, judge, prompt_b, &v.cause);
    } catch (const Error& e) {
        if (e.kind == Err::OfflineCacheMiss || e.kind == Err::AuthError) throw;
        v.outcome = Preferred::Ambiguous;
        v.cause = e.what();
        return v;
    } catch (const std::exception& e) {
        v.outcome = Preferred::Ambiguous;
        v.cause = e.what();
        return v;
    }
    if (!v.query_a || !v.query_b) {
        v.outcome = Preferred::Ambiguous;
        if (v.cause.empty()) v.cause = "unparseable verdict";
        return v;
    }
    v.outcome = resolve_verdict(*v.query_a, *v.query_b);
    if (v.outcome == Preferred::Ambiguous) {
        v.cause = "order-inconsistent";
        return v;
    }
    const bool prefers_first = v.outcome == Preferred::First;
    v.preferred_answer_id = prefers_first ? pair.first.answer_id : pair.second.answer_id;
    if (pair.first_correct != pair.second_correct)
        v.correct = prefers_first ? pair.first_correct : pair.second_correct;
    return v;
}

RecognitionVerdict probe_recognition(const std::string& judge, const QuestionTask& task,
                                     const AnswerPair& pair, ProviderHub& hub,
                                     const PromptSet& prompts) {
    const bool judge_first = pair.first.author_model == judge;
    const bool judge_second = pair.second.author_model == judge;
    if (judge_first == judge_second)
        fail(Err::AuthorBothSides, "recognition probe needs exactly one judge-authored side");

    RecognitionVerdict v;
    v.judge_model = judge;
    v.task_id = pair.task_id;
    v.first_answer_id = pair.first.answer_id;
    v.second_answer_id = pair.second.answer_id;
    v.condition = pair.condition;

    Provider& provider = hub.for_model(judge);
    const std::string prompt_a = render_template(prompts.recognizer,
                                                 {{"question", task.question},
                                                  {"answer1", candidate_block(pair.first)},
                                                  {"answer2", candidate_block(pair.second)}});
    const std::string prompt_b = render_template(prompts.recognizer,
                                                 {{"question", task.question},
                                                  {"answer1", candidate_block(pair.second)},
                                                  {"answer2", candidate_block(pair.first)}});
    std::optional<RawChoice> a, b;
    try {
        a = ask_choice(provider, judge, prompt_a, &v.cause);
        b = ask_choice(provider, judge, prompt_b, &v.cause);
    } catch (const Error& e) {
        if (e.kind == Err::OfflineCacheMiss || e.kind == Err::AuthError) throw;
        v.cause = e.what();
        return v;
    } catch (const std::exception& e) {
        v.cause = e.what();
        return v;
    }
    v.query_a = a;
    v.query_b = b;
    if (!a || !b) {
        if (v.cause.empty()) v.cause = "unparseable choice";
        return v;
    }
    const Preferred picked = resolve_verdict(*a, *b);
    if (picked == Preferred::Ambiguous) {
        v.cause = "order-inconsistent";
        return v;
    }
    const bool picked_first = picked == Preferred::First;
    v.picked_answer_id = picked_first ? pair.first.answer_id : pair.second.answer_id;
    v.is_correct = picked_first ? judge_first : judge_second;
    return v;
}

std::string condition_variant_key(const std::string& condition, const std::string& perturber) {
    if (condition_is_judge_scoped(condition)) return condition + ":" + perturber;
    return condition;
}

std::map<std::string, std::map<std::string, ModelAnswer>> index_variants(
    const std::vector<ModelAnswer>& answers) {
    std::map<std::string, std::map<std::string, ModelAnswer>> out;
    for (const auto& a : answers) {
        if (a.lineage == Lineage::Original) continue;
        const std::string cond = condition_for_answer(a);
        out[a.parent_answer_id][condition_variant_key(cond, a.perturber_model)] = a;
    }
    return out;
}

std::optional<AnswerPair> condition_pair(
    const AnswerPair& base, const std::string& judge, const std::string& condition,
    const std::map<std::string, std::map<std::string, ModelAnswer>>& variants_by_parent) {
    if (condition == kCondOriginal) return base;
    const bool judge_first = base.first.author_model == judge;
    const bool judge_second = base.second.author_model == judge;
    const bool self_eval = judge_first != judge_second;

    auto variant_of = [&](const ModelAnswer& parent,
                          const std::string& key) -> const ModelAnswer* {
        auto it = variants_by_parent.find(parent.answer_id);
        if (it == variants_by_parent.end()) return nullptr;
        auto jt = it->second.find(key);
        return jt == it->second.end() ? nullptr : &jt->second;
    };

    AnswerPair out = base;
    out.condition = condition;
    if (condition == kCondParaphrase) {
        // the judge rewrote the competitor's answer: self-evaluation only
        if (!self_eval) return std::nullopt;
        const ModelAnswer& comp = judge_first ? base.second : base.first;
        const ModelAnswer* var = variant_of(comp, condition_variant_key(condition, judge));
        if (!var) return std::nullopt;
        (judge_first ? out.second : out.first) = *var;
        return out;
    }
    if (condition == kCondCrossReason) {
        // both sides recombined; reasonings authored by the opposite model
        if (!self_eval) return std::nullopt;
        const ModelAnswer& own = judge_first ? base.first : base.second;
        const ModelAnswer& comp = judge_first ? base.second : base.first;
        const ModelAnswer* own_var =
            variant_of(own, condition_variant_key(condition, comp.author_model));
        const ModelAnswer* comp_var = variant_of(comp, condition_variant_key(condition, judge));
        if (!own_var || !comp_var) return std::nullopt;
        (judge_first ? out.first : out.second) = *own_var;
        (judge_first ? out.second : out.first) = *comp_var;
        return out;
    }
    // synonym / restyle / plugins: perturb the judge's side in self-evaluation,
    // the first side as a third party (the same perturbed answers either way).
    const ModelAnswer& target = self_eval ? (judge_first ? base.first : base.second) : base.first;
    const ModelAnswer* var = variant_of(target, condition);
    if (!var) return std::nullopt;
    if (self_eval) {
        (judge_first ? out.first : out.second) = *var;
    } else {
        out.first = *var;
    }
    return out;
}

namespace {

struct BundleState {
    std::vector<ModelAnswer> answers;
    std::vector<AnswerPair> base_pairs;
    std::unordered_map<std::string, ModelAnswer> answers_by_id;
    std::unordered_set<std::string> answer_keys;    // author|task|variantkey
    std::unordered_set<std::string> pair_keys;      // task|authorA|authorB (sorted)
    std::unordered_set<std::string> verdict_keys;   // judge|task|ids|cond
    std::unordered_set<std::string> recog_keys;
    std::unordered_set<std::string> equivalence_parents;

    static std::string answer_key(const ModelAnswer& a) {
        return a.author_model + "|" + a.task_id + "|" +
               condition_variant_key(condition_for_answer(a), a.perturber_model);
    }
};

std::string verdict_key(const std::string& judge, const std::string& task,
                        const std::string& first_id, const std::string& second_id,
                        const std::string& cond) {
    return judge + "|" + task + "|" + first_id + "|" + second_id + "|" + cond;
}

}  // namespace

AuditSummary run_audit(const RunPlan& plan, const AuditOptions& opts) {
    plan.validate();
    if (!opts.hub || !opts.prompts) fail(Err::ConfigError, "audit needs providers and prompts");
    ProviderHub& hub = *opts.hub;
    const PromptSet& prompts = *opts.prompts;
    const BundlePaths paths{plan.out_dir};
    std::filesystem::create_directories(plan.out_dir);

    std::map<std::string, QuestionTask> tasks_by_id;
    for (const auto& t : plan.tasks) tasks_by_id[t.task_id] = t;

    BundleState state;
    AuditSummary summary;

    // -- resume: load whatever a previous run persisted --
    if (std::filesystem::exists(paths.answers())) {
        state.answers = load_answers_file(paths.answers());
        for (const auto& a : state.answers) {
            state.answers_by_id[a.answer_id] = a;
            state.answer_keys.insert(BundleState::answer_key(a));
        }
    }
    if (std::filesystem::exists(paths.equivalence())) {
        for (const auto& j : read_jsonl(paths.equivalence()))
            state.equivalence_parents.insert(j.at("parent_answer_id").get<std::string>());
    }
    std::vector<JudgeVerdict> existing_verdicts;
    if (std::filesystem::exists(paths.verdicts())) {
        existing_verdicts = load_verdicts_file(paths.verdicts());
        for (const auto& v : existing_verdicts)
            state.verdict_keys.insert(
                verdict_key(v.judge_model, v.task_id, v.first_answer_id, v.second_answer_id,
                            v.condition));
    }
    if (std::filesystem::exists(paths.recognitions())) {
        for (const auto& v : load_recognitions_file(paths.recognitions()))
            state.recog_keys.insert(verdict_key(v.judge_model, v.task_id, v.first_answer_id,
                                                v.second_answer_id, v.condition));
    }

    auto persist_answer = [&](const ModelAnswer& a) {
        state.answers.push_back(a);
        state.answers_by_id[a.answer_id] = a;
        state.answer_keys.insert(BundleState::answer_key(a));
        append_jsonl(paths.answers(), answer_to_json(a));
    };

    // -- stage 1: generation --
    if (opts.stages.generate) {
        for (const auto& model : plan.generators) {
            std::vector<QuestionTask> missing;
            for (const auto& t : plan.tasks) {
                ModelAnswer probe;
                probe.author_model = model;
                probe.task_id = t.task_id;
                if (!state.answer_keys.count(BundleState::answer_key(probe)))
                    missing.push_back(t);
            }
            std::vector<GenerationFailure> failures;
            const auto generated =
                generate_answers(missing, model, hub, prompts, plan.stage_workers, &failures);
            for (const auto& a : generated) persist_answer(a);
            summary.generation_failures += failures.size();
        }
    } else if (state.answers.empty()) {
        fail(Err::MissingStage, "answers.jsonl absent; run the generate stage first");
    }

    // -- stage 2: pairs over original answers --
    // resume: previously persisted pairs come first, in file order
    if (std::filesystem::exists(paths.pairs())) {
        for (const auto& j : read_jsonl(paths.pairs())) {
            const PairRecord r = pair_record_from_json(j);
            AnswerPair p;
            p.task_id = r.task_id;
            p.first = state.answers_by_id.at(r.first_answer_id);
            p.second = state.answers_by_id.at(r.second_answer_id);
            p.first_correct = r.first_correct;
            p.second_correct = r.second_correct;
            state.pair_keys.insert(p.base_key());
            state.base_pairs.push_back(std::move(p));
        }
    }
    if (opts.stages.pair) {
        std::map<std::string, std::vector<ModelAnswer>> originals_by_model;
        for (const auto& a : state.answers) {
            if (a.lineage == Lineage::Original) originals_by_model[a.author_model].push_back(a);
        }
        std::map<std::string, bool> correctness_cache;
        for (std::size_t i = 0; i < plan.generators.size(); i++) {
            for (std::size_t j = i + 1; j < plan.generators.size(); j++) {
                const auto pairs = build_pairs(plan.tasks, originals_by_model[plan.generators[i]],
                                               originals_by_model[plan.generators[j]], plan.seed,
                                               opts.sandbox, &correctness_cache);
                for (const auto& p : pairs) {
                    if (!state.pair_keys.insert(p.base_key()).second) continue;
                    state.base_pairs.push_back(p);
                    append_jsonl(paths.pairs(), pair_to_json(p));
                }
            }
        }
    } else if ((opts.stages.judge || opts.stages.recognize || opts.stages.perturb) &&
               !std::filesystem::exists(paths.pairs())) {
        fail(Err::MissingStage, "pairs.jsonl absent; run the pair stage first");
    }

    // -- stage 3: perturbations --
    const bool want_synonym =
        opts.stages.perturb &&
        std::find(plan.conditions.begin(), plan.conditions.end(), kCondSynonym) !=
            plan.conditions.end();
    const bool want_paraphrase =
        opts.stages.perturb &&
        std::find(plan.conditions.begin(), plan.conditions.end(), kCondParaphrase) !=
            plan.conditions.end();
    const bool want_cross =
        opts.stages.perturb &&
        std::find(plan.conditions.begin(), plan.conditions.end(), kCondCrossReason) !=
            plan.conditions.end();
    const bool want_restyle =
        opts.stages.perturb &&
        std::find(plan.conditions.begin(), plan.conditions.end(), kCondRestyle) !=
            plan.conditions.end();
    std::vector<std::string> plugin_conditions;
    if (opts.stages.perturb) {
        for (const auto& c : plan.conditions) {
            if (c.rfind("plugin:", 0) == 0) plugin_conditions.push_back(c);
        }
    }

    std::vector<ModelAnswer> original_answers;
    for (const auto& a : state.answers) {
        if (a.lineage == Lineage::Original) original_answers.push_back(a);
    }

    if (want_synonym) {
        Provider& helper = hub.for_model(plan.helper_model);
        std::vector<const ModelAnswer*> targets;
        for (const auto& a : original_answers) {
            if (a.kind != TaskKind::MultipleChoice) continue;
            ModelAnswer probe = a;
            probe.lineage = Lineage::SynonymReplaced;
            probe.perturber_model = plan.helper_model;
            if (!state.answer_keys.count(BundleState::answer_key(probe))) targets.push_back(&a);
        }
        std::vector<std::optional<ModelAnswer>> produced(targets.size());
        std::atomic<std::size_t> excluded{0};
        parallel_for(targets.size(), plan.stage_workers, [&](std::size_t i) {
            try {
                produced[i] = synonym_replace_answer(tasks_by_id.at(targets[i]->task_id),
                                                     *targets[i], helper, plan.helper_model,
                                                     prompts, plan.synonym_k);
            } catch (const Error& e) {
                if (e.kind == Err::OfflineCacheMiss || e.kind == Err::AuthError) throw;
                excluded++;
            } catch (const std::exception&) {
                excluded++;
            }
        });
        for (auto& p : produced) {
            if (p) persist_answer(*p);
        }
        summary.perturb_exclusions += excluded.load();
    }

    for (const auto& cond : plugin_conditions) {
        if (!opts.registry) fail(Err::ConfigError, "plugin condition without a registry");
        const std::string name = cond.substr(7);
        for (const auto& a : original_answers) {
            if (a.kind != TaskKind::MultipleChoice) continue;
            ModelAnswer probe = a;
            probe.lineage = Lineage::PluginPerturbed;
            probe.plugin_name = name;
            if (state.answer_keys.count(BundleState::answer_key(probe))) continue;
            try {
                persist_answer(opts.registry->apply(name, tasks_by_id.at(a.task_id), a));
            } catch (const std::exception&) {
                summary.perturb_exclusions++;
            }
        }
    }

    if (want_restyle) {
        Provider& restyler = hub.for_model(plan.restyler_model);
        if (!opts.sandbox) fail(Err::SandboxUnavailable, "restyle needs a sandbox");
        for (const auto& a : original_answers) {
            if (a.kind != TaskKind::Code) continue;
            if (state.equivalence_parents.count(a.answer_id)) continue;  // attempted before
            summary.restyle_attempts++;
            ordered_json rec;
            rec["v"] = kRecordSchemaVersion;
            rec["parent_answer_id"] = a.answer_id;
            try {
                const ModelAnswer restyled =
                    restyle_code(a, restyler, plan.restyler_model, prompts, *opts.sandbox);
                const EquivalenceReport report = verify_equivalence(
                    a.code_solution, restyled.code_solution,
                    tasks_by_id.at(a.task_id).test_cases, *opts.sandbox);
                rec["restyled_answer_id"] = restyled.answer_id;
                rec["report"] = report.to_json();
                if (report.equivalent) {
                    persist_answer(restyled);
                } else {
                    summary.restyle_discards++;  // discarded: never enters judged sets
                }
            } catch (const std::exception& e) {
                rec["error"] = std::string(e.what());
                summary.restyle_discards++;
            }
            state.equivalence_parents.insert(a.answer_id);
            append_jsonl(paths.equivalence(), rec);
        }
    }

    if (want_paraphrase || want_cross) {
        for (const auto& judge : plan.judges) {
            for (const auto& base : state.base_pairs) {
                const bool judge_first = base.first.author_model == judge;
                const bool judge_second = base.second.author_model == judge;
                if (judge_first == judge_second) continue;  // self-evaluation pairs only
                const QuestionTask& task = tasks_by_id.at(base.task_id);
                const ModelAnswer& own = judge_first ? base.first : base.second;
                const ModelAnswer& comp = judge_first ? base.second : base.first;

                if (want_paraphrase && comp.kind == TaskKind::MultipleChoice) {
                    ModelAnswer probe = comp;
                    probe.lineage = Lineage::JudgeParaphrased;
                    probe.perturber_model = judge;
                    if (!state.answer_keys.count(BundleState::answer_key(probe))) {
                        try {
                            persist_answer(judge_paraphrase(task, comp, hub.for_model(judge),
                                                            judge, prompts));
                        } catch (const Error& e) {
                            if (e.kind == Err::OfflineCacheMiss || e.kind == Err::AuthError) throw;
                            summary.perturb_exclusions++;
                        } catch (const std::exception&) {
                            summary.perturb_exclusions++;
                        }
                    }
                }
                if (want_cross && own.kind == TaskKind::MultipleChoice &&
                    own.label_choice != comp.label_choice) {
                    ModelAnswer probe_own = own;
                    probe_own.lineage = Lineage::CrossReason;
                    probe_own.perturber_model = comp.author_model;
                    if (!state.answer_keys.count(BundleState::answer_key(probe_own))) {
                        try {
                            const AnswerPair crossed = cross_reason(task, base, judge, hub, prompts);
                            persist_answer(judge_first ? crossed.first : crossed.second);
                            persist_answer(judge_first ? crossed.second : crossed.first);
                        } catch (const Error& e) {
                            if (e.kind == Err::OfflineCacheMiss || e.kind == Err::AuthError) throw;
                            summary.perturb_exclusions++;
                        } catch (const std::exception&) {
                            summary.perturb_exclusions++;
                        }
                    }
                }
            }
        }
    }

    // -- stage 4: judging --
    const auto variants = index_variants(state.answers);
    std::vector<std::string> all_conditions = {kCondOriginal};
    for (const auto& c : plan.conditions) all_conditions.push_back(c);

    struct JudgeItem {
        std::string judge;
        const QuestionTask* task;
        AnswerPair pair;
    };
    if (opts.stages.judge) {
        std::vector<JudgeItem> judge_items;
        for (const auto& judge : plan.judges) {
            for (const auto& base : state.base_pairs) {
                for (const auto& cond : all_conditions) {
                    auto variant = condition_pair(base, judge, cond, variants);
                    if (!variant) continue;
                    if (state.verdict_keys.count(verdict_key(judge, variant->task_id,
                                                             variant->first.answer_id,
                                                             variant->second.answer_id, cond)))
                        continue;
                    judge_items.push_back(
                        {judge, &tasks_by_id.at(base.task_id), std::move(*variant)});
                }
            }
        }
        std::vector<JudgeVerdict> new_verdicts(judge_items.size());
        parallel_for(judge_items.size(), plan.stage_workers, [&](std::size_t i) {
            new_verdicts[i] = judge_pair(judge_items[i].judge, *judge_items[i].task,
                                         judge_items[i].pair, hub, prompts);
        });
        for (const auto& v : new_verdicts) append_jsonl(paths.verdicts(), verdict_to_json(v));
    }

    // -- stage 5: recognition probes (self-evaluation only) --
    if (opts.stages.recognize) {
        std::vector<JudgeItem> recog_items;
        for (const auto& judge : plan.judges) {
            for (const auto& base : state.base_pairs) {
                const bool jf = base.first.author_model == judge;
                const bool js = base.second.author_model == judge;
                if (jf == js) continue;
                if (plan.recognize_harmful_only &&
                    (jf ? base.first_correct : base.second_correct))
                    continue;
                for (const auto& cond : all_conditions) {
                    auto variant = condition_pair(base, judge, cond, variants);
                    if (!variant) continue;
                    if (state.recog_keys.count(verdict_key(judge, variant->task_id,
                                                           variant->first.answer_id,
                                                           variant->second.answer_id, cond)))
                        continue;
                    recog_items.push_back(
                        {judge, &tasks_by_id.at(base.task_id), std::move(*variant)});
                }
            }
        }
        std::vector<RecognitionVerdict> new_recogs(recog_items.size());
        parallel_for(recog_items.size(), plan.stage_workers, [&](std::size_t i) {
            new_recogs[i] = probe_recognition(recog_items[i].judge, *recog_items[i].task,
                                              recog_items[i].pair, hub, prompts);
        });
        for (const auto& v : new_recogs) append_jsonl(paths.recognitions(), recognition_to_json(v));
    }

    // -- manifest --
    std::vector<JudgeVerdict> final_verdicts;
    if (std::filesystem::exists(paths.verdicts()))
        final_verdicts = load_verdicts_file(paths.verdicts());
    std::map<std::string, std::pair<long long, long long>> ambiguity;  // judge|cond -> (n, ambiguous)
    for (const auto& v : final_verdicts) {
        auto& slot = ambiguity[v.judge_model + "|" + v.condition];
        slot.first++;
        if (v.outcome == Preferred::Ambiguous) slot.second++;
    }
    summary.answers = state.answers.size();
    summary.pairs = state.base_pairs.size();
    summary.verdicts = final_verdicts.size();
    summary.recognitions = std::filesystem::exists(paths.recognitions())
                               ? load_recognitions_file(paths.recognitions()).size()
                               : 0;

    ordered_json manifest;
    manifest["v"] = kRecordSchemaVersion;
    manifest["corpus_id"] = plan.corpus_id;
    manifest["seed"] = plan.seed;
    manifest["generators"] = plan.generators;
    manifest["judges"] = plan.judges;
    manifest["helper_model"] = plan.helper_model;
    manifest["restyler_model"] = plan.restyler_model;
    manifest["quality_proxy"] = plan.quality_proxy;
    manifest["conditions"] = all_conditions;
    manifest["synonym_k"] = plan.synonym_k;
    manifest["counts"] = {{"tasks", plan.tasks.size()},
                          {"answers", summary.answers},
                          {"pairs", summary.pairs},
                          {"verdicts", summary.verdicts},
                          {"recognitions", summary.recognitions}};
    ordered_json amb = ordered_json::object();
    for (const auto& [key, val] : ambiguity) {
        amb[key] = {{"n", val.first},
                    {"ambiguous", val.second},
                    {"rate", val.first ? static_cast<double>(val.second) / val.first : 0.0}};
    }
    manifest["ambiguity"] = amb;
    manifest["generation_failures"] = summary.generation_failures;
    manifest["perturb_exclusions"] = summary.perturb_exclusions;
    manifest["restyle"] = {{"attempts", summary.restyle_attempts},
                           {"discards", summary.restyle_discards},
                           {"discard_rate", summary.restyle_attempts
                                                ? static_cast<double>(summary.restyle_discards) /
                                                      summary.restyle_attempts
                                                : 0.0}};
    ordered_json ph = ordered_json::object();
    for (const auto& [role, hash] : prompts.hashes()) ph[role] = hash;
    manifest["prompt_hashes"] = ph;
    manifest["stopword_list_hash"] = stopword_list_hash();
    write_file(paths.manifest(), manifest.dump(2) + "\n");

    return summary;
}

}  // namespace judgeaudit
