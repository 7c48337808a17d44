#include "judgeaudit/cli.hpp"

#include <algorithm>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "judgeaudit/http.hpp"
#include "judgeaudit/util.hpp"

namespace judgeaudit {

namespace {

std::vector<std::string> string_list(const ordered_json& j) {
    std::vector<std::string> out;
    for (const auto& e : j) out.push_back(e.get<std::string>());
    return out;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(path));
    } catch (const std::exception& e) {
        fail(Err::ConfigError, "cannot read config " + path.string() + ": " + e.what());
    }
    RunConfig c;
    try {
        const auto& corpus = j.at("corpus");
        c.corpus_path = corpus.at("path").get<std::string>();
        c.corpus_kind = task_kind_from(corpus.value("kind", std::string("quality")));
        if (corpus.contains("subsample")) {
            c.subsample = SubsampleSpec{corpus["subsample"].value("seed", 0ULL),
                                        corpus["subsample"].value("n", std::size_t(0))};
        }
        c.providers_path = j.at("providers").get<std::string>();
        const auto& models = j.at("models");
        c.generators = string_list(models.at("generators"));
        c.judges = string_list(models.at("judges"));
        c.helper_model = models.value("helper", std::string());
        c.restyler_model = models.value("restyler", std::string());
        c.quality_proxy = models.value("quality_proxy", std::string());
        if (j.contains("conditions")) c.conditions = string_list(j["conditions"]);
        c.synonym_k = j.value("synonym_k", 2);
        c.spelling_words = j.value("spelling_words", 2);
        c.seed = j.value("seed", 1ULL);
        c.out_dir = j.at("out").get<std::string>();
        c.cache_dir = j.contains("cache") ? std::filesystem::path(j["cache"].get<std::string>())
                                          : c.out_dir / "cache";
        c.workers = j.value("workers", 8);
        if (j.contains("prompts")) {
            for (const auto& [role, file] : j["prompts"].items())
                c.prompt_overrides[role] = file.get<std::string>();
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(Err::ConfigError, "bad config " + path.string() + ": " + e.what());
    }
    return c;
}

CliContext build_context(RunConfig config) {
    CliContext ctx{std::move(config), {}, PromptSet::builtin(), nullptr, {}, Sandbox{}, {}, nullptr};
    const RunConfig& c = ctx.config;

    if (!std::filesystem::exists(c.corpus_path))
        fail(Err::ConfigError, "corpus file not found: " + c.corpus_path.string());
    ctx.tasks = load_corpus(c.corpus_path, c.corpus_kind);
    if (c.subsample) ctx.tasks = subsample_tasks(std::move(ctx.tasks), *c.subsample);

    for (const auto& [role, file] : c.prompt_overrides)
        ctx.prompts.set_role(role, read_file(file));

    ctx.cache = std::make_unique<ResponseCache>(c.cache_dir);

    // provider hub
    ordered_json pj;
    try {
        pj = ordered_json::parse(read_file(c.providers_path));
    } catch (const std::exception& e) {
        fail(Err::ConfigError, "cannot read providers file: " + std::string(e.what()));
    }
    for (const auto& entry : pj.at("providers")) {
        ProviderConfig pc;
        pc.name = entry.at("name").get<std::string>();
        pc.url = entry.value("url", std::string());
        pc.credential_env = entry.value("credential_env", std::string());
        pc.max_in_flight = entry.value("max_in_flight", 10);
        pc.max_retries = entry.value("max_retries", 3);
        pc.timeout_s = entry.value("timeout_s", 60.0);
        pc.temperature = entry.value("temperature", 0.0);
        const std::string kind = entry.value("kind", std::string("openai"));
        if (kind == "scripted") {
            auto scripted = std::make_shared<ScriptedProvider>();
            std::vector<std::string> model_ids;
            for (const auto& m : entry.at("models")) {
                ScriptedModelParams p;
                p.model = m.at("model").get<std::string>();
                p.marker = m.value("marker", std::string());
                p.style_weight = m.value("style_weight", 0.7);
                p.belief_weight = m.value("belief_weight", 0.3);
                p.competence = m.value("competence", 0.6);
                p.noise_scale = m.value("noise_scale", 0.7);
                p.text_noise = m.value("text_noise", 0.02);
                p.seed = m.value("seed", c.seed);
                p.always_first = m.value("always_first", false);
                model_ids.push_back(p.model);
                scripted->add_model(std::move(p));
            }
            scripted->set_answer_key(ctx.tasks);
            // canned code solutions ride along in the corpus file
            for (const auto& rec : read_jsonl(c.corpus_path)) {
                if (!rec.contains("solutions")) continue;
                const std::string q = rec.contains("problem")
                                          ? rec["problem"].get<std::string>()
                                          : rec.value("question", std::string());
                scripted->set_code_solutions(q, rec["solutions"].value("good", std::string()),
                                             rec["solutions"].value("bad", std::string()));
            }
            ctx.scripted = scripted;
            // share one Backend across the hub entry
            struct SharedBackend : Backend {
                std::shared_ptr<ScriptedProvider> inner;
                std::string complete_raw(const ChatRequest& r) override {
                    return inner->complete_raw(r);
                }
            };
            auto backend = std::make_unique<SharedBackend>();
            backend->inner = scripted;
            ctx.hub.add(std::make_shared<Provider>(pc, std::move(backend), ctx.cache.get()),
                        model_ids);
        } else if (kind == "openai") {
            // fail fast on unset credentials unless the run is cache-only
            if (!pc.credential_env.empty() && !c.offline && !std::getenv(pc.credential_env.c_str()))
                fail(Err::AuthError,
                     "credential env var " + pc.credential_env + " is not set (provider " +
                         pc.name + ")");
            const auto model_ids = string_list(entry.at("models"));
            ctx.hub.add(std::make_shared<Provider>(pc, std::make_unique<HttpBackend>(pc),
                                                   ctx.cache.get()),
                        model_ids);
        } else {
            fail(Err::ConfigError, "unknown provider kind: " + kind);
        }
    }
    ctx.hub.set_offline(c.offline);

    // built-in ablation plugin; external ones register through the library API
    ctx.registry.register_obfuscator(
        "spelling-error", ObfuscatorRegistry::spelling_error_plugin(c.seed, c.spelling_words));

    // fail fast on unroutable models
    for (const auto& m : c.generators)
        if (!ctx.hub.has_model(m)) fail(Err::ConfigError, "no provider for generator " + m);
    for (const auto& m : c.judges)
        if (!ctx.hub.has_model(m)) fail(Err::ConfigError, "no provider for judge " + m);
    return ctx;
}

RunPlan CliContext::plan() const {
    RunPlan p;
    p.corpus_id = config.corpus_path.stem().string();
    p.tasks = tasks;
    p.generators = config.generators;
    p.judges = config.judges;
    p.helper_model = config.helper_model;
    p.restyler_model = config.restyler_model;
    p.quality_proxy = config.quality_proxy;
    p.conditions = config.conditions;
    p.synonym_k = config.synonym_k;
    p.recognize_harmful_only = config.recognize_harmful_only;
    p.seed = config.seed;
    p.out_dir = config.out_dir;
    p.stage_workers = config.workers;
    return p;
}

namespace {

// Every stage drops a corpus manifest next to the bundle it reads from.
void write_corpus_manifest(const CliContext& ctx) {
    const auto m = make_manifest(ctx.config.corpus_path, ctx.config.corpus_kind, ctx.tasks,
                                 ctx.config.subsample);
    write_file(ctx.bundle().dir / "corpus_manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace

AuditSummary cmd_stage(CliContext& ctx, const std::string& stage) {
    write_corpus_manifest(ctx);
    AuditOptions opts;
    opts.hub = &ctx.hub;
    opts.prompts = &ctx.prompts;
    opts.sandbox = &ctx.sandbox;
    opts.registry = &ctx.registry;
    opts.stages = StageMask::only(stage);
    // pairing is implied by stages that consume pairs when none exist yet
    if ((stage == "judge" || stage == "recognize" || stage == "perturb") &&
        !std::filesystem::exists(ctx.bundle().pairs()))
        fail(Err::MissingStage, "pairs.jsonl absent; run 'pair' first");
    return run_audit(ctx.plan(), opts);
}

AuditSummary cmd_audit(CliContext& ctx) {
    write_corpus_manifest(ctx);
    AuditOptions opts;
    opts.hub = &ctx.hub;
    opts.prompts = &ctx.prompts;
    opts.sandbox = &ctx.sandbox;
    opts.registry = &ctx.registry;
    return run_audit(ctx.plan(), opts);
}

void cmd_report(CliContext& ctx) {
    const auto inputs = load_bundle(ctx.bundle(), ctx.tasks);
    const auto artifacts = build_report(inputs);
    write_report(ctx.bundle(), artifacts);
}

void cmd_quality_check(CliContext& ctx, const std::string& condition,
                       const std::filesystem::path& human_csv) {
    const BundlePaths paths = ctx.bundle();

    if (!human_csv.empty()) {
        // Ingest external human judgments: CSV with header item_id,annotator,choice
        // where choice is original|perturbed|ambiguous.
        const std::string csv = read_file(human_csv);
        std::istringstream iss(csv);
        std::string line;
        bool header = true;
        while (std::getline(iss, line)) {
            if (header) {
                header = false;
                continue;
            }
            if (trim(line).empty()) continue;
            std::vector<std::string> cols;
            std::istringstream ls(line);
            std::string col;
            while (std::getline(ls, col, ',')) cols.push_back(trim(col));
            if (cols.size() < 3) fail(Err::SchemaError, "bad human CSV row: " + line);
            ordered_json rec;
            rec["v"] = kRecordSchemaVersion;
            rec["source"] = "human";
            rec["item_id"] = cols[0];
            rec["annotator"] = cols[1];
            rec["picked"] = cols[2];
            rec["condition"] = condition;
            append_jsonl(paths.quality(), rec);
        }
        return;
    }

    if (ctx.config.quality_proxy.empty())
        fail(Err::ConfigError, "quality check needs a quality_proxy model or --human-csv");
    if (!std::filesystem::exists(paths.answers()))
        fail(Err::MissingStage, "answers.jsonl absent; generate and perturb first");

    const auto answers = load_answers_file(paths.answers());
    std::map<std::string, const ModelAnswer*> by_id;
    for (const auto& a : answers) by_id[a.answer_id] = &a;
    std::map<std::string, const QuestionTask*> tasks_by_id;
    for (const auto& t : ctx.tasks) tasks_by_id[t.task_id] = &t;

    std::string plugin;
    Lineage target = Lineage::Original;
    if (condition == kCondSynonym) target = Lineage::SynonymReplaced;
    else if (condition == kCondParaphrase) target = Lineage::JudgeParaphrased;
    else if (condition == kCondRestyle) target = Lineage::Restyled;
    else if (condition.rfind("plugin:", 0) == 0) {
        target = Lineage::PluginPerturbed;
        plugin = condition.substr(7);
    } else {
        fail(Err::ConfigError, "quality check does not apply to condition " + condition);
    }

    Provider& proxy = ctx.hub.for_model(ctx.config.quality_proxy);
    // resume: skip items this proxy already judged under this condition
    std::set<std::string> done;
    if (std::filesystem::exists(paths.quality())) {
        for (const auto& j : read_jsonl(paths.quality())) {
            if (j.value("source", std::string()) != "proxy") continue;
            done.insert(j.value("perturbed_answer_id", std::string()) + "|" +
                        j.value("condition", std::string()));
        }
    }
    std::size_t checked = 0;
    for (const auto& a : answers) {
        if (a.lineage != target) continue;
        if (target == Lineage::PluginPerturbed && a.plugin_name != plugin) continue;
        if (done.count(a.answer_id + "|" + condition)) {
            checked++;
            continue;
        }
        auto parent_it = by_id.find(a.parent_answer_id);
        auto task_it = tasks_by_id.find(a.task_id);
        if (parent_it == by_id.end() || task_it == tasks_by_id.end()) continue;
        const ModelAnswer& original = *parent_it->second;

        // blinded side assignment, then the usual order swap on top
        const bool original_first =
            hash01({std::to_string(ctx.config.seed), "blind", a.answer_id}) < 0.5;
        const std::string block_orig = candidate_block(original);
        const std::string block_pert = candidate_block(a);
        const std::string& v1 = original_first ? block_orig : block_pert;
        const std::string& v2 = original_first ? block_pert : block_orig;
        const std::string prompt_a = render_template(ctx.prompts.quality,
                                                     {{"question", task_it->second->question},
                                                      {"answer1", v1},
                                                      {"answer2", v2}});
        const std::string prompt_b = render_template(ctx.prompts.quality,
                                                     {{"question", task_it->second->question},
                                                      {"answer1", v2},
                                                      {"answer2", v1}});
        std::string picked = "ambiguous";
        try {
            const auto ra = parse_pairwise_choice(
                proxy.complete({ctx.config.quality_proxy, prompt_a,
                                proxy.config().temperature}).text);
            const auto rb = parse_pairwise_choice(
                proxy.complete({ctx.config.quality_proxy, prompt_b,
                                proxy.config().temperature}).text);
            const Preferred res = resolve_verdict(ra, rb);
            if (res != Preferred::Ambiguous) {
                const bool picked_v1 = res == Preferred::First;
                const bool picked_original = picked_v1 == original_first;
                picked = picked_original ? "original" : "perturbed";
            }
        } catch (const Error& e) {
            if (e.kind != Err::InvalidVerdict) throw;
        }
        ordered_json rec;
        rec["v"] = kRecordSchemaVersion;
        rec["source"] = "proxy";
        rec["proxy_model"] = ctx.config.quality_proxy;
        rec["parent_answer_id"] = original.answer_id;
        rec["perturbed_answer_id"] = a.answer_id;
        rec["condition"] = condition;
        rec["original_first"] = original_first;
        rec["picked"] = picked;
        append_jsonl(paths.quality(), rec);
        checked++;
    }
    if (checked == 0)
        fail(Err::MissingStage, "no perturbed answers for condition " + condition);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Self-preference audit toolkit for LM judges"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_override, condition, human_csv;
    std::uint64_t seed_override = 0;
    bool seed_set = false, offline = false;

    app.add_option("--config", config_path, "run configuration JSON")->envname("JUDGEAUDIT_CONFIG");
    app.add_option("--out", out_override, "override the output directory");
    app.add_option("--seed", seed_override, "override the run seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_flag("--offline", offline, "serve everything from the cache; fail on misses");

    auto* convert = app.add_subcommand("convert", "convert an upstream dataset to corpus JSONL");
    convert->fallthrough();
    std::string conv_from, conv_in, conv_out;
    convert->add_option("--from", conv_from, "quality-raw | mbpp")->required();
    convert->add_option("--in", conv_in)->required();
    convert->add_option("--out-file", conv_out)->required();

    auto* generate = app.add_subcommand("generate", "generate answers for every generator model");
    generate->fallthrough();
    auto* pair = app.add_subcommand("pair", "build non-comparable answer pairs");
    pair->fallthrough();
    auto* perturb = app.add_subcommand("perturb", "produce perturbed answer variants");
    perturb->fallthrough();
    std::string method;
    int k_override = 0;
    perturb->add_option("--method", method, "synonym | paraphrase | cross-reason | restyle | plugin:<name>");
    perturb->add_option("--k", k_override, "synonym word budget");
    auto* judge = app.add_subcommand("judge", "order-swapped pairwise judging");
    judge->fallthrough();
    std::string judges_override;
    judge->add_option("--judges", judges_override, "comma-separated judge subset");
    judge->add_option("--condition", condition, "condition to judge");
    auto* recognize = app.add_subcommand("recognize", "self-recognition probes");
    recognize->fallthrough();
    recognize->add_option("--condition", condition, "condition to probe");
    bool harmful_only = false;
    recognize->add_flag("--harmful-only", harmful_only,
                        "probe only pairs where the judge's own answer is wrong");
    auto* audit = app.add_subcommand("audit", "full pipeline: generate, pair, perturb, judge, recognize");
    audit->fallthrough();
    auto* quality = app.add_subcommand("quality-check", "original-vs-perturbed quality control");
    quality->fallthrough();
    quality->add_option("--condition", condition, "perturbation condition to check");
    quality->add_option("--human-csv", human_csv, "ingest human judgments instead of the proxy");
    auto* report = app.add_subcommand("report", "emit report.md and metrics.csv");
    report->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (convert->parsed()) {
            std::size_t n = 0;
            if (conv_from == "quality-raw") n = convert_quality_raw(conv_in, conv_out);
            else if (conv_from == "mbpp") n = convert_mbpp_raw(conv_in, conv_out);
            else fail(Err::ConfigError, "unknown conversion source: " + conv_from);
            std::cout << "converted " << n << " records -> " << conv_out << "\n";
            return 0;
        }

        if (config_path.empty()) fail(Err::ConfigError, "--config is required");
        RunConfig cfg = RunConfig::load(config_path);
        if (!out_override.empty()) {
            cfg.out_dir = out_override;
            cfg.cache_dir = cfg.out_dir / "cache";
        }
        if (seed_set) cfg.seed = seed_override;
        cfg.offline = offline;

        if (perturb->parsed() && !method.empty()) {
            std::string cond = method == "cross-reason" ? kCondCrossReason : method;
            cfg.conditions = {cond};
        }
        if (perturb->parsed() && k_override > 0) cfg.synonym_k = k_override;
        if (judge->parsed() && !judges_override.empty()) {
            cfg.judges.clear();
            std::istringstream iss(judges_override);
            std::string m;
            while (std::getline(iss, m, ',')) cfg.judges.push_back(trim(m));
        }
        if (recognize->parsed()) cfg.recognize_harmful_only = harmful_only;
        if ((judge->parsed() || recognize->parsed()) && !condition.empty() &&
            condition != kCondOriginal &&
            std::find(cfg.conditions.begin(), cfg.conditions.end(), condition) ==
                cfg.conditions.end()) {
            cfg.conditions.push_back(condition);
        }

        CliContext ctx = build_context(std::move(cfg));

        auto print_summary = [](const AuditSummary& s) {
            std::cout << "answers=" << s.answers << " pairs=" << s.pairs
                      << " verdicts=" << s.verdicts << " recognitions=" << s.recognitions
                      << " perturb_exclusions=" << s.perturb_exclusions
                      << " restyle_discards=" << s.restyle_discards << "\n";
        };

        if (generate->parsed()) print_summary(cmd_stage(ctx, "generate"));
        else if (pair->parsed()) print_summary(cmd_stage(ctx, "pair"));
        else if (perturb->parsed()) print_summary(cmd_stage(ctx, "perturb"));
        else if (judge->parsed()) print_summary(cmd_stage(ctx, "judge"));
        else if (recognize->parsed()) print_summary(cmd_stage(ctx, "recognize"));
        else if (audit->parsed()) print_summary(cmd_audit(ctx));
        else if (quality->parsed())
            cmd_quality_check(ctx, condition.empty() ? kCondSynonym : condition, human_csv);
        else if (report->parsed()) {
            cmd_report(ctx);
            std::cout << "wrote " << (ctx.bundle().dir / "report.md").string() << " and "
                      << (ctx.bundle().dir / "metrics.csv").string() << "\n";
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.kind == Err::ConfigError || e.kind == Err::AuthError ||
            e.kind == Err::OfflineCacheMiss)
            return 2;
        if (e.kind == Err::MissingStage) return 3;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace judgeaudit
