#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "judgeaudit/datasets.hpp"
#include "judgeaudit/pipeline.hpp"
#include "judgeaudit/report.hpp"
#include "judgeaudit/scripted.hpp"

namespace judgeaudit {

// Run configuration file (JSON). Paths are resolved relative to the process
// working directory.
struct RunConfig {
    std::filesystem::path corpus_path;
    TaskKind corpus_kind = TaskKind::MultipleChoice;
    std::optional<SubsampleSpec> subsample;
    std::filesystem::path providers_path;
    std::vector<std::string> generators;
    std::vector<std::string> judges;
    std::string helper_model;
    std::string restyler_model;
    std::string quality_proxy;
    std::vector<std::string> conditions;
    int synonym_k = 2;
    int spelling_words = 2;
    bool recognize_harmful_only = false;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;
    std::filesystem::path cache_dir;  // defaults to <out>/cache
    int workers = 8;
    bool offline = false;
    std::map<std::string, std::string> prompt_overrides;  // role -> template file

    static RunConfig load(const std::filesystem::path& path);
};

// Everything a command needs, built once from the config.
struct CliContext {
    RunConfig config;
    std::vector<QuestionTask> tasks;
    PromptSet prompts;
    std::unique_ptr<ResponseCache> cache;
    ProviderHub hub;
    Sandbox sandbox;
    ObfuscatorRegistry registry;
    std::shared_ptr<ScriptedProvider> scripted;  // null when no scripted provider configured

    RunPlan plan() const;
    BundlePaths bundle() const { return BundlePaths{config.out_dir}; }
};

CliContext build_context(RunConfig config);

// Subcommand bodies; throw Error on failure (the binary maps kinds to exit
// codes: ConfigError/AuthError -> 2, MissingStage -> 3, anything else -> 1).
AuditSummary cmd_stage(CliContext& ctx, const std::string& stage);  // generate/pair/perturb/judge/recognize
AuditSummary cmd_audit(CliContext& ctx);
void cmd_report(CliContext& ctx);
void cmd_quality_check(CliContext& ctx, const std::string& condition,
                       const std::filesystem::path& human_csv = {});

int run_cli(int argc, char** argv);

}  // namespace judgeaudit
