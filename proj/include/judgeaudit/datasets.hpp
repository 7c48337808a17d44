#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "judgeaudit/core.hpp"

namespace judgeaudit {

struct SubsampleSpec {
    std::uint64_t seed = 0;
    std::size_t n = 0;
};

struct CorpusManifest {
    std::string corpus_id;
    TaskKind kind = TaskKind::MultipleChoice;
    std::string source_path;
    std::size_t task_count = 0;
    std::optional<SubsampleSpec> subsample;

    ordered_json to_json() const;
};

// JSONL projections of the upstream datasets. QA records carry passage,
// question, options[] and gold_label; code records carry question (the
// problem statement) and tests[].
std::vector<QuestionTask> load_quality(const std::filesystem::path& path);
std::vector<QuestionTask> load_code_corpus(const std::filesystem::path& path);

std::vector<QuestionTask> load_corpus(const std::filesystem::path& path, TaskKind kind);

// Deterministic subsample: same (seed, n) selects the same task ids.
std::vector<QuestionTask> subsample_tasks(std::vector<QuestionTask> tasks, const SubsampleSpec& spec);

CorpusManifest make_manifest(const std::filesystem::path& path, TaskKind kind,
                             const std::vector<QuestionTask>& tasks,
                             std::optional<SubsampleSpec> subsample = std::nullopt);

// Converters from the upstream formats into our JSONL projection.
// QuALITY: one JSON object per line with article, questions[] (options are
// 1-indexed by gold_label). MBPP-style: text/prompt + test_list[] of asserts.
std::size_t convert_quality_raw(const std::filesystem::path& in, const std::filesystem::path& out);
std::size_t convert_mbpp_raw(const std::filesystem::path& in, const std::filesystem::path& out);

}  // namespace judgeaudit
