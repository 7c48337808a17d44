#pragma once

#include <string>
#include <vector>

#include "judgeaudit/core.hpp"
#include "judgeaudit/pipeline.hpp"
#include "judgeaudit/stats.hpp"

namespace judgeaudit {

struct ReportInputs {
    std::vector<QuestionTask> tasks;  // corpus, for generation accuracy
    std::vector<ModelAnswer> answers;
    std::vector<PairRecord> pairs;
    std::vector<JudgeVerdict> verdicts;
    std::vector<RecognitionVerdict> recognitions;
    ordered_json manifest;                 // null when absent
    std::vector<ordered_json> quality;     // quality.jsonl rows, may be empty
};

ReportInputs load_bundle(const BundlePaths& paths, std::vector<QuestionTask> tasks);

struct AssembledRows {
    std::vector<stats::VerdictRow> verdicts;
    std::vector<stats::RecognitionRow> recognitions;
    std::vector<stats::PairRow> pairs;
};

// Joins verdicts/recognitions back to answers and base pairs: resolves
// perturbation lineage roots, derives quadrants, and marks self-preference.
AssembledRows assemble_rows(const ReportInputs& in);

struct ReportArtifacts {
    std::string report_md;
    std::string metrics_csv;
};

// Every reported number is recomputed from the persisted JSONL records alone;
// output is deterministic byte-for-byte for a fixed bundle.
ReportArtifacts build_report(const ReportInputs& in);

void write_report(const BundlePaths& paths, const ReportArtifacts& artifacts);

// shared deterministic formatting
std::string fmt_pct(double v);    // 0.2678 -> "26.78%"
std::string fmt_stat(double v);   // fixed 4 decimals
std::string fmt_p(double p);      // compact scientific/fixed via %.4g

}  // namespace judgeaudit
