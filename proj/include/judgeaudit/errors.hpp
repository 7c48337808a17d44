#pragma once

#include <stdexcept>
#include <string>

namespace judgeaudit {

enum class Err {
    // core
    ComparablePair,
    AuthorBothSides,
    // providers
    AuthError,
    TransientExhausted,
    MalformedResponse,
    ExtractionFailed,
    InvalidLabel,
    InvalidVerdict,
    OfflineCacheMiss,
    // datasets
    SchemaError,
    DuplicateTaskId,
    NoTestCases,
    // perturb
    NoCandidates,
    HelperMalformed,
    WordVanished,
    ParaphraseChangedLabel,
    GenerationRefused,
    RestyleMalformed,
    CommentLost,
    SandboxUnavailable,
    DuplicateName,
    PluginContract,
    // stats
    EmptySelection,
    PairMismatch,
    ZeroVariance,
    ZeroVarianceDifferences,
    DegenerateMargin,
    // cli
    ConfigError,
    MissingStage,
};

const char* err_name(Err e);

struct Error : std::runtime_error {
    Err kind;
    Error(Err k, const std::string& msg)
        : std::runtime_error(std::string(err_name(k)) + ": " + msg), kind(k) {}
};

[[noreturn]] inline void fail(Err k, const std::string& msg) {
    throw Error(k, msg);
}

}  // namespace judgeaudit
