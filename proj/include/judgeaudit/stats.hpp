#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "judgeaudit/core.hpp"

namespace judgeaudit::stats {

// --- special functions (series / continued-fraction, ~1e-10 accurate) ---

// Regularized incomplete beta I_x(a, b).
double regularized_beta(double a, double b, double x);
// Regularized lower incomplete gamma P(a, x) and upper Q(a, x) = 1 - P.
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Two-sided p for Student's t with df degrees of freedom.
double t_two_sided_p(double t, int df);
// Upper tail of the chi-square distribution.
double chi_square_upper_p(double x, int df);

// --- hypothesis tests ---

StatResult pearson_r(std::span<const double> x, std::span<const double> y);
StatResult chi_square_2x2(const double table[2][2]);
StatResult paired_t(std::span<const double> before, std::span<const double> after);
StatResult binomial_test(long long successes, long long n, double p0 = 0.5);

// --- judged-record metrics ---

// One non-persisted row per judge decision, assembled from the bundle by the
// report layer (or built directly in tests).
struct VerdictRow {
    std::string judge;
    std::string condition;
    std::string pair_key;        // identity of the underlying comparison across conditions
    std::optional<Quadrant> quadrant;
    bool valid = false;          // consistent (non-ambiguous) decision
    bool correct = false;        // preferred the objectively correct side
    bool prefers_self = false;   // preferred the judge-authored side
    std::string preferred_root;  // preferred answer id resolved to its original lineage root
};

struct RecognitionRow {
    std::string judge;
    std::string condition;
    std::string pair_key;
    std::optional<Quadrant> quadrant;
    bool valid = false;
    bool is_correct = false;      // picked the side it authored
    bool picked_agreeing = false; // picked the side whose label matches its own answer
};

struct PairRow {
    std::string pair_key;
    std::string first_author;
    std::string second_author;
    bool first_correct = false;
    bool second_correct = false;
};

struct Sample {
    long long n = 0;
    double value = 0.0;  // accuracy or rate in [0,1]
};

// Accuracy over valid verdicts filtered to one quadrant and condition.
Sample quadrant_accuracy(std::span<const VerdictRow> rows, Quadrant q, const std::string& condition);

// Groundtruth win rate (fraction of the model's non-comparable pairs where its
// answer is the correct one) vs self-estimated win rate (fraction of the
// model's own valid self-evaluation verdicts preferring its own answer).
struct WinRates {
    Sample groundtruth;
    Sample self_estimated;
};
WinRates win_rates(std::span<const VerdictRow> verdicts, std::span<const PairRow> pairs,
                   const std::string& model);

// Accuracy over valid recognition probes, optionally restricted to a quadrant.
Sample recognition_accuracy(std::span<const RecognitionRow> rows, const std::string& condition,
                            std::optional<Quadrant> quadrant = std::nullopt);

// Fraction of pairs, valid under both conditions, whose preferred answer
// (lineage-root) differs. Symmetric in its arguments. Throws PairMismatch when
// the two sets cover different pairs.
Sample preference_change(std::span<const VerdictRow> before, std::span<const VerdictRow> after);

// Accuracy over harmful+legitimate after minus before, in percentage points.
double delta_overall_accuracy(std::span<const VerdictRow> before, std::span<const VerdictRow> after);

// Fraction of valid verdicts that are ambiguous is reported separately: the
// rate of ambiguous outcomes among all attempted decisions.
Sample ambiguity_rate(std::span<const VerdictRow> rows, const std::string& judge,
                      const std::string& condition);

}  // namespace judgeaudit::stats
