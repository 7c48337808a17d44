#include "judgeaudit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

namespace judgeaudit::stats {

namespace {

constexpr double kEps = 1e-14;
constexpr int kMaxIter = 500;
constexpr double kZ975 = 1.959963984540054;  // Phi^-1(0.975)

// Lentz's continued fraction for the incomplete beta.
double beta_cf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; m++) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < kMaxIter; n++) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1e300;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; i++) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double log_binom_pmf(long long k, long long n, double p) {
    const double lc = std::lgamma(static_cast<double>(n) + 1.0) -
                      std::lgamma(static_cast<double>(k) + 1.0) -
                      std::lgamma(static_cast<double>(n - k) + 1.0);
    double lp = 0.0;
    if (k > 0) lp += static_cast<double>(k) * std::log(p);
    if (n - k > 0) lp += static_cast<double>(n - k) * std::log1p(-p);
    return lc + lp;
}

}  // namespace

double regularized_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cf(a, b, x) / a;
    }
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double regularized_gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double regularized_gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double t_two_sided_p(double t, int df) {
    const double d = static_cast<double>(df);
    return regularized_beta(d / 2.0, 0.5, d / (d + t * t));
}

double chi_square_upper_p(double x, int df) {
    return regularized_gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

StatResult pearson_r(std::span<const double> x, std::span<const double> y) {
    const size_t n = x.size();
    if (n != y.size() || n < 3) fail(Err::ZeroVariance, "need paired vectors of length >= 3");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; i++) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; i++) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) fail(Err::ZeroVariance, "constant input vector");
    double r = sxy / std::sqrt(sxx * syy);
    r = std::clamp(r, -1.0, 1.0);

    StatResult res;
    res.test = StatTest::PearsonR;
    res.statistic = r;
    res.n = static_cast<int>(n);
    res.df = static_cast<int>(n) - 2;
    if (std::fabs(r) >= 1.0) {
        res.p_value = 0.0;
    } else {
        const double t = r * std::sqrt(static_cast<double>(*res.df) / (1.0 - r * r));
        res.p_value = t_two_sided_p(t, *res.df);
    }
    if (n > 3 && std::fabs(r) < 1.0) {
        // Fisher z interval
        const double z = std::atanh(r);
        const double se = 1.0 / std::sqrt(static_cast<double>(n) - 3.0);
        res.ci95 = {std::tanh(z - kZ975 * se), std::tanh(z + kZ975 * se)};
    }
    return res;
}

StatResult chi_square_2x2(const double table[2][2]) {
    const double a = table[0][0], b = table[0][1], c = table[1][0], d = table[1][1];
    if (a < 0 || b < 0 || c < 0 || d < 0) fail(Err::DegenerateMargin, "negative count");
    const double r0 = a + b, r1 = c + d, c0 = a + c, c1 = b + d;
    const double n = r0 + r1;
    if (r0 <= 0 || r1 <= 0 || c0 <= 0 || c1 <= 0)
        fail(Err::DegenerateMargin, "zero row or column margin");

    // Pearson statistic, no continuity correction, df = 1.
    double stat = 0.0;
    const double rows[2] = {r0, r1}, cols[2] = {c0, c1};
    for (int i = 0; i < 2; i++) {
        for (int j = 0; j < 2; j++) {
            const double expected = rows[i] * cols[j] / n;
            const double diff = table[i][j] - expected;
            stat += diff * diff / expected;
        }
    }
    StatResult res;
    res.test = StatTest::ChiSquare;
    res.statistic = stat;
    res.df = 1;
    res.p_value = chi_square_upper_p(stat, 1);
    res.n = static_cast<int>(n);
    return res;
}

StatResult paired_t(std::span<const double> before, std::span<const double> after) {
    const size_t n = before.size();
    if (n != after.size() || n < 2)
        fail(Err::ZeroVarianceDifferences, "need paired vectors of length >= 2");
    double mean = 0.0;
    std::vector<double> diffs(n);
    for (size_t i = 0; i < n; i++) {
        diffs[i] = after[i] - before[i];
        mean += diffs[i];
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const double d : diffs) ss += (d - mean) * (d - mean);
    const double var = ss / static_cast<double>(n - 1);
    if (var <= 0.0) fail(Err::ZeroVarianceDifferences, "differences have zero variance");
    const double se = std::sqrt(var / static_cast<double>(n));

    StatResult res;
    res.test = StatTest::PairedT;
    res.statistic = mean / se;
    res.df = static_cast<int>(n) - 1;
    res.p_value = t_two_sided_p(res.statistic, *res.df);
    res.n = static_cast<int>(n);
    return res;
}

StatResult binomial_test(long long successes, long long n, double p0) {
    if (successes < 0 || n < 0 || successes > n)
        fail(Err::EmptySelection, "invalid binomial counts");
    StatResult res;
    res.test = StatTest::Binomial;
    res.statistic = static_cast<double>(successes);
    res.n = static_cast<int>(n);
    if (n == 0) {
        res.p_value = 1.0;
        return res;
    }
    // Exact two-sided test: sum the probability of every outcome at most as
    // likely as the observed one (with a small relative slack for ties).
    const double lobs = log_binom_pmf(successes, n, p0);
    double p = 0.0;
    for (long long k = 0; k <= n; k++) {
        const double lk = log_binom_pmf(k, n, p0);
        if (lk <= lobs + 1e-9) p += std::exp(lk);
    }
    res.p_value = std::min(1.0, p);
    return res;
}

Sample quadrant_accuracy(std::span<const VerdictRow> rows, Quadrant q, const std::string& condition) {
    long long n = 0, correct = 0;
    for (const auto& r : rows) {
        if (!r.valid || r.condition != condition) continue;
        if (!r.quadrant || *r.quadrant != q) continue;
        n++;
        if (r.correct) correct++;
    }
    if (n == 0) fail(Err::EmptySelection, "no valid verdicts in quadrant " + quadrant_name(q) +
                                              " under condition " + condition);
    return {n, static_cast<double>(correct) / static_cast<double>(n)};
}

WinRates win_rates(std::span<const VerdictRow> verdicts, std::span<const PairRow> pairs,
                   const std::string& model) {
    WinRates out;
    for (const auto& p : pairs) {
        const bool is_first = p.first_author == model;
        const bool is_second = p.second_author == model;
        if (is_first == is_second) continue;  // not a pair of this model, or degenerate
        out.groundtruth.n++;
        if ((is_first && p.first_correct) || (is_second && p.second_correct))
            out.groundtruth.value += 1.0;
    }
    for (const auto& v : verdicts) {
        if (v.judge != model || !v.valid) continue;
        if (!v.quadrant || *v.quadrant == Quadrant::ThirdParty) continue;  // self-evaluation only
        out.self_estimated.n++;
        if (v.prefers_self) out.self_estimated.value += 1.0;
    }
    if (out.groundtruth.n == 0 || out.self_estimated.n == 0)
        fail(Err::EmptySelection, "no pairs or self-evaluation verdicts for " + model);
    out.groundtruth.value /= static_cast<double>(out.groundtruth.n);
    out.self_estimated.value /= static_cast<double>(out.self_estimated.n);
    return out;
}

Sample recognition_accuracy(std::span<const RecognitionRow> rows, const std::string& condition,
                            std::optional<Quadrant> quadrant) {
    long long n = 0, hits = 0;
    for (const auto& r : rows) {
        if (!r.valid || r.condition != condition) continue;  // Ambiguous excluded from n
        if (quadrant && (!r.quadrant || *r.quadrant != *quadrant)) continue;
        n++;
        if (r.is_correct) hits++;
    }
    if (n == 0) fail(Err::EmptySelection, "no valid recognition probes under " + condition);
    return {n, static_cast<double>(hits) / static_cast<double>(n)};
}

Sample preference_change(std::span<const VerdictRow> before, std::span<const VerdictRow> after) {
    std::unordered_map<std::string, const VerdictRow*> b_by_key, a_by_key;
    for (const auto& r : before) b_by_key[r.judge + "#" + r.pair_key] = &r;
    for (const auto& r : after) a_by_key[r.judge + "#" + r.pair_key] = &r;
    if (b_by_key.size() != a_by_key.size())
        fail(Err::PairMismatch, "conditions cover different pair sets");
    long long n = 0, flips = 0;
    for (const auto& [key, b] : b_by_key) {
        auto it = a_by_key.find(key);
        if (it == a_by_key.end()) fail(Err::PairMismatch, "pair missing in second condition: " + key);
        const VerdictRow* a = it->second;
        if (!b->valid || !a->valid) continue;  // only pairs valid under both conditions
        n++;
        if (b->preferred_root != a->preferred_root) flips++;
    }
    if (n == 0) fail(Err::EmptySelection, "no pairs valid under both conditions");
    return {n, static_cast<double>(flips) / static_cast<double>(n)};
}

double delta_overall_accuracy(std::span<const VerdictRow> before, std::span<const VerdictRow> after) {
    auto overall = [](std::span<const VerdictRow> rows) {
        long long n = 0, correct = 0;
        bool saw_harmful = false, saw_legit = false;
        for (const auto& r : rows) {
            if (!r.valid || !r.quadrant) continue;
            if (*r.quadrant == Quadrant::Harmful) saw_harmful = true;
            else if (*r.quadrant == Quadrant::Legitimate) saw_legit = true;
            else continue;
            n++;
            if (r.correct) correct++;
        }
        if (n == 0 || !saw_harmful || !saw_legit)
            fail(Err::EmptySelection, "need both harmful and legitimate quadrants");
        return static_cast<double>(correct) / static_cast<double>(n);
    };
    return (overall(after) - overall(before)) * 100.0;
}

Sample ambiguity_rate(std::span<const VerdictRow> rows, const std::string& judge,
                      const std::string& condition) {
    long long n = 0, ambiguous = 0;
    for (const auto& r : rows) {
        if (r.judge != judge || r.condition != condition) continue;
        n++;
        if (!r.valid) ambiguous++;
    }
    if (n == 0) fail(Err::EmptySelection, "no verdicts for judge " + judge);
    return {n, static_cast<double>(ambiguous) / static_cast<double>(n)};
}

}  // namespace judgeaudit::stats
