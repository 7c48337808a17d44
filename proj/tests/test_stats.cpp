#include <doctest.h>

#include <cmath>
#include <random>

#include "judgeaudit/stats.hpp"

using namespace judgeaudit;
using namespace judgeaudit::stats;

TEST_CASE("chi_square_2x2 reference values") {
    // expected counts are all 20; statistic sums to 4 * (10^2/20) = 20
    double table[2][2] = {{30, 10}, {10, 30}};
    const auto r = chi_square_2x2(table);
    CHECK(r.statistic == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(*r.df == 1);
    CHECK(r.p_value < 1e-4);
    CHECK(r.p_value > 0.0);

    double indep[2][2] = {{5, 5}, {5, 5}};
    CHECK(chi_square_2x2(indep).statistic == doctest::Approx(0.0));

    double degenerate[2][2] = {{0, 0}, {5, 5}};
    CHECK_THROWS_AS(chi_square_2x2(degenerate), Error);
}

TEST_CASE("chi_square_2x2 transposition invariance") {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 50; trial++) {
        double t[2][2];
        for (auto& row : t)
            for (auto& v : row) v = 1.0 + static_cast<double>(rng() % 40);
        double tt[2][2] = {{t[1][1], t[1][0]}, {t[0][1], t[0][0]}};  // swap rows and columns
        CHECK(chi_square_2x2(t).statistic ==
              doctest::Approx(chi_square_2x2(tt).statistic).epsilon(1e-12));
    }
}

TEST_CASE("paired_t reference: diffs 1,1,0,0") {
    const std::vector<double> before = {0, 0, 0, 0};
    const std::vector<double> after = {1, 1, 0, 0};
    const auto r = paired_t(before, after);
    CHECK(r.statistic == doctest::Approx(1.7321).epsilon(1e-3));
    CHECK(*r.df == 3);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value < 1.0);

    CHECK_THROWS_AS(paired_t(after, after), Error);  // zero-variance differences
}

TEST_CASE("binomial_test reference values") {
    CHECK(binomial_test(5, 10).p_value == doctest::Approx(1.0));
    // 2 * (1/2)^10
    CHECK(binomial_test(0, 10).p_value == doctest::Approx(2.0 / 1024.0).epsilon(1e-9));
    CHECK(binomial_test(10, 10).p_value == doctest::Approx(2.0 / 1024.0).epsilon(1e-9));
    // an exactly balanced large sample
    CHECK(binomial_test(1250, 2500).p_value == doctest::Approx(1.0));
    CHECK(binomial_test(0, 0).p_value == doctest::Approx(1.0));

    // against a directly-summed oracle for a few asymmetric cases
    auto oracle = [](long long k, long long n) {
        auto pmf = [&](long long i) {
            const long double lg = std::lgamma(static_cast<long double>(n + 1)) -
                                   std::lgamma(static_cast<long double>(i + 1)) -
                                   std::lgamma(static_cast<long double>(n - i + 1)) -
                                   n * std::log(2.0L);
            return std::exp(lg);
        };
        const long double obs = pmf(k);
        long double p = 0.0L;
        for (long long i = 0; i <= n; i++)
            if (pmf(i) <= obs * (1 + 1e-9L)) p += pmf(i);
        return static_cast<double>(std::min(1.0L, p));
    };
    for (const auto [k, n] : std::vector<std::pair<int, int>>{{3, 17}, {8, 31}, {20, 23}}) {
        CHECK(binomial_test(k, n).p_value == doctest::Approx(oracle(k, n)).epsilon(1e-9));
    }
}

TEST_CASE("pearson_r reference and properties") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    auto r = pearson_r(x, x);
    CHECK(r.statistic == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*r.df == 3);

    // affine invariance with positive slope
    std::vector<double> y;
    for (const double v : x) y.push_back(2.5 * v + 7.0);
    CHECK(pearson_r(x, y).statistic == doctest::Approx(1.0).epsilon(1e-12));

    // hand-computed zero correlation
    const std::vector<double> a = {1, 1, 0, 0};
    const std::vector<double> b = {1, 0, 1, 0};
    CHECK(pearson_r(a, b).statistic == doctest::Approx(0.0).epsilon(1e-12));

    const std::vector<double> constant = {2, 2, 2, 2, 2};
    CHECK_THROWS_AS(pearson_r(constant, x), Error);
}

TEST_CASE("pearson_r p-value and CI behave at scale") {
    // strong binary correlation on a large synthetic sample: p tiny, CI tight
    std::mt19937 rng(17);
    std::vector<double> x, y;
    for (int i = 0; i < 6669; i++) {
        const double xi = rng() % 2 ? 1.0 : 0.0;
        const bool flip = (rng() % 100) < 18;
        x.push_back(xi);
        y.push_back(flip ? 1.0 - xi : xi);
    }
    const auto r = pearson_r(x, y);
    CHECK(*r.df == 6667);
    CHECK(r.statistic > 0.5);
    CHECK(r.p_value < 1e-6);
    REQUIRE(r.ci95.has_value());
    CHECK(r.ci95->first < r.statistic);
    CHECK(r.ci95->second > r.statistic);
    CHECK(r.ci95->second - r.ci95->first < 0.05);
}

TEST_CASE("special functions match known values") {
    // regularized beta at symmetric points
    CHECK(regularized_beta(2, 2, 0.5) == doctest::Approx(0.5).epsilon(1e-10));
    // chi2(1) upper tail at 3.841459 is ~0.05
    CHECK(chi_square_upper_p(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-6));
    // t distribution: two-sided p of t=2.776445 with df=4 is ~0.05
    CHECK(t_two_sided_p(2.7764451051977987, 4) == doctest::Approx(0.05).epsilon(1e-6));
    // gamma: P + Q = 1
    for (double a : {0.5, 1.0, 3.5}) {
        for (double xv : {0.1, 1.0, 10.0}) {
            CHECK(regularized_gamma_p(a, xv) + regularized_gamma_q(a, xv) ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

namespace {

VerdictRow vrow(const std::string& judge, const std::string& cond, const std::string& key,
                std::optional<Quadrant> q, bool valid, bool correct, bool self,
                const std::string& pref) {
    VerdictRow r;
    r.judge = judge;
    r.condition = cond;
    r.pair_key = key;
    r.quadrant = q;
    r.valid = valid;
    r.correct = correct;
    r.prefers_self = self;
    r.preferred_root = pref;
    return r;
}

}  // namespace

TEST_CASE("quadrant_accuracy counts by hand") {
    std::vector<VerdictRow> rows;
    // 3 correct of 4 in the harmful quadrant
    rows.push_back(vrow("j", "original", "p1", Quadrant::Harmful, true, true, false, "a"));
    rows.push_back(vrow("j", "original", "p2", Quadrant::Harmful, true, true, false, "b"));
    rows.push_back(vrow("j", "original", "p3", Quadrant::Harmful, true, true, false, "c"));
    rows.push_back(vrow("j", "original", "p4", Quadrant::Harmful, true, false, true, "d"));
    rows.push_back(vrow("j", "original", "p5", Quadrant::Harmful, false, false, false, ""));  // ambiguous
    rows.push_back(vrow("j", "original", "p6", Quadrant::Legitimate, true, false, false, "e"));

    const auto s = quadrant_accuracy(rows, Quadrant::Harmful, "original");
    CHECK(s.n == 4);
    CHECK(s.value == doctest::Approx(0.75));

    CHECK_THROWS_AS(quadrant_accuracy(rows, Quadrant::ThirdParty, "original"), Error);
}

TEST_CASE("preference_change on a hand-built fixture") {
    std::vector<VerdictRow> before, after;
    for (int i = 0; i < 10; i++) {
        const std::string key = "p" + std::to_string(i);
        before.push_back(vrow("j", "original", key, Quadrant::Harmful, true, false, true, "own"));
        // 2 flips among 10 common pairs
        const std::string pref = i < 2 ? "other" : "own";
        after.push_back(vrow("j", "synonym", key, Quadrant::Harmful, true, i < 2, i >= 2, pref));
    }
    const auto s = preference_change(before, after);
    CHECK(s.n == 10);
    CHECK(s.value == doctest::Approx(0.2));

    // symmetric in its arguments
    const auto s2 = preference_change(after, before);
    CHECK(s2.value == doctest::Approx(s.value));

    // identical sets change nothing
    CHECK(preference_change(before, before).value == doctest::Approx(0.0));

    // mismatched pair sets
    auto extra = after;
    extra.push_back(vrow("j", "synonym", "p99", Quadrant::Harmful, true, true, false, "x"));
    CHECK_THROWS_AS(preference_change(before, extra), Error);
}

TEST_CASE("delta_overall_accuracy identity and signs") {
    std::vector<VerdictRow> before, after;
    before.push_back(vrow("j", "original", "p1", Quadrant::Harmful, true, false, true, "a"));
    before.push_back(vrow("j", "original", "p2", Quadrant::Legitimate, true, true, true, "b"));
    after.push_back(vrow("j", "synonym", "p1", Quadrant::Harmful, true, true, false, "c"));
    after.push_back(vrow("j", "synonym", "p2", Quadrant::Legitimate, true, true, true, "d"));
    CHECK(delta_overall_accuracy(before, after) == doctest::Approx(50.0));
    CHECK(delta_overall_accuracy(before, before) == doctest::Approx(0.0));
}

TEST_CASE("win_rates on a scripted-like fixture") {
    std::vector<PairRow> pairs;
    std::vector<VerdictRow> verdicts;
    // model "m" wins 2 of 4 pairs by groundtruth
    for (int i = 0; i < 4; i++) {
        PairRow p;
        p.pair_key = "p" + std::to_string(i);
        p.first_author = "m";
        p.second_author = "x";
        p.first_correct = i < 2;
        p.second_correct = !(i < 2);
        pairs.push_back(p);
        // as a judge it always prefers itself
        verdicts.push_back(vrow("m", "original", p.pair_key,
                                i < 2 ? Quadrant::Legitimate : Quadrant::Harmful, true, i < 2,
                                true, "own"));
    }
    const auto wr = win_rates(verdicts, pairs, "m");
    CHECK(wr.groundtruth.value == doctest::Approx(0.5));
    CHECK(wr.self_estimated.value == doctest::Approx(1.0));  // belief-only judge
}

TEST_CASE("metric brute-force oracle equivalence on randomized fixtures") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 100; trial++) {
        std::vector<VerdictRow> rows;
        const int n = 1 + static_cast<int>(rng() % 50);
        for (int i = 0; i < n; i++) {
            const int qsel = rng() % 3;
            const Quadrant q = qsel == 0   ? Quadrant::Harmful
                               : qsel == 1 ? Quadrant::Legitimate
                                           : Quadrant::ThirdParty;
            rows.push_back(vrow("j", rng() % 2 ? "original" : "synonym", "p" + std::to_string(i),
                                q, rng() % 4 != 0, rng() % 2 == 0, rng() % 2 == 0,
                                rng() % 2 ? "a" : "b"));
        }
        // independent recount
        long long cnt = 0, correct = 0;
        for (const auto& r : rows) {
            if (r.valid && r.condition == "original" && r.quadrant &&
                *r.quadrant == Quadrant::Harmful) {
                cnt++;
                if (r.correct) correct++;
            }
        }
        if (cnt == 0) {
            CHECK_THROWS_AS(quadrant_accuracy(rows, Quadrant::Harmful, "original"), Error);
        } else {
            const auto s = quadrant_accuracy(rows, Quadrant::Harmful, "original");
            CHECK(s.n == cnt);
            CHECK(s.value ==
                  doctest::Approx(static_cast<double>(correct) / cnt).epsilon(1e-12));
        }
    }
}
