#include <doctest.h>

#include <random>
#include <set>

#include "judgeaudit/core.hpp"
#include "judgeaudit/util.hpp"

using namespace judgeaudit;

namespace {

QuestionTask make_task() {
    QuestionTask t;
    t.task_id = "t1";
    t.kind = TaskKind::MultipleChoice;
    t.passage = "The event lasted ten hours according to the record.";
    t.question = "How long did the event last?";
    t.options = {{"A", "two hours"}, {"B", "ten hours"}, {"C", "a day"}, {"D", "a week"}};
    t.groundtruth_label = "B";
    return t;
}

ModelAnswer make_answer(const std::string& model, const std::string& label,
                        const std::string& reasoning = "Because the text says so.") {
    ModelAnswer a;
    a.task_id = "t1";
    a.author_model = model;
    a.kind = TaskKind::MultipleChoice;
    a.label_choice = label;
    a.reasoning = reasoning;
    return finalize_answer(std::move(a));
}

AnswerPair make_pair(const ModelAnswer& first, const ModelAnswer& second, bool fc, bool sc) {
    AnswerPair p;
    p.task_id = "t1";
    p.first = first;
    p.second = second;
    p.first_correct = fc;
    p.second_correct = sc;
    return p;
}

}  // namespace

TEST_CASE("classify_quadrant covers the three defined cases") {
    const auto own_wrong = make_answer("judge", "A");
    const auto rival_right = make_answer("rival", "B");

    // judge authored the wrong side, competitor is right
    auto p = make_pair(own_wrong, rival_right, false, true);
    CHECK(classify_quadrant(p, "judge") == Quadrant::Harmful);

    // judge authored the correct side
    auto p2 = make_pair(rival_right, own_wrong, true, false);
    CHECK(classify_quadrant(p2, "rival") == Quadrant::Legitimate);

    // judge authored neither side
    CHECK(classify_quadrant(p, "outsider") == Quadrant::ThirdParty);
}

TEST_CASE("classify_quadrant error cases") {
    const auto a = make_answer("m1", "B");
    const auto b = make_answer("m2", "B");
    auto comparable = make_pair(a, b, true, true);
    CHECK_THROWS_AS(classify_quadrant(comparable, "m1"), Error);

    auto both_sides = make_pair(make_answer("m1", "A"), make_answer("m1", "B"), false, true);
    try {
        classify_quadrant(both_sides, "m1");
        FAIL("expected AuthorBothSides");
    } catch (const Error& e) {
        CHECK(e.kind == Err::AuthorBothSides);
    }
}

TEST_CASE("resolve_verdict truth table") {
    CHECK(resolve_verdict(RawChoice::First, RawChoice::Second) == Preferred::First);
    CHECK(resolve_verdict(RawChoice::Second, RawChoice::First) == Preferred::Second);
    CHECK(resolve_verdict(RawChoice::First, RawChoice::First) == Preferred::Ambiguous);
    CHECK(resolve_verdict(RawChoice::Second, RawChoice::Second) == Preferred::Ambiguous);
}

TEST_CASE("swap invariance: pre-exchanging the sides keeps the preferred answer") {
    // If the pair is stored swapped, the raw queries arrive swapped too; the
    // resolved underlying answer must be the same one.
    std::mt19937 rng(7);
    for (int i = 0; i < 200; i++) {
        const RawChoice a = rng() % 2 ? RawChoice::First : RawChoice::Second;
        const RawChoice b = rng() % 2 ? RawChoice::First : RawChoice::Second;
        const Preferred direct = resolve_verdict(a, b);
        // swapped presentation: query_a sees (second, first) -> it is query_b
        const Preferred swapped = resolve_verdict(b, a);
        if (direct == Preferred::Ambiguous) {
            CHECK(swapped == Preferred::Ambiguous);
        } else {
            CHECK(swapped != Preferred::Ambiguous);
            // First under the original layout is Second under the swapped one
            CHECK(((direct == Preferred::First) == (swapped == Preferred::Second)));
        }
    }
}

TEST_CASE("quadrant partition: harmful and legitimate cover all self-eval pairs disjointly") {
    std::mt19937 rng(11);
    for (int i = 0; i < 100; i++) {
        const bool own_correct = rng() % 2 == 0;
        const auto own = make_answer("judge", own_correct ? "B" : "A");
        const auto other = make_answer("rival", own_correct ? "A" : "B");
        const auto p = make_pair(own, other, own_correct, !own_correct);
        const Quadrant q = classify_quadrant(p, "judge");
        CHECK(q != Quadrant::ThirdParty);
        CHECK(((q == Quadrant::Harmful) != (q == Quadrant::Legitimate)));
        CHECK((q == Quadrant::Legitimate) == own_correct);
    }
}

TEST_CASE("answer_id is stable and normalizes line endings") {
    auto a = make_answer("m1", "B", "line one\nline two");
    auto b = make_answer("m1", "B", "line one\r\nline two");
    CHECK(a.answer_id == b.answer_id);
    CHECK(a.answer_id == compute_answer_id(a));

    auto c = make_answer("m1", "B", "line one\nline two!");
    CHECK(c.answer_id != a.answer_id);

    // lineage participates in the id
    ModelAnswer d = a;
    d.lineage = Lineage::SynonymReplaced;
    d.parent_answer_id = a.answer_id;
    CHECK(compute_answer_id(d) != a.answer_id);
}

TEST_CASE("ModelAnswer invariants") {
    ModelAnswer a;
    a.task_id = "t1";
    a.author_model = "m";
    a.kind = TaskKind::MultipleChoice;
    a.label_choice = "A";
    a.reasoning = "r";
    a.lineage = Lineage::SynonymReplaced;  // perturbed lineage without a parent
    CHECK_THROWS_AS(finalize_answer(a), Error);

    a.lineage = Lineage::Original;
    a.parent_answer_id = "x";  // original with a parent
    CHECK_THROWS_AS(finalize_answer(a), Error);

    a.parent_answer_id.clear();
    CHECK_NOTHROW(finalize_answer(a));
}

TEST_CASE("record schemas round-trip") {
    const auto task = make_task();
    CHECK(task_from_json(task_to_json(task)).question == task.question);

    auto ans = make_answer("m1", "B");
    const auto back = answer_from_json(answer_to_json(ans));
    CHECK(back.answer_id == ans.answer_id);
    CHECK(back.label_choice == "B");
    CHECK(answer_to_json(back) == answer_to_json(ans));

    JudgeVerdict v;
    v.judge_model = "j";
    v.task_id = "t1";
    v.first_answer_id = "a1";
    v.second_answer_id = "a2";
    v.query_a = RawChoice::First;
    v.query_b = RawChoice::Second;
    v.outcome = Preferred::First;
    v.preferred_answer_id = "a1";
    v.correct = true;
    const auto vj = verdict_to_json(v);
    CHECK(vj.at("v") == 1);
    const auto vback = verdict_from_json(vj);
    CHECK(vback.outcome == Preferred::First);
    CHECK(vback.correct.value() == true);
    CHECK(verdict_to_json(vback) == vj);

    RecognitionVerdict r;
    r.judge_model = "j";
    r.task_id = "t1";
    r.first_answer_id = "a1";
    r.second_answer_id = "a2";
    r.query_a = RawChoice::First;
    r.query_b = RawChoice::First;
    const auto rj = recognition_to_json(r);
    CHECK(rj.at("picked").is_null());
    const auto rback = recognition_from_json(rj);
    CHECK_FALSE(rback.picked_answer_id.has_value());
    CHECK(recognition_to_json(rback) == rj);
}

TEST_CASE("jsonl io round-trips and skips blank lines") {
    const auto dir = std::filesystem::temp_directory_path() / "judgeaudit-test-core";
    std::filesystem::create_directories(dir);
    const auto path = dir / "records.jsonl";
    std::filesystem::remove(path);
    append_jsonl(path, ordered_json{{"a", 1}});
    append_jsonl(path, ordered_json{{"b", 2}});
    auto recs = read_jsonl(path);
    REQUIRE(recs.size() == 2);
    CHECK(recs[1].at("b") == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("stopword list is versioned by hash") {
    CHECK(is_stopword("the"));
    CHECK(is_stopword("The"));
    CHECK_FALSE(is_stopword("passage"));
    CHECK(stopword_list_hash().size() == 64);
}

TEST_CASE("token helpers") {
    CHECK(contains_token("the lasted, hours", "lasted"));
    CHECK(contains_token("The Lasted hours", "lasted"));
    CHECK_FALSE(contains_token("lastedlong hours", "lasted"));
    CHECK(strip_punct("(word).") == "word");
    CHECK(normalize_newlines("a\r\nb\rc") == "a\nb\nc");
}
