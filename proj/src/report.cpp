#include "judgeaudit/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

namespace {

using stats::PairRow;
using stats::RecognitionRow;
using stats::Sample;
using stats::VerdictRow;

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace

std::string fmt_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
    return buf;
}

std::string fmt_stat(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string fmt_p(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", p);
    return buf;
}

ReportInputs load_bundle(const BundlePaths& paths, std::vector<QuestionTask> tasks) {
    ReportInputs in;
    in.tasks = std::move(tasks);
    if (!std::filesystem::exists(paths.answers()))
        fail(Err::MissingStage, "answers.jsonl missing in " + paths.dir.string());
    in.answers = load_answers_file(paths.answers());
    if (!std::filesystem::exists(paths.pairs()))
        fail(Err::MissingStage, "pairs.jsonl missing in " + paths.dir.string());
    in.pairs = load_pairs_file(paths.pairs());
    if (!std::filesystem::exists(paths.verdicts()))
        fail(Err::MissingStage, "verdicts.jsonl missing in " + paths.dir.string());
    in.verdicts = load_verdicts_file(paths.verdicts());
    if (std::filesystem::exists(paths.recognitions()))
        in.recognitions = load_recognitions_file(paths.recognitions());
    if (std::filesystem::exists(paths.manifest()))
        in.manifest = ordered_json::parse(read_file(paths.manifest()));
    if (std::filesystem::exists(paths.quality())) in.quality = read_jsonl(paths.quality());
    return in;
}

namespace {

struct JoinContext {
    std::unordered_map<std::string, const ModelAnswer*> answers_by_id;
    // base pair lookup keyed by task + the two root answer ids (both orders)
    std::unordered_map<std::string, const PairRecord*> pair_by_roots;
    std::unordered_map<std::string, std::string> own_label;  // model|task -> original label

    explicit JoinContext(const ReportInputs& in) {
        for (const auto& a : in.answers) answers_by_id[a.answer_id] = &a;
        for (const auto& p : in.pairs) {
            pair_by_roots[p.task_id + "|" + p.first_answer_id + "|" + p.second_answer_id] = &p;
            pair_by_roots[p.task_id + "|" + p.second_answer_id + "|" + p.first_answer_id] = &p;
        }
        for (const auto& a : in.answers) {
            if (a.lineage == Lineage::Original && a.kind == TaskKind::MultipleChoice)
                own_label[a.author_model + "|" + a.task_id] = a.label_choice;
        }
    }

    std::string root_of(const std::string& answer_id) const {
        std::string id = answer_id;
        for (int hops = 0; hops < 16; hops++) {
            auto it = answers_by_id.find(id);
            if (it == answers_by_id.end() || it->second->parent_answer_id.empty()) return id;
            id = it->second->parent_answer_id;
        }
        return id;
    }

    const ModelAnswer* answer(const std::string& id) const {
        auto it = answers_by_id.find(id);
        return it == answers_by_id.end() ? nullptr : it->second;
    }
};

std::string base_pair_key(const std::string& task, const std::string& author_a,
                          const std::string& author_b) {
    std::string a = author_a, b = author_b;
    if (a > b) std::swap(a, b);
    return task + "|" + a + "|" + b;
}

}  // namespace

AssembledRows assemble_rows(const ReportInputs& in) {
    AssembledRows rows;
    const JoinContext ctx(in);

    for (const auto& p : in.pairs) {
        PairRow r;
        r.pair_key = base_pair_key(p.task_id, p.first_author, p.second_author);
        r.first_author = p.first_author;
        r.second_author = p.second_author;
        r.first_correct = p.first_correct;
        r.second_correct = p.second_correct;
        rows.pairs.push_back(std::move(r));
    }

    for (const auto& v : in.verdicts) {
        const ModelAnswer* first = ctx.answer(v.first_answer_id);
        const ModelAnswer* second = ctx.answer(v.second_answer_id);
        if (!first || !second) continue;  // bundle pruned; skip dangling rows
        const std::string root_first = ctx.root_of(v.first_answer_id);
        const std::string root_second = ctx.root_of(v.second_answer_id);
        auto pit = ctx.pair_by_roots.find(v.task_id + "|" + root_first + "|" + root_second);
        if (pit == ctx.pair_by_roots.end()) continue;
        const PairRecord& base = *pit->second;

        VerdictRow r;
        r.judge = v.judge_model;
        r.condition = v.condition;
        r.pair_key = base_pair_key(v.task_id, first->author_model, second->author_model);
        const bool jf = first->author_model == v.judge_model;
        const bool js = second->author_model == v.judge_model;
        const bool first_correct =
            base.first_answer_id == root_first ? base.first_correct : base.second_correct;
        const bool second_correct =
            base.first_answer_id == root_second ? base.first_correct : base.second_correct;
        if (jf && js) continue;  // malformed; a judge never authors both sides
        if (!jf && !js) r.quadrant = Quadrant::ThirdParty;
        else r.quadrant = (jf ? first_correct : second_correct) ? Quadrant::Legitimate
                                                                : Quadrant::Harmful;
        r.valid = v.outcome != Preferred::Ambiguous;
        if (r.valid) {
            const bool prefers_first = v.outcome == Preferred::First;
            r.correct = v.correct.value_or(prefers_first ? first_correct : second_correct);
            r.prefers_self = prefers_first ? jf : js;
            r.preferred_root = prefers_first ? root_first : root_second;
        }
        rows.verdicts.push_back(std::move(r));
    }

    for (const auto& v : in.recognitions) {
        const ModelAnswer* first = ctx.answer(v.first_answer_id);
        const ModelAnswer* second = ctx.answer(v.second_answer_id);
        if (!first || !second) continue;
        const std::string root_first = ctx.root_of(v.first_answer_id);
        const std::string root_second = ctx.root_of(v.second_answer_id);
        auto pit = ctx.pair_by_roots.find(v.task_id + "|" + root_first + "|" + root_second);
        if (pit == ctx.pair_by_roots.end()) continue;
        const PairRecord& base = *pit->second;

        RecognitionRow r;
        r.judge = v.judge_model;
        r.condition = v.condition;
        r.pair_key = base_pair_key(v.task_id, first->author_model, second->author_model);
        const bool jf = first->author_model == v.judge_model;
        const bool js = second->author_model == v.judge_model;
        if (jf == js) continue;
        const bool first_correct =
            base.first_answer_id == root_first ? base.first_correct : base.second_correct;
        const bool second_correct =
            base.first_answer_id == root_second ? base.first_correct : base.second_correct;
        r.quadrant = (jf ? first_correct : second_correct) ? Quadrant::Legitimate
                                                           : Quadrant::Harmful;
        r.valid = v.picked_answer_id.has_value();
        if (r.valid) {
            r.is_correct = v.is_correct.value_or(false);
            const ModelAnswer* picked =
                *v.picked_answer_id == v.first_answer_id ? first : second;
            auto ol = ctx.own_label.find(v.judge_model + "|" + v.task_id);
            r.picked_agreeing = ol != ctx.own_label.end() &&
                                picked->kind == TaskKind::MultipleChoice &&
                                picked->label_choice == ol->second;
        }
        rows.recognitions.push_back(std::move(r));
    }
    return rows;
}

namespace {

struct CsvSink {
    std::string buf = "metric,judge,condition,quadrant,n,value\n";
    void add(const std::string& metric, const std::string& judge, const std::string& condition,
             const std::string& quadrant, long long n, double value) {
        char num[40];
        std::snprintf(num, sizeof num, "%.6f", value);
        buf += csv_escape(metric) + "," + csv_escape(judge) + "," + csv_escape(condition) + "," +
               csv_escape(quadrant) + "," + std::to_string(n) + "," + num + "\n";
    }
};

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

ReportArtifacts build_report(const ReportInputs& in) {
    const AssembledRows rows = assemble_rows(in);
    std::ostringstream md;
    CsvSink csv;

    std::vector<std::string> judges, conditions;
    for (const auto& r : rows.verdicts) {
        judges.push_back(r.judge);
        conditions.push_back(r.condition);
    }
    judges = sorted_unique(std::move(judges));
    conditions = sorted_unique(std::move(conditions));
    // original first, then the rest alphabetically
    std::stable_partition(conditions.begin(), conditions.end(),
                          [](const std::string& c) { return c == kCondOriginal; });

    std::vector<std::string> models;
    for (const auto& p : rows.pairs) {
        models.push_back(p.first_author);
        models.push_back(p.second_author);
    }
    models = sorted_unique(std::move(models));

    md << "# Self-preference audit report\n\n";
    if (!in.manifest.is_null()) {
        md << "corpus: " << in.manifest.value("corpus_id", std::string("?"))
           << "  \nseed: " << in.manifest.value("seed", 0ULL) << "\n\n";
    }

    // --- generation accuracy over the corpus ---
    if (!in.tasks.empty()) {
        std::map<std::string, std::pair<long long, long long>> acc;  // model -> (n, correct)
        std::map<std::string, const QuestionTask*> tasks_by_id;
        for (const auto& t : in.tasks) tasks_by_id[t.task_id] = &t;
        for (const auto& a : in.answers) {
            if (a.lineage != Lineage::Original || a.kind != TaskKind::MultipleChoice) continue;
            auto it = tasks_by_id.find(a.task_id);
            if (it == tasks_by_id.end()) continue;
            auto& slot = acc[a.author_model];
            slot.first++;
            if (a.label_choice == it->second->groundtruth_label) slot.second++;
        }
        if (!acc.empty()) {
            md << "## Generation accuracy\n\n| model | n | accuracy |\n|---|---|---|\n";
            for (const auto& [model, slot] : acc) {
                const double v = slot.first ? static_cast<double>(slot.second) / slot.first : 0.0;
                md << "| " << model << " | " << slot.first << " | " << fmt_pct(v) << " |\n";
                csv.add("generation_accuracy", model, "original", "", slot.first, v);
            }
            md << "\n";
        }
    }

    // --- ambiguity rates ---
    md << "## Ambiguity rates\n\n| judge | condition | n | ambiguous |\n|---|---|---|---|\n";
    for (const auto& judge : judges) {
        for (const auto& cond : conditions) {
            try {
                const Sample s = stats::ambiguity_rate(rows.verdicts, judge, cond);
                md << "| " << judge << " | " << cond << " | " << s.n << " | " << fmt_pct(s.value)
                   << " |\n";
                csv.add("ambiguity_rate", judge, cond, "", s.n, s.value);
            } catch (const Error&) {
            }
        }
    }
    md << "\n";

    // --- quadrant accuracy table ---
    md << "## Judge accuracy by quadrant\n\n| judge | condition | quadrant | n | accuracy "
          "|\n|---|---|---|---|---|\n";
    for (const auto& judge : judges) {
        for (const auto& cond : conditions) {
            for (const Quadrant q :
                 {Quadrant::Harmful, Quadrant::Legitimate, Quadrant::ThirdParty}) {
                std::vector<VerdictRow> mine;
                for (const auto& r : rows.verdicts)
                    if (r.judge == judge) mine.push_back(r);
                try {
                    const Sample s = stats::quadrant_accuracy(mine, q, cond);
                    md << "| " << judge << " | " << cond << " | " << quadrant_name(q) << " | "
                       << s.n << " | " << fmt_pct(s.value) << " |\n";
                    csv.add("quadrant_accuracy", judge, cond, quadrant_name(q), s.n, s.value);
                } catch (const Error&) {
                }
            }
        }
    }
    md << "\n";

    // --- win rates (original condition) ---
    md << "## Win rates\n\n| model | groundtruth | self-estimated | inflation "
          "|\n|---|---|---|---|\n";
    std::vector<VerdictRow> original_rows;
    for (const auto& r : rows.verdicts)
        if (r.condition == kCondOriginal) original_rows.push_back(r);
    for (const auto& model : models) {
        try {
            const auto wr = stats::win_rates(original_rows, rows.pairs, model);
            md << "| " << model << " | " << fmt_pct(wr.groundtruth.value) << " | "
               << fmt_pct(wr.self_estimated.value) << " | "
               << fmt_pct(wr.self_estimated.value - wr.groundtruth.value) << " |\n";
            csv.add("win_rate_groundtruth", model, "original", "", wr.groundtruth.n,
                    wr.groundtruth.value);
            csv.add("win_rate_self_estimated", model, "original", "", wr.self_estimated.n,
                    wr.self_estimated.value);
        } catch (const Error&) {
        }
    }
    md << "\n";

    // --- recognition accuracy ---
    if (!rows.recognitions.empty()) {
        md << "## Self-recognition accuracy\n\n| judge | condition | subset | n | accuracy "
              "|\n|---|---|---|---|---|\n";
        for (const auto& judge : judges) {
            std::vector<RecognitionRow> mine;
            for (const auto& r : rows.recognitions)
                if (r.judge == judge) mine.push_back(r);
            for (const auto& cond : conditions) {
                try {
                    const Sample all = stats::recognition_accuracy(mine, cond);
                    md << "| " << judge << " | " << cond << " | overall | " << all.n << " | "
                       << fmt_pct(all.value) << " |\n";
                    csv.add("recognition_accuracy", judge, cond, "overall", all.n, all.value);
                } catch (const Error&) {
                }
                try {
                    const Sample harm =
                        stats::recognition_accuracy(mine, cond, Quadrant::Harmful);
                    md << "| " << judge << " | " << cond << " | harmful | " << harm.n << " | "
                       << fmt_pct(harm.value) << " |\n";
                    csv.add("recognition_accuracy", judge, cond, "harmful", harm.n, harm.value);
                } catch (const Error&) {
                }
            }
        }
        md << "\n";
    }

    // --- preference change vs original ---
    md << "## Preference change vs original\n\n| judge | condition | self-eval | third-party | "
          "ratio |\n|---|---|---|---|---|\n";
    for (const auto& judge : judges) {
        for (const auto& cond : conditions) {
            if (cond == kCondOriginal) continue;
            auto select = [&](const std::string& c, bool self_eval) {
                std::vector<VerdictRow> out;
                for (const auto& r : rows.verdicts) {
                    if (r.judge != judge || r.condition != c || !r.quadrant) continue;
                    const bool is_self = *r.quadrant != Quadrant::ThirdParty;
                    if (is_self != self_eval) continue;
                    out.push_back(r);
                }
                return out;
            };
            auto common_subset = [&](std::vector<VerdictRow> base, std::vector<VerdictRow> alt) {
                std::set<std::string> keys;
                for (const auto& r : alt) keys.insert(r.pair_key);
                std::vector<VerdictRow> out;
                for (auto& r : base)
                    if (keys.count(r.pair_key)) out.push_back(std::move(r));
                return out;
            };
            try {
                auto self_before = select(kCondOriginal, true);
                auto self_after = select(cond, true);
                self_before = common_subset(std::move(self_before), self_after);
                self_after = common_subset(std::move(self_after), self_before);
                const Sample self_chg = stats::preference_change(self_before, self_after);
                md << "| " << judge << " | " << cond << " | " << fmt_pct(self_chg.value);
                csv.add("preference_change_self", judge, cond, "", self_chg.n, self_chg.value);
                try {
                    auto third_before = select(kCondOriginal, false);
                    auto third_after = select(cond, false);
                    third_before = common_subset(std::move(third_before), third_after);
                    third_after = common_subset(std::move(third_after), third_before);
                    const Sample third_chg = stats::preference_change(third_before, third_after);
                    csv.add("preference_change_third_party", judge, cond, "", third_chg.n,
                            third_chg.value);
                    md << " | " << fmt_pct(third_chg.value) << " | ";
                    if (third_chg.value > 0)
                        md << fmt_stat(self_chg.value / third_chg.value);
                    else
                        md << "inf";
                    md << " |\n";
                } catch (const Error&) {
                    md << " | n/a | n/a |\n";
                }
            } catch (const Error&) {
            }
        }
    }
    md << "\n";

    // --- delta overall accuracy ---
    md << "## Overall accuracy change (harmful + legitimate, percentage points)\n\n"
          "| judge | condition | delta |\n|---|---|---|\n";
    for (const auto& judge : judges) {
        std::vector<VerdictRow> mine_orig, mine_cond;
        for (const auto& cond : conditions) {
            if (cond == kCondOriginal) continue;
            mine_orig.clear();
            mine_cond.clear();
            for (const auto& r : rows.verdicts) {
                if (r.judge != judge) continue;
                if (r.condition == kCondOriginal) mine_orig.push_back(r);
                else if (r.condition == cond) mine_cond.push_back(r);
            }
            try {
                const double delta = stats::delta_overall_accuracy(mine_orig, mine_cond);
                char buf[32];
                std::snprintf(buf, sizeof buf, "%+.2f", delta);
                md << "| " << judge << " | " << cond << " | " << buf << " |\n";
                csv.add("delta_overall_accuracy", judge, cond, "", 0, delta);
            } catch (const Error&) {
            }
        }
    }
    md << "\n";

    // --- hypothesis tests ---
    md << "## Statistical tests\n\n";
    {
        // recognition x self-preference on the harmful subset, original condition
        std::map<std::string, std::pair<int, int>> by_key;  // judge#pair -> (recognized, preferred)
        for (const auto& r : rows.recognitions) {
            if (!r.valid || r.condition != kCondOriginal || !r.quadrant ||
                *r.quadrant != Quadrant::Harmful)
                continue;
            by_key[r.judge + "#" + r.pair_key].first = r.is_correct ? 1 : 0;
        }
        std::vector<double> x, y;
        double table[2][2] = {{0, 0}, {0, 0}};
        for (const auto& r : rows.verdicts) {
            if (!r.valid || r.condition != kCondOriginal || !r.quadrant ||
                *r.quadrant != Quadrant::Harmful)
                continue;
            auto it = by_key.find(r.judge + "#" + r.pair_key);
            if (it == by_key.end()) continue;
            const int recog = it->second.first;
            const int pref = r.prefers_self ? 1 : 0;
            x.push_back(recog);
            y.push_back(pref);
            table[recog == 1 ? 0 : 1][pref == 1 ? 0 : 1] += 1.0;
        }
        if (x.size() >= 3) {
            try {
                const StatResult r = stats::pearson_r(x, y);
                md << "- recognition vs self-preference (harmful set): r(" << *r.df << ") = "
                   << fmt_stat(r.statistic) << ", p = " << fmt_p(r.p_value);
                if (r.ci95)
                    md << ", 95% CI [" << fmt_stat(r.ci95->first) << ", "
                       << fmt_stat(r.ci95->second) << "]";
                md << ", n = " << r.n << "\n";
                csv.add("pearson_r_recognition_preference", "", "original", "", r.n, r.statistic);
                csv.add("pearson_r_recognition_preference_p", "", "original", "", r.n, r.p_value);
            } catch (const Error&) {
                md << "- recognition vs self-preference: not computable (zero variance)\n";
            }
            try {
                const StatResult c = stats::chi_square_2x2(table);
                md << "- chi-square recognition x preference: statistic = "
                   << fmt_stat(c.statistic) << ", df = " << *c.df << ", p = " << fmt_p(c.p_value)
                   << ", n = " << c.n << ", table = [[" << table[0][0] << ", " << table[0][1]
                   << "], [" << table[1][0] << ", " << table[1][1] << "]]\n";
                csv.add("chi_square_recognition_preference", "", "original", "", c.n, c.statistic);
                csv.add("chi_square_recognition_preference_p", "", "original", "", c.n, c.p_value);
            } catch (const Error&) {
                md << "- chi-square recognition x preference: not computable (degenerate margin)\n";
            }
        }
    }
    for (const auto& cond : conditions) {
        if (cond == kCondOriginal) continue;
        // paired t over per-judge harmful-case accuracies, original vs condition
        std::vector<double> before, after;
        for (const auto& judge : judges) {
            std::vector<VerdictRow> mine;
            for (const auto& r : rows.verdicts)
                if (r.judge == judge) mine.push_back(r);
            try {
                const Sample b = stats::quadrant_accuracy(mine, Quadrant::Harmful, kCondOriginal);
                const Sample a = stats::quadrant_accuracy(mine, Quadrant::Harmful, cond);
                before.push_back(b.value);
                after.push_back(a.value);
            } catch (const Error&) {
            }
        }
        if (before.size() >= 2) {
            try {
                const StatResult t = stats::paired_t(before, after);
                md << "- paired t, harmful accuracy original vs " << cond << ": t("
                   << *t.df << ") = " << fmt_stat(t.statistic) << ", p = " << fmt_p(t.p_value)
                   << ", n = " << t.n << "\n";
                csv.add("paired_t_harmful_" + cond, "", cond, "", t.n, t.statistic);
                csv.add("paired_t_harmful_" + cond + "_p", "", cond, "", t.n, t.p_value);
            } catch (const Error&) {
                md << "- paired t (" << cond << "): not computable (zero-variance differences)\n";
            }
        }
    }
    if (!in.quality.empty()) {
        long long n = 0, prefers_perturbed = 0;
        for (const auto& q : in.quality) {
            const std::string picked = q.value("picked", std::string("ambiguous"));
            if (picked == "ambiguous") continue;
            n++;
            if (picked == "perturbed") prefers_perturbed++;
        }
        if (n > 0) {
            const StatResult b = stats::binomial_test(prefers_perturbed, n, 0.5);
            md << "- quality control binomial: " << prefers_perturbed << "/" << n
               << " prefer the perturbed version, p = " << fmt_p(b.p_value)
               << (b.p_value > 0.05 ? " (equivalent in quality)" : " (quality difference)")
               << "\n";
            csv.add("quality_binomial_p", "", "", "", b.n, b.p_value);
        }
    }
    md << "\n";

    return {md.str(), csv.buf};
}

void write_report(const BundlePaths& paths, const ReportArtifacts& artifacts) {
    write_file(paths.dir / "report.md", artifacts.report_md);
    write_file(paths.dir / "metrics.csv", artifacts.metrics_csv);
}

}  // namespace judgeaudit
