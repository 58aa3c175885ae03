#include <doctest.h>

#include <random>

#include "cod/evaluation.hpp"
#include "cod/run_io.hpp"
#include "cod/scripted_backend.hpp"
#include "test_support.hpp"

using namespace cod;
using cod_test::make_article;
using cod_test::make_candidate;
using cod_test::RecordingBackend;
using cod_test::scripted_endpoint;

namespace {

// Independent oracle: enumerate every subsequence of `a` and keep the
// longest that is also a subsequence of `b` (greedy containment check).
bool is_subsequence(const std::vector<char32_t>& sub,
                    const std::vector<char32_t>& full) {
    std::size_t i = 0;
    for (char32_t c : full) {
        if (i < sub.size() && sub[i] == c) ++i;
    }
    return i == sub.size();
}

std::size_t lcs_by_enumeration(const std::vector<char32_t>& a,
                               const std::vector<char32_t>& b) {
    REQUIRE(a.size() <= 16);
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        std::vector<char32_t> sub;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (mask & (1u << i)) sub.push_back(a[i]);
        }
        if (sub.size() > best && is_subsequence(sub, b)) {
            best = sub.size();
        }
    }
    return best;
}

std::string random_string(std::mt19937& rng, std::size_t max_len) {
    static const std::vector<std::string> kAlphabet = {"A", "B", "C", "D",
                                                       "中", "文"};
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 1);
    std::string out;
    std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) out += kAlphabet[pick(rng)];
    return out;
}

}  // namespace

TEST_CASE("lcs_length knowns") {
    CHECK(lcs_length("ABCBDAB", "BDCABA") == 4);
    CHECK(lcs_length("", "anything") == 0);
    CHECK(lcs_length("anything", "") == 0);
    CHECK(lcs_length("同一段文字", "同一段文字") == 5);
    // Whitespace is normalized away before matching.
    CHECK(lcs_length("a b c", "abc") == 3);
    CHECK(lcs_length("你 好\n世 界", "你好世界") == 4);
}

TEST_CASE("lcs_length agrees with exhaustive enumeration") {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        std::string a = random_string(rng, 10);
        std::string b = random_string(rng, 10);
        std::size_t expected =
            lcs_by_enumeration(utf8_decode(a), utf8_decode(b));
        CHECK_MESSAGE(lcs_length(a, b) == expected, a, " vs ", b);
    }
}

TEST_CASE("lcs_length properties") {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        std::string a = random_string(rng, 10);
        std::string b = random_string(rng, 10);
        std::size_t base = lcs_length(a, b);
        CHECK(lcs_length(b, a) == base);                       // symmetry
        CHECK(base <= std::min(utf8_decode(a).size(),
                               utf8_decode(b).size()));        // upper bound
        CHECK(lcs_length(a + "X", b) >= base);                 // monotone append
        CHECK(lcs_length(a, b + "中") >= base);
        CHECK(lcs_length(a, a) == utf8_decode(a).size());      // identity
    }
}

TEST_CASE("split_sentences") {
    CHECK(split_sentences("A。B！C") == std::vector<std::string>{"A", "B", "C"});
    CHECK(split_sentences("no terminals at all") ==
          std::vector<std::string>{"no terminals at all"});
    CHECK(split_sentences("").empty());
    CHECK(split_sentences("。。。").empty());
    CHECK(split_sentences("first.second?third!") ==
          std::vector<std::string>{"first", "second", "third"});
    CHECK(split_sentences("line one\nline two") ==
          std::vector<std::string>{"line one", "line two"});
    CHECK(split_sentences("a。。b") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("detect_reference number match") {
    EvidenceArticle article = make_article("1083", "三百字的正文内容。");

    SUBCASE("statute style") {
        ReferenceDetection d = detect_reference("根据第1083条的规定。", article);
        CHECK(d.referenced);
        CHECK(d.method == DetectionMethod::number_match);
    }

    SUBCASE("bare id adjacent to the article word") {
        CHECK(detect_reference("参考1083条即可。", article).referenced);
        CHECK(detect_reference("See Article 1083 for details.", article)
                  .referenced);
        CHECK(detect_reference("see article 1083.", article).referenced);
    }

    SUBCASE("digits flanked by other digits never match") {
        CHECK_FALSE(detect_reference("根据第21083条。", article).referenced);
        CHECK_FALSE(detect_reference("Article 10830 applies.", article)
                        .referenced);
    }

    SUBCASE("bare numbers without an article token never match") {
        CHECK_FALSE(detect_reference("赔偿金额为1083元。", article).referenced);
        CHECK_FALSE(detect_reference("In 1083 the rule changed.", article)
                        .referenced);
    }

    SUBCASE("number match is independent of body length") {
        EvidenceArticle longer = make_article("1083", std::string(900, 'x'));
        CHECK(detect_reference("第1083条", longer).referenced);
    }
}

TEST_CASE("detect_reference lcs path") {
    // Nine code points -> threshold floor(9/3) = 3.
    EvidenceArticle article = make_article("77", "ABCDEFGHI");

    SUBCASE("sentence equal to the article body") {
        ReferenceDetection d = detect_reference("ABCDEFGHI。", article);
        CHECK(d.referenced);
        CHECK(d.method == DetectionMethod::lcs_match);
        CHECK(d.best_lcs_len == 9);
        CHECK(d.threshold_len == 3);
    }

    SUBCASE("best lcs exactly at the threshold does not count") {
        ReferenceDetection d = detect_reference("ABC。", article);
        CHECK(d.best_lcs_len == 3);
        CHECK_FALSE(d.referenced);
        CHECK(d.method == DetectionMethod::none);
    }

    SUBCASE("one past the threshold counts") {
        ReferenceDetection d = detect_reference("ABCD。", article);
        CHECK(d.best_lcs_len == 4);
        CHECK(d.referenced);
    }

    SUBCASE("per-sentence matching, not whole-response") {
        // Each sentence shares only 2 code points with the article.
        ReferenceDetection d = detect_reference("AB。CD。EF。GH。", article);
        CHECK(d.best_lcs_len == 2);
        CHECK_FALSE(d.referenced);
    }

    SUBCASE("short greeting against a long article") {
        EvidenceArticle long_article =
            make_article("900", std::string(100, 'x') + "你好" +
                                    std::string(198, 'y'));
        ReferenceDetection d = detect_reference("你好。", long_article);
        CHECK_FALSE(d.referenced);
        CHECK(d.best_lcs_len <= d.threshold_len);
    }

    SUBCASE("number match takes precedence over lcs") {
        ReferenceDetection d = detect_reference("第77条：ABCDEFGHI。", article);
        CHECK(d.method == DetectionMethod::number_match);
        CHECK(d.best_lcs_len == 0);  // lcs never computed
    }
}

TEST_CASE("compute_accuracy") {
    ConsultationCase c = cod_test::make_case();
    // Labels: A1 N, A2 N, A3 O, A4 X, A5 X.
    auto detections = [&](std::map<std::string, bool> referenced) {
        std::vector<ReferenceDetection> out;
        for (const auto& cand : c.candidates) {
            ReferenceDetection d;
            d.article_id = cand.article.id;
            d.referenced = referenced.at(cand.article.id);
            d.method = d.referenced ? DetectionMethod::number_match
                                    : DetectionMethod::none;
            out.push_back(d);
        }
        return out;
    };

    SUBCASE("hand-recount example") {
        // Both necessary referenced, optional unreferenced, one of two
        // not-required referenced.
        ExampleMetrics m = compute_accuracy(
            c, detections({{"A1", true},
                           {"A2", true},
                           {"A3", false},
                           {"A4", true},
                           {"A5", false}}));
        REQUIRE(m.n_acc.has_value());
        CHECK(*m.n_acc == doctest::Approx(0.75));  // (2 + 1) / 4
        REQUIRE(m.o_acc.has_value());
        CHECK(*m.o_acc == doctest::Approx(1.0 / 3.0));  // (0 + 1) / 3
    }

    SUBCASE("all referenced") {
        ExampleMetrics m = compute_accuracy(
            c, detections({{"A1", true},
                           {"A2", true},
                           {"A3", true},
                           {"A4", true},
                           {"A5", true}}));
        CHECK(*m.n_acc == doctest::Approx(0.5));       // 2 of 4
        CHECK(*m.o_acc == doctest::Approx(1.0 / 3.0)); // 1 of 3
    }

    SUBCASE("no optional candidates leaves o_acc undefined") {
        ConsultationCase no_opt = c;
        no_opt.candidates[2].label = RelevanceLabel::Necessary;
        ExampleMetrics m = compute_accuracy(
            no_opt, detections({{"A1", true},
                                {"A2", true},
                                {"A3", true},
                                {"A4", false},
                                {"A5", false}}));
        CHECK(m.n_acc.has_value());
        REQUIRE(m.o_acc.has_value());  // still has NotRequired negatives
        ConsultationCase only_n = c;
        for (auto& cand : only_n.candidates) {
            cand.label = RelevanceLabel::Necessary;
        }
        ExampleMetrics m2 = compute_accuracy(
            only_n, detections({{"A1", true},
                                {"A2", true},
                                {"A3", true},
                                {"A4", true},
                                {"A5", true}}));
        CHECK_FALSE(m2.o_acc.has_value());
        CHECK(*m2.n_acc == doctest::Approx(1.0));
    }

    SUBCASE("missing detection is an error") {
        std::vector<ReferenceDetection> partial;
        CHECK_THROWS_WITH_AS(compute_accuracy(c, partial),
                             doctest::Contains("A1"), ValidationError);
    }
}

TEST_CASE("compute_accuracy matches a brute-force confusion recount") {
    std::mt19937 rng(17);
    std::uniform_int_distribution<int> label_pick(0, 2);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> count(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
        ConsultationCase c;
        c.id = "r" + std::to_string(trial);
        c.question = "q";
        std::vector<ReferenceDetection> detections;
        int n = count(rng);
        for (int i = 0; i < n; ++i) {
            RelevanceLabel label = label_pick(rng) == 0 ? RelevanceLabel::Necessary
                                   : label_pick(rng) == 1
                                       ? RelevanceLabel::Optional
                                       : RelevanceLabel::NotRequired;
            c.candidates.push_back(
                make_candidate("a" + std::to_string(i), label, 0.5));
            ReferenceDetection d;
            d.article_id = "a" + std::to_string(i);
            d.referenced = coin(rng) == 1;
            detections.push_back(d);
        }
        ExampleMetrics m = compute_accuracy(c, detections);

        // Independent recount over the confusion table.
        int tp_n = 0, fn_n = 0, tn = 0, fp = 0, tp_o = 0, fn_o = 0;
        for (int i = 0; i < n; ++i) {
            bool used = detections[static_cast<std::size_t>(i)].referenced;
            switch (c.candidates[static_cast<std::size_t>(i)].label) {
                case RelevanceLabel::Necessary:
                    (used ? tp_n : fn_n)++;
                    break;
                case RelevanceLabel::Optional:
                    (used ? tp_o : fn_o)++;
                    break;
                case RelevanceLabel::NotRequired:
                    (used ? fp : tn)++;
                    break;
            }
        }
        int n_den = tp_n + fn_n + tn + fp;
        int o_den = tp_o + fn_o + tn + fp;
        if (n_den == 0) {
            CHECK_FALSE(m.n_acc.has_value());
        } else {
            CHECK(*m.n_acc ==
                  doctest::Approx(static_cast<double>(tp_n + tn) / n_den));
        }
        if (o_den == 0) {
            CHECK_FALSE(m.o_acc.has_value());
        } else {
            CHECK(*m.o_acc ==
                  doctest::Approx(static_cast<double>(tp_o + tn) / o_den));
        }
    }
}

TEST_CASE("macro_average") {
    auto metrics = [](std::vector<std::optional<double>> n_values) {
        std::vector<ExampleMetrics> out;
        int i = 0;
        for (const auto& v : n_values) {
            ExampleMetrics m;
            m.case_id = "c" + std::to_string(i++);
            m.n_acc = v;
            out.push_back(m);
        }
        return out;
    };

    SUBCASE("plain mean") {
        MacroResult r = macro_average(metrics({1.0, 0.5}));
        CHECK(*r.macro_n_acc == doctest::Approx(0.75));
        CHECK(r.n_defined == 2);
    }

    SUBCASE("undefined cases are excluded and counted") {
        MacroResult r = macro_average(metrics({0.75, std::nullopt, 0.25}));
        CHECK(*r.macro_n_acc == doctest::Approx(0.5));
        CHECK(r.n_defined == 2);
    }

    SUBCASE("single case") {
        MacroResult r = macro_average(metrics({0.4}));
        CHECK(*r.macro_n_acc == doctest::Approx(0.4));
    }

    SUBCASE("all undefined leaves the macro undefined") {
        MacroResult r = macro_average(metrics({std::nullopt, std::nullopt}));
        CHECK_FALSE(r.macro_n_acc.has_value());
        CHECK(r.n_defined == 0);
    }

    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS(macro_average({}), ValidationError);
    }
}

TEST_CASE("majority_vote_references") {
    CHECK(majority_vote_references({{"a", "b"}, {"a"}, {"a", "c"}}) ==
          std::set<std::string>{"a"});
    CHECK(majority_vote_references({{"x", "y"}}) ==
          std::set<std::string>{"x", "y"});
    CHECK(majority_vote_references({{"a"}, {"b"}}).empty());  // strict majority
    // Odd number of identical sets is the identity.
    std::set<std::string> s{"p", "q"};
    CHECK(majority_vote_references({s, s, s}) == s);
    CHECK_THROWS_AS(majority_vote_references({}), ValidationError);
}

TEST_CASE("parse_judge_rating") {
    CHECK(parse_judge_rating("short explanation. Rating: [[5]]") == 5);
    CHECK(parse_judge_rating("Rating:[[7]]") == 7);
    CHECK(parse_judge_rating("Rating: [[10]]") == 10);
    // Last occurrence wins.
    CHECK(parse_judge_rating("Rating: [[3]] revised... Rating: [[8]]") == 8);
    CHECK_THROWS_AS(parse_judge_rating("Rating: [[11]]"), JudgeParseError);
    CHECK_THROWS_AS(parse_judge_rating("Rating: [[0]]"), JudgeParseError);
    CHECK_THROWS_AS(parse_judge_rating("no marker at all"), JudgeParseError);
    CHECK_THROWS_AS(parse_judge_rating("Rating: [5]"), JudgeParseError);
    CHECK_THROWS_AS(parse_judge_rating("Rating: [[five]]"), JudgeParseError);
    try {
        parse_judge_rating("garbled");
    } catch (const JudgeParseError& e) {
        CHECK(e.raw() == "garbled");
    }
}

TEST_CASE("judge_response") {
    TemplateCatalog catalog = TemplateCatalog::builtin(TemplateLanguage::en);
    ConsultationCase c = cod_test::make_case();

    SUBCASE("scripted judge with a clean rating") {
        ScriptedBackend judge(scripted_endpoint("arbiter"));
        judge.add("judge:case-1", "The answer is solid.\nRating: [[7]]");
        JudgeScore score = judge_response(judge, catalog, c, "the response");
        CHECK(score.score == 7);
        CHECK(score.rationale == "The answer is solid.");
        CHECK(score.raw.find("[[7]]") != std::string::npos);
        CHECK(judge.call_count() == 1);
    }

    SUBCASE("one re-ask is permitted") {
        ScriptedBackend judge(scripted_endpoint("arbiter"));
        judge.add_sequence("judge:case-1",
                           {"no rating marker", "ok. Rating: [[6]]"});
        JudgeScore score = judge_response(judge, catalog, c, "resp");
        CHECK(score.score == 6);
        CHECK(judge.call_count() == 2);
    }

    SUBCASE("persistent parse failure propagates after the re-ask") {
        ScriptedBackend judge(scripted_endpoint("arbiter"));
        judge.add("judge:case-1", "still no marker");
        CHECK_THROWS_AS(judge_response(judge, catalog, c, "resp"),
                        JudgeParseError);
        CHECK(judge.call_count() == 2);
    }

    SUBCASE("missing gold response is an error") {
        ConsultationCase no_gold = c;
        no_gold.gold_response.reset();
        ScriptedBackend judge(scripted_endpoint("arbiter"));
        CHECK_THROWS_AS(judge_response(judge, catalog, no_gold, "resp"),
                        ValidationError);
    }

    SUBCASE("judge calls run at temperature zero with the rubric bound") {
        RecordingBackend judge("arbiter");
        CHECK_THROWS_AS(judge_response(judge, catalog, c, "THE-RESPONSE"),
                        JudgeParseError);
        const CompletionRequest req = judge.last_request();
        CHECK(req.params.temperature == doctest::Approx(0.0));
        const std::string& prompt = req.messages.back().content;
        CHECK(prompt.find("THE-RESPONSE") != std::string::npos);
        CHECK(prompt.find(*c.gold_response) != std::string::npos);
        // Reference articles are the necessary + optional candidates only.
        CHECK(prompt.find("Article A1") != std::string::npos);
        CHECK(prompt.find("Article A3") != std::string::npos);
        CHECK(prompt.find("Article A4") == std::string::npos);
        CHECK(req.step_tag == "judge:case-1");
    }
}

TEST_CASE("compare_runs") {
    auto report_with_scores = [](std::vector<std::pair<std::string, int>> rows) {
        RunReport r;
        for (const auto& [id, score] : rows) {
            CaseReport c;
            c.case_id = id;
            JudgeScore s;
            s.score = score;
            c.judge = s;
            r.cases.push_back(c);
        }
        return r;
    };

    SUBCASE("counting oracle example") {
        RunReport a = report_with_scores({{"c1", 7}, {"c2", 6}, {"c3", 6}});
        RunReport b = report_with_scores({{"c1", 6}, {"c2", 6}, {"c3", 7}});
        RunComparison cmp = compare_runs(a, b);
        CHECK(cmp.wins == 1);
        CHECK(cmp.ties == 1);
        CHECK(cmp.losses == 1);
        CHECK(cmp.mean_delta == doctest::Approx(0.0));
    }

    SUBCASE("identical reports tie everywhere") {
        RunReport a = report_with_scores({{"c1", 5}, {"c2", 9}});
        RunComparison cmp = compare_runs(a, a);
        CHECK(cmp.ties == 2);
        CHECK(cmp.tie_rate == doctest::Approx(1.0));
    }

    SUBCASE("disjoint case sets are an error") {
        RunReport a = report_with_scores({{"c1", 5}});
        RunReport b = report_with_scores({{"c2", 5}});
        CHECK_THROWS_WITH_AS(compare_runs(a, b), doctest::Contains("c2"),
                             ValidationError);
    }

    SUBCASE("unscored cases are skipped and counted") {
        RunReport a = report_with_scores({{"c1", 5}, {"c2", 6}});
        RunReport b = report_with_scores({{"c1", 4}, {"c2", 6}});
        a.cases[1].judge.reset();
        RunComparison cmp = compare_runs(a, b);
        CHECK(cmp.per_case.size() == 1);
        CHECK(cmp.unscored == 1);
        CHECK(cmp.wins == 1);
    }
}

TEST_CASE("reports round-trip through jsonl") {
    RunReport report;
    report.run_id = "run-x";
    CaseReport c1;
    c1.case_id = "c1";
    c1.n_acc = 0.75;
    c1.response_length = 42;
    ReferenceDetection d;
    d.article_id = "a1";
    d.referenced = true;
    d.method = DetectionMethod::lcs_match;
    d.best_lcs_len = 12;
    d.threshold_len = 9;
    c1.detections.push_back(d);
    JudgeScore s;
    s.score = 8;
    s.rationale = "clear and grounded";
    c1.judge = s;
    report.cases.push_back(c1);
    CaseReport c2;
    c2.case_id = "c2";
    c2.o_acc = 0.5;
    c2.judge_flagged = true;
    report.cases.push_back(c2);
    report.skipped.push_back("c9");
    finalize_report(report);

    RunReport back = report_from_jsonl(report_to_jsonl(report), "test");
    CHECK(back.run_id == "run-x");
    REQUIRE(back.cases.size() == 2);
    CHECK(*back.cases[0].n_acc == doctest::Approx(0.75));
    REQUIRE(back.cases[0].judge.has_value());
    CHECK(back.cases[0].judge->score == 8);  // score round-trips exactly
    CHECK(back.cases[0].detections.size() == 1);
    CHECK(back.cases[0].detections[0].method == DetectionMethod::lcs_match);
    CHECK(back.cases[1].judge_flagged);
    CHECK(back.skipped == std::vector<std::string>{"c9"});
    CHECK(report_to_jsonl(back) == report_to_jsonl(report));
}

TEST_CASE("finalize_report aggregates") {
    RunReport report;
    for (int i = 0; i < 4; ++i) {
        CaseReport c;
        c.case_id = "c" + std::to_string(i);
        c.n_acc = 0.25 * i;
        c.response_length = 100;
        if (i < 2) {
            JudgeScore s;
            s.score = 6 + i;
            c.judge = s;
        }
        report.cases.push_back(c);
    }
    finalize_report(report);
    CHECK(*report.macro_n_acc == doctest::Approx((0.0 + 0.25 + 0.5 + 0.75) / 4));
    CHECK(report.n_defined == 4);
    CHECK(report.o_defined == 0);
    CHECK_FALSE(report.macro_o_acc.has_value());
    CHECK(*report.mean_judge == doctest::Approx(6.5));
    CHECK(report.judged_count == 2);
    CHECK(report.mean_response_length == doctest::Approx(100.0));
}
