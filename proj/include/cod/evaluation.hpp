#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cod/backend.hpp"
#include "cod/corpus.hpp"
#include "cod/errors.hpp"
#include "cod/prompts.hpp"
#include "cod/util.hpp"

namespace cod {

// ---------------------------------------------------------------------------
// Text matching
// ---------------------------------------------------------------------------

/// Longest common subsequence length over whitespace-normalized unicode
/// code points. Classic dynamic programming, rolling rows.
inline std::size_t lcs_length(std::string_view a, std::string_view b) {
    const std::vector<char32_t> x = normalized_codepoints(a);
    const std::vector<char32_t> y = normalized_codepoints(b);
    if (x.empty() || y.empty()) return 0;
    std::vector<std::size_t> prev(y.size() + 1, 0);
    std::vector<std::size_t> curr(y.size() + 1, 0);
    for (std::size_t i = 1; i <= x.size(); ++i) {
        for (std::size_t j = 1; j <= y.size(); ++j) {
            curr[j] = x[i - 1] == y[j - 1]
                          ? prev[j - 1] + 1
                          : std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    return prev[y.size()];
}

/// Splits on terminal punctuation (。！？!?. and newline). Delimiters are
/// discarded and empty segments dropped.
inline std::vector<std::string> split_sentences(std::string_view text) {
    static const std::vector<std::string> kTerminators = {
        "。", "！", "？", "!", "?", ".", "\n"};
    std::vector<std::string> sentences;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        bool terminated = false;
        for (const std::string& term : kTerminators) {
            if (text.compare(i, term.size(), term) == 0) {
                if (!trim(current).empty()) {
                    sentences.emplace_back(trim(current));
                }
                current.clear();
                i += term.size();
                terminated = true;
                break;
            }
        }
        if (!terminated) {
            current += text[i];
            ++i;
        }
    }
    if (!trim(current).empty()) {
        sentences.emplace_back(trim(current));
    }
    return sentences;
}

// ---------------------------------------------------------------------------
// Article-reference detection
// ---------------------------------------------------------------------------

enum class DetectionMethod { number_match, lcs_match, none };

inline const char* to_string(DetectionMethod m) {
    switch (m) {
        case DetectionMethod::number_match: return "number_match";
        case DetectionMethod::lcs_match: return "lcs_match";
        case DetectionMethod::none: return "none";
    }
    return "none";
}

inline DetectionMethod detection_method_from_string(std::string_view s) {
    if (s == "number_match") return DetectionMethod::number_match;
    if (s == "lcs_match") return DetectionMethod::lcs_match;
    return DetectionMethod::none;
}

struct ReferenceDetection {
    std::string article_id;
    bool referenced = false;
    DetectionMethod method = DetectionMethod::none;
    std::size_t best_lcs_len = 0;    // meaningful for lcs_match / none
    std::size_t threshold_len = 0;   // floor(|article| / 3), normalized units
};

namespace detail {

inline bool is_ascii_alnum(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

/// True when the article id occurs in `response` as a number token:
/// "第{id}条", "{id}条", or "Article {id}" (case-insensitive, optional
/// spaces). The occurrence must not be flanked by further alphanumerics,
/// so bare digits inside amounts or dates never match.
inline bool number_token_present(const std::string& response,
                                 const std::string& id) {
    if (id.empty()) return false;
    std::size_t pos = 0;
    while ((pos = response.find(id, pos)) != std::string::npos) {
        const std::size_t end = pos + id.size();
        const bool flanked_before = pos > 0 && is_ascii_alnum(response[pos - 1]);
        const bool flanked_after =
            end < response.size() && is_ascii_alnum(response[end]);
        if (flanked_before || flanked_after) {
            ++pos;
            continue;
        }
        // "{id}条": the article-word token directly follows.
        if (response.compare(end, 3, "\xE6\x9D\xA1") == 0) {
            return true;
        }
        // "Article {id}": the article-word token precedes, optional spaces.
        std::size_t before = pos;
        while (before > 0 && response[before - 1] == ' ') --before;
        if (before >= 7) {
            std::string word = to_lower(response.substr(before - 7, 7));
            if (word == "article") return true;
        }
        ++pos;
    }
    return false;
}

}  // namespace detail

/// Decides whether `response` used `article`: a number-token match wins
/// outright; otherwise the best per-sentence LCS against the article body
/// must strictly exceed one third of the article length.
inline ReferenceDetection detect_reference(const std::string& response,
                                           const EvidenceArticle& article) {
    article.validate();
    ReferenceDetection det;
    det.article_id = article.id;
    det.threshold_len = normalized_codepoints(article.text).size() / 3;
    if (detail::number_token_present(response, article.id)) {
        det.referenced = true;
        det.method = DetectionMethod::number_match;
        return det;
    }
    for (const std::string& sentence : split_sentences(response)) {
        det.best_lcs_len =
            std::max(det.best_lcs_len, lcs_length(sentence, article.text));
    }
    if (det.best_lcs_len > det.threshold_len) {
        det.referenced = true;
        det.method = DetectionMethod::lcs_match;
    }
    return det;
}

// ---------------------------------------------------------------------------
// Accuracy metrics
// ---------------------------------------------------------------------------

/// Per-case evidence accuracy. Necessary articles are the positives of
/// n_acc and Optional the positives of o_acc; NotRequired articles are the
/// negatives of both. Each metric ignores the other's positive class
/// entirely and is undefined when its denominator is empty.
struct ExampleMetrics {
    std::string case_id;
    std::optional<double> n_acc;
    std::optional<double> o_acc;
    std::vector<ReferenceDetection> detections;
};

inline ExampleMetrics compute_accuracy(
    const ConsultationCase& c, const std::vector<ReferenceDetection>& detections) {
    std::map<std::string, bool> referenced;
    for (const ReferenceDetection& d : detections) {
        referenced[d.article_id] = d.referenced;
    }
    ExampleMetrics m;
    m.case_id = c.id;
    m.detections = detections;
    std::size_t n_correct = 0, n_total = 0;
    std::size_t o_correct = 0, o_total = 0;
    for (const CandidateArticle& cand : c.candidates) {
        auto it = referenced.find(cand.article.id);
        if (it == referenced.end()) {
            throw ValidationError("compute_accuracy: case '" + c.id +
                                  "' has no detection for article '" +
                                  cand.article.id + "'");
        }
        const bool used = it->second;
        switch (cand.label) {
            case RelevanceLabel::Necessary:
                ++n_total;
                if (used) ++n_correct;
                break;
            case RelevanceLabel::Optional:
                ++o_total;
                if (used) ++o_correct;
                break;
            case RelevanceLabel::NotRequired:
                ++n_total;
                ++o_total;
                if (!used) {
                    ++n_correct;
                    ++o_correct;
                }
                break;
        }
    }
    if (n_total > 0) {
        m.n_acc = static_cast<double>(n_correct) / static_cast<double>(n_total);
    }
    if (o_total > 0) {
        m.o_acc = static_cast<double>(o_correct) / static_cast<double>(o_total);
    }
    return m;
}

struct MacroResult {
    std::optional<double> macro_n_acc;
    std::optional<double> macro_o_acc;
    std::size_t n_defined = 0;
    std::size_t o_defined = 0;
};

/// Arithmetic mean over cases where the metric is defined; undefined cases
/// are excluded and counted.
inline MacroResult macro_average(const std::vector<ExampleMetrics>& per_case) {
    if (per_case.empty()) {
        throw ValidationError("macro_average: no per-case metrics");
    }
    MacroResult r;
    double n_sum = 0.0, o_sum = 0.0;
    for (const ExampleMetrics& m : per_case) {
        if (m.n_acc) {
            n_sum += *m.n_acc;
            ++r.n_defined;
        }
        if (m.o_acc) {
            o_sum += *m.o_acc;
            ++r.o_defined;
        }
    }
    if (r.n_defined > 0) r.macro_n_acc = n_sum / static_cast<double>(r.n_defined);
    if (r.o_defined > 0) r.macro_o_acc = o_sum / static_cast<double>(r.o_defined);
    return r;
}

/// Ids referenced by strictly more than half of the detection sets.
inline std::set<std::string> majority_vote_references(
    const std::vector<std::set<std::string>>& detection_sets) {
    if (detection_sets.empty()) {
        throw ValidationError("majority_vote_references: no detection sets");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& s : detection_sets) {
        for (const std::string& id : s) ++counts[id];
    }
    std::set<std::string> out;
    for (const auto& [id, count] : counts) {
        if (count * 2 > detection_sets.size()) out.insert(id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// LLM-as-judge scoring
// ---------------------------------------------------------------------------

struct JudgeScore {
    int score = 0;  // integer in [1,10]
    std::string rationale;
    std::string raw;
};

/// Parses the final "Rating: [[N]]" marker; the last occurrence wins.
/// Missing marker or N outside [1,10] raises JudgeParseError with the raw
/// text retained.
inline int parse_judge_rating(const std::string& raw) {
    std::size_t search_from = 0;
    std::optional<int> last_value;
    while (true) {
        std::size_t pos = raw.find("Rating:", search_from);
        if (pos == std::string::npos) break;
        search_from = pos + 7;
        std::size_t i = pos + 7;
        while (i < raw.size() && raw[i] == ' ') ++i;
        if (raw.compare(i, 2, "[[") != 0) continue;
        i += 2;
        std::size_t digits_start = i;
        while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) {
            ++i;
        }
        if (i == digits_start) continue;
        if (raw.compare(i, 2, "]]") != 0) continue;
        last_value = std::stoi(raw.substr(digits_start, i - digits_start));
    }
    if (!last_value) {
        throw JudgeParseError("judge reply carries no \"Rating: [[N]]\" marker",
                              raw);
    }
    if (*last_value < 1 || *last_value > 10) {
        throw JudgeParseError("judge rating " + std::to_string(*last_value) +
                                  " outside [1,10]",
                              raw);
    }
    return *last_value;
}

/// Scores a response against the gold answer with the judge rubric at
/// temperature 0. Reference articles are the necessary and optional
/// candidates. One re-ask is permitted on a parse failure.
inline JudgeScore judge_response(Backend& judge, const TemplateCatalog& catalog,
                                 const ConsultationCase& c,
                                 const std::string& response,
                                 DecodingParams params = {}) {
    if (!c.gold_response) {
        throw ValidationError("judge_response: case '" + c.id +
                              "' has no gold response");
    }
    std::vector<CandidateArticle> references;
    for (const CandidateArticle& cand : c.candidates) {
        if (cand.label != RelevanceLabel::NotRequired) {
            references.push_back(cand);
        }
    }
    std::string articles_text =
        references.empty() ? "(none)"
                           : format_articles(references, catalog.language());
    RenderedPrompt prompt = catalog.render(
        TemplateId::judge,
        {{"question", c.question},
         {"articles", articles_text},
         {"golden_response", *c.gold_response},
         {"llm_response", response}},
        {}, make_step_tag(TemplateId::judge, c.id));
    CompletionRequest request;
    request.messages = std::move(prompt.messages);
    request.params = params;
    request.params.temperature = 0.0;
    request.step_tag = prompt.step_tag;

    auto attempt = [&]() -> JudgeScore {
        CompletionResult result = judge.complete(request);
        JudgeScore score;
        score.raw = result.text;
        score.score = parse_judge_rating(result.text);
        std::size_t marker = result.text.rfind("Rating:");
        score.rationale = std::string(trim(result.text.substr(0, marker)));
        return score;
    };
    try {
        return attempt();
    } catch (const JudgeParseError&) {
        return attempt();  // one re-ask, then the error propagates
    }
}

// ---------------------------------------------------------------------------
// Run reports and comparison
// ---------------------------------------------------------------------------

struct CaseReport {
    std::string case_id;
    std::optional<double> n_acc;
    std::optional<double> o_acc;
    std::vector<ReferenceDetection> detections;
    std::size_t response_length = 0;  // code points
    std::optional<JudgeScore> judge;
    bool judge_flagged = false;  // rating unparseable after the re-ask
};

struct RunReport {
    std::string run_id;
    std::vector<CaseReport> cases;
    std::optional<double> macro_n_acc;
    std::optional<double> macro_o_acc;
    std::size_t n_defined = 0;
    std::size_t o_defined = 0;
    std::vector<std::string> skipped;  // cases without usable transcripts
    std::optional<double> mean_judge;
    std::size_t judged_count = 0;
    double mean_response_length = 0.0;
};

/// Recomputes every aggregate field of `report` from its per-case rows.
inline void finalize_report(RunReport& report) {
    std::vector<ExampleMetrics> metrics;
    metrics.reserve(report.cases.size());
    double judge_sum = 0.0;
    double length_sum = 0.0;
    report.judged_count = 0;
    for (const CaseReport& c : report.cases) {
        ExampleMetrics m;
        m.case_id = c.case_id;
        m.n_acc = c.n_acc;
        m.o_acc = c.o_acc;
        metrics.push_back(std::move(m));
        if (c.judge) {
            judge_sum += c.judge->score;
            ++report.judged_count;
        }
        length_sum += static_cast<double>(c.response_length);
    }
    if (!metrics.empty()) {
        MacroResult macro = macro_average(metrics);
        report.macro_n_acc = macro.macro_n_acc;
        report.macro_o_acc = macro.macro_o_acc;
        report.n_defined = macro.n_defined;
        report.o_defined = macro.o_defined;
        report.mean_response_length =
            length_sum / static_cast<double>(report.cases.size());
    }
    if (report.judged_count > 0) {
        report.mean_judge = judge_sum / static_cast<double>(report.judged_count);
    } else {
        report.mean_judge.reset();
    }
}

struct CaseComparison {
    std::string case_id;
    int outcome = 0;  // +1 first run wins, -1 loses, 0 tie
    int score_a = 0;
    int score_b = 0;
};

struct RunComparison {
    std::vector<CaseComparison> per_case;
    std::size_t wins = 0;
    std::size_t ties = 0;
    std::size_t losses = 0;
    std::size_t unscored = 0;  // cases lacking a judge score on either side
    double win_rate = 0.0;
    double tie_rate = 0.0;
    double loss_rate = 0.0;
    double mean_delta = 0.0;
};

/// Per-case judge-score comparison: +1 where run A scored higher, -1 where
/// lower, 0 on ties. Requires identical case-id sets.
inline RunComparison compare_runs(const RunReport& a, const RunReport& b) {
    std::map<std::string, const CaseReport*> by_id_b;
    for (const CaseReport& c : b.cases) by_id_b[c.case_id] = &c;
    std::set<std::string> ids_a, ids_b;
    for (const CaseReport& c : a.cases) ids_a.insert(c.case_id);
    for (const CaseReport& c : b.cases) ids_b.insert(c.case_id);
    if (ids_a != ids_b) {
        std::string diff;
        for (const std::string& id : ids_a) {
            if (!ids_b.count(id)) diff += " -" + id;
        }
        for (const std::string& id : ids_b) {
            if (!ids_a.count(id)) diff += " +" + id;
        }
        throw ValidationError("compare_runs: case sets differ:" + diff);
    }

    RunComparison cmp;
    double delta_sum = 0.0;
    for (const CaseReport& ca : a.cases) {
        const CaseReport& cb = *by_id_b.at(ca.case_id);
        if (!ca.judge || !cb.judge) {
            ++cmp.unscored;
            continue;
        }
        CaseComparison cc;
        cc.case_id = ca.case_id;
        cc.score_a = ca.judge->score;
        cc.score_b = cb.judge->score;
        cc.outcome = cc.score_a > cc.score_b ? 1 : cc.score_a < cc.score_b ? -1 : 0;
        if (cc.outcome > 0) {
            ++cmp.wins;
        } else if (cc.outcome < 0) {
            ++cmp.losses;
        } else {
            ++cmp.ties;
        }
        delta_sum += cc.score_a - cc.score_b;
        cmp.per_case.push_back(std::move(cc));
    }
    if (cmp.per_case.empty()) {
        throw ValidationError(
            "compare_runs: no case carries judge scores on both sides");
    }
    const double n = static_cast<double>(cmp.per_case.size());
    cmp.win_rate = static_cast<double>(cmp.wins) / n;
    cmp.tie_rate = static_cast<double>(cmp.ties) / n;
    cmp.loss_rate = static_cast<double>(cmp.losses) / n;
    cmp.mean_delta = delta_sum / n;
    return cmp;
}

}  // namespace cod
