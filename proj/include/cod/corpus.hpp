#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cod/errors.hpp"
#include "cod/util.hpp"

namespace cod {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One law-article-like evidence document from the store.
struct EvidenceArticle {
    std::string id;      // e.g. "1083"
    std::string source;  // statute name
    std::string text;    // full body, UTF-8

    void validate() const {
        if (id.empty()) throw ValidationError("evidence article has empty id");
        if (text.empty()) {
            throw ValidationError("evidence article '" + id + "' has empty text");
        }
    }
};

/// Ground-truth relevance of a candidate article. Evaluation-only: labels
/// must never reach a prompt.
enum class RelevanceLabel { Necessary, Optional, NotRequired };

inline const char* to_string(RelevanceLabel label) {
    switch (label) {
        case RelevanceLabel::Necessary: return "necessary";
        case RelevanceLabel::Optional: return "optional";
        case RelevanceLabel::NotRequired: return "not_required";
    }
    return "not_required";
}

inline RelevanceLabel relevance_label_from_string(std::string_view s) {
    if (s == "necessary") return RelevanceLabel::Necessary;
    if (s == "optional") return RelevanceLabel::Optional;
    if (s == "not_required") return RelevanceLabel::NotRequired;
    throw ValidationError("unknown relevance label: '" + std::string(s) + "'");
}

struct CandidateArticle {
    EvidenceArticle article;
    RelevanceLabel label = RelevanceLabel::NotRequired;
    double retriever_score = 0.0;  // classifier probability, ingested as given

    void validate() const {
        article.validate();
        if (retriever_score < 0.0 || retriever_score > 1.0) {
            throw ValidationError("candidate '" + article.id +
                                  "': retriever_score outside [0,1]");
        }
    }
};

/// A question plus its labeled candidate articles and optional gold response.
struct ConsultationCase {
    std::string id;
    std::string question;
    std::vector<CandidateArticle> candidates;
    std::optional<std::string> gold_response;
    std::map<std::string, std::string> metadata;

    void validate() const {
        if (id.empty()) throw ValidationError("case has empty id");
        if (question.empty()) {
            throw ValidationError("case '" + id + "' has empty question");
        }
        std::set<std::string> seen;
        for (const CandidateArticle& c : candidates) {
            try {
                c.validate();
            } catch (const ValidationError& e) {
                throw ValidationError("case '" + id + "': " + e.what());
            }
            if (!seen.insert(c.article.id).second) {
                throw ValidationError("case '" + id +
                                      "': duplicate candidate article id '" +
                                      c.article.id + "'");
            }
        }
    }

    std::size_t count_label(RelevanceLabel label) const {
        return static_cast<std::size_t>(
            std::count_if(candidates.begin(), candidates.end(),
                          [&](const CandidateArticle& c) { return c.label == label; }));
    }
};

/// Raw annotator scores for one (case, article) pair; each score in {0,1,2}.
struct AnnotationRecord {
    std::string case_id;
    std::string article_id;
    std::vector<int> scores;
};

// ---------------------------------------------------------------------------
// Annotation aggregation
// ---------------------------------------------------------------------------

// Mean-score thresholds separating the three relevance bands. Comparisons
// are strict; a mean exactly on a threshold falls into the middle band.
inline constexpr double kNecessaryMeanThreshold = 1.66;
inline constexpr double kNotRequiredMeanThreshold = 0.67;

/// Collapses per-annotator scores into a relevance label: mean > 1.66 is
/// Necessary, mean < 0.67 is NotRequired, anything else (boundaries
/// included) is Optional.
inline RelevanceLabel aggregate_annotations(const std::vector<int>& scores) {
    if (scores.empty()) {
        throw ValidationError("aggregate_annotations: empty score list");
    }
    long sum = 0;
    for (int s : scores) {
        if (s < 0 || s > 2) {
            throw ValidationError("aggregate_annotations: score " +
                                  std::to_string(s) + " outside {0,1,2}");
        }
        sum += s;
    }
    double mean = static_cast<double>(sum) / static_cast<double>(scores.size());
    if (mean > kNecessaryMeanThreshold) return RelevanceLabel::Necessary;
    if (mean < kNotRequiredMeanThreshold) return RelevanceLabel::NotRequired;
    return RelevanceLabel::Optional;
}

// ---------------------------------------------------------------------------
// Candidate-set construction
// ---------------------------------------------------------------------------

/// Builds the fixed-size candidate list for one case: every required
/// (necessary/optional) article is kept, and the remaining slots are filled
/// from the not-required pool in descending retriever score, ties broken by
/// ascending article id. Required overflow is an error, never truncation:
/// dropping a necessary article would corrupt evaluation labels.
inline std::vector<CandidateArticle> build_candidate_set(
    std::vector<CandidateArticle> required, std::vector<CandidateArticle> pool,
    std::size_t k) {
    if (k < 1) throw ValidationError("build_candidate_set: k must be >= 1");
    for (const CandidateArticle& c : required) {
        if (c.label == RelevanceLabel::NotRequired) {
            throw ValidationError(
                "build_candidate_set: required list contains not_required "
                "article '" + c.article.id + "'");
        }
    }
    for (const CandidateArticle& c : pool) {
        if (c.label != RelevanceLabel::NotRequired) {
            throw ValidationError("build_candidate_set: pool contains " +
                                  std::string(to_string(c.label)) +
                                  " article '" + c.article.id + "'");
        }
    }
    std::set<std::string> ids;
    for (const CandidateArticle& c : required) {
        if (!ids.insert(c.article.id).second) {
            throw ValidationError("build_candidate_set: duplicate article id '" +
                                  c.article.id + "'");
        }
    }
    for (const CandidateArticle& c : pool) {
        if (!ids.insert(c.article.id).second) {
            throw ValidationError("build_candidate_set: duplicate article id '" +
                                  c.article.id + "'");
        }
    }
    if (required.size() > k) {
        throw ValidationError(
            "build_candidate_set: " + std::to_string(required.size()) +
            " required articles exceed candidate budget k=" + std::to_string(k));
    }
    if (required.size() + pool.size() < k) {
        throw ValidationError(
            "build_candidate_set: only " +
            std::to_string(required.size() + pool.size()) +
            " articles available for k=" + std::to_string(k));
    }
    std::sort(pool.begin(), pool.end(),
              [](const CandidateArticle& a, const CandidateArticle& b) {
                  if (a.retriever_score != b.retriever_score) {
                      return a.retriever_score > b.retriever_score;
                  }
                  return a.article.id < b.article.id;
              });
    std::vector<CandidateArticle> out = std::move(required);
    for (std::size_t i = 0; out.size() < k; ++i) {
        out.push_back(pool[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline ordered_json case_to_json(const ConsultationCase& c) {
    ordered_json j;
    j["id"] = c.id;
    j["question"] = c.question;
    if (c.gold_response) j["gold_response"] = *c.gold_response;
    ordered_json cands = ordered_json::array();
    for (const CandidateArticle& cand : c.candidates) {
        ordered_json cj;
        cj["article_id"] = cand.article.id;
        cj["source"] = cand.article.source;
        cj["text"] = cand.article.text;
        cj["label"] = to_string(cand.label);
        cj["retriever_score"] = cand.retriever_score;
        cands.push_back(std::move(cj));
    }
    j["candidates"] = std::move(cands);
    if (!c.metadata.empty()) {
        ordered_json m;
        for (const auto& [k, v] : c.metadata) m[k] = v;
        j["metadata"] = std::move(m);
    }
    return j;
}

inline ConsultationCase case_from_json(const ordered_json& j) {
    ConsultationCase c;
    c.id = j.value("id", std::string{});
    c.question = j.value("question", std::string{});
    if (j.contains("gold_response") && !j["gold_response"].is_null()) {
        c.gold_response = j["gold_response"].get<std::string>();
    }
    if (!j.contains("candidates") || !j["candidates"].is_array()) {
        throw ValidationError("case '" + c.id + "': missing candidates array");
    }
    for (const auto& cj : j["candidates"]) {
        CandidateArticle cand;
        cand.article.id = cj.value("article_id", std::string{});
        cand.article.source = cj.value("source", std::string{});
        if (!cj.contains("text")) {
            throw ValidationError("case '" + c.id + "' candidate '" +
                                  cand.article.id + "': missing text");
        }
        cand.article.text = cj["text"].get<std::string>();
        if (!cj.contains("label")) {
            throw ValidationError("case '" + c.id + "' candidate '" +
                                  cand.article.id + "': missing label");
        }
        cand.label = relevance_label_from_string(cj["label"].get<std::string>());
        if (!cj.contains("retriever_score") ||
            !cj["retriever_score"].is_number()) {
            throw ValidationError("case '" + c.id + "' candidate '" +
                                  cand.article.id + "': missing retriever_score");
        }
        cand.retriever_score = cj["retriever_score"].get<double>();
        c.candidates.push_back(std::move(cand));
    }
    if (j.contains("metadata") && j["metadata"].is_object()) {
        for (const auto& [k, v] : j["metadata"].items()) {
            c.metadata[k] = v.get<std::string>();
        }
    }
    c.validate();
    return c;
}

/// Loads a line-delimited case file. Every invariant is validated here;
/// nothing downstream re-checks corpus shape.
inline std::vector<ConsultationCase> load_corpus(
    const std::filesystem::path& path) {
    std::string content = read_text_file(path);
    std::vector<ConsultationCase> cases;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    for (const std::string& line : split_lines(content)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("corpus line " + std::to_string(line_no) +
                                  ": invalid JSON: " + e.what());
        }
        ConsultationCase c;
        try {
            c = case_from_json(j);
        } catch (const ValidationError& e) {
            throw ValidationError("corpus line " + std::to_string(line_no) +
                                  ": " + e.what());
        }
        if (!ids.insert(c.id).second) {
            throw ValidationError("corpus line " + std::to_string(line_no) +
                                  ": duplicate case id '" + c.id + "'");
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

inline void save_corpus(const std::vector<ConsultationCase>& cases,
                        const std::filesystem::path& path) {
    std::string out;
    for (const ConsultationCase& c : cases) {
        out += case_to_json(c).dump();
        out += '\n';
    }
    write_text_file(path, out);
}

/// Loads a line-delimited annotation file: {case_id, article_id, scores}.
inline std::vector<AnnotationRecord> load_annotations(
    const std::filesystem::path& path) {
    std::string content = read_text_file(path);
    std::vector<AnnotationRecord> records;
    std::size_t line_no = 0;
    for (const std::string& line : split_lines(content)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("annotations line " + std::to_string(line_no) +
                                  ": invalid JSON: " + e.what());
        }
        AnnotationRecord rec;
        rec.case_id = j.value("case_id", std::string{});
        rec.article_id = j.value("article_id", std::string{});
        if (rec.case_id.empty() || rec.article_id.empty()) {
            throw ValidationError("annotations line " + std::to_string(line_no) +
                                  ": case_id and article_id required");
        }
        if (!j.contains("scores") || !j["scores"].is_array() ||
            j["scores"].empty()) {
            throw ValidationError("annotations line " + std::to_string(line_no) +
                                  " (case '" + rec.case_id + "', article '" +
                                  rec.article_id + "'): scores must be a "
                                  "non-empty array");
        }
        for (const auto& s : j["scores"]) {
            if (!s.is_number_integer()) {
                throw ValidationError("annotations line " +
                                      std::to_string(line_no) +
                                      ": non-integer score");
            }
            int v = s.get<int>();
            if (v < 0 || v > 2) {
                throw ValidationError(
                    "annotations line " + std::to_string(line_no) + " (case '" +
                    rec.case_id + "', article '" + rec.article_id +
                    "'): score " + std::to_string(v) + " outside {0,1,2}");
            }
            rec.scores.push_back(v);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
    double mean_necessary = 0.0;
    double mean_optional = 0.0;
    double mean_not_required = 0.0;
    std::size_t case_count = 0;
    std::size_t total_necessary = 0;
    std::size_t total_optional = 0;
    std::size_t total_not_required = 0;
};

inline CorpusStats corpus_stats(const std::vector<ConsultationCase>& cases) {
    if (cases.empty()) {
        throw ValidationError("corpus_stats: empty corpus");
    }
    CorpusStats st;
    st.case_count = cases.size();
    for (const ConsultationCase& c : cases) {
        st.total_necessary += c.count_label(RelevanceLabel::Necessary);
        st.total_optional += c.count_label(RelevanceLabel::Optional);
        st.total_not_required += c.count_label(RelevanceLabel::NotRequired);
    }
    const double n = static_cast<double>(st.case_count);
    st.mean_necessary = static_cast<double>(st.total_necessary) / n;
    st.mean_optional = static_cast<double>(st.total_optional) / n;
    st.mean_not_required = static_cast<double>(st.total_not_required) / n;
    return st;
}

}  // namespace cod
