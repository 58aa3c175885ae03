#pragma once

// Shared fixture helpers for the unit and acceptance suites. Keep this
// header doctest-free so the acceptance binary can use it too.

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cod/backend.hpp"
#include "cod/corpus.hpp"
#include "cod/pipeline.hpp"
#include "cod/scripted_backend.hpp"

namespace cod_test {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        path_ = fs::temp_directory_path() /
                ("cod_test_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }

    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline cod::ModelEndpoint scripted_endpoint(const std::string& name) {
    cod::ModelEndpoint e;
    e.name = name;
    e.kind = cod::EndpointKind::scripted;
    return e;
}

inline cod::EvidenceArticle make_article(const std::string& id,
                                         const std::string& text,
                                         const std::string& source = "Civil Code") {
    return cod::EvidenceArticle{id, source, text};
}

inline cod::CandidateArticle make_candidate(const std::string& id,
                                            cod::RelevanceLabel label,
                                            double score = 0.5,
                                            const std::string& text = {}) {
    cod::CandidateArticle c;
    c.article = make_article(
        id, text.empty() ? "Body of article " + id + " with enough text." : text);
    c.label = label;
    c.retriever_score = score;
    return c;
}

/// Five-candidate case used by the pipeline and call-graph fixtures.
inline cod::ConsultationCase make_case(const std::string& id = "case-1") {
    cod::ConsultationCase c;
    c.id = id;
    c.question = "Does the consultant still owe support after the dispute?";
    c.gold_response = "Reference answer grounded in articles A1 and A2.";
    c.candidates = {
        make_candidate("A1", cod::RelevanceLabel::Necessary, 0.95),
        make_candidate("A2", cod::RelevanceLabel::Necessary, 0.90),
        make_candidate("A3", cod::RelevanceLabel::Optional, 0.70),
        make_candidate("A4", cod::RelevanceLabel::NotRequired, 0.60),
        make_candidate("A5", cod::RelevanceLabel::NotRequired, 0.40),
    };
    return c;
}

/// Backend that records every request and answers with a fixed reply.
class RecordingBackend : public cod::Backend {
public:
    explicit RecordingBackend(const std::string& name,
                              std::string reply = "recorded reply")
        : Backend(scripted_endpoint(name)), reply_(std::move(reply)) {}

    std::vector<cod::CompletionRequest> requests() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

    cod::CompletionRequest last_request() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_.back();
    }

protected:
    cod::CompletionResult do_complete(const cod::CompletionRequest& r) override {
        std::lock_guard<std::mutex> lock(mutex_);
        requests_.push_back(r);
        return {reply_, cod::FinishReason::stop, 1};
    }

private:
    std::string reply_;
    mutable std::mutex mutex_;
    mutable std::vector<cod::CompletionRequest> requests_;
};

/// Scripted 4-model panel (m1 target, m2..m4 peers) with explicit entries
/// for every step of `c`. Critique stances per article come from `stances`,
/// keyed by article id; missing articles default to all-Agree.
struct PanelFixture {
    std::shared_ptr<cod::ScriptedBackend> target;
    std::vector<std::shared_ptr<cod::ScriptedBackend>> peers;
    cod::ConsultationCase case_;

    cod::DiscussionConfig config(double delta = 0.66) const {
        cod::DiscussionConfig cfg;
        cfg.target = target;
        for (const auto& p : peers) cfg.peers.push_back(p);
        cfg.delta = delta;
        cfg.num_candidates = static_cast<int>(case_.candidates.size());
        cfg.catalog = cod::TemplateCatalog::builtin(cod::TemplateLanguage::en);
        cfg.warn = [](const std::string&) {};
        return cfg;
    }
};

inline std::string stance_reply(const std::string& stance) {
    if (stance == "oppose") {
        return "The analysis misreads the provision.\nVERDICT: OPPOSE";
    }
    if (stance == "agree") {
        return "The analysis reads the provision correctly.\nVERDICT: AGREE";
    }
    return "An aside with no stance whatsoever";
}

inline PanelFixture make_panel_fixture(
    const std::map<std::string, std::vector<std::string>>& stances,
    const cod::ConsultationCase& c = make_case()) {
    PanelFixture fx;
    fx.case_ = c;
    fx.target = std::make_shared<cod::ScriptedBackend>(scripted_endpoint("m1"));
    for (const char* peer : {"m2", "m3", "m4"}) {
        fx.peers.push_back(
            std::make_shared<cod::ScriptedBackend>(scripted_endpoint(peer)));
    }

    auto tag = [&](cod::TemplateId id, const std::string& article = {}) {
        return cod::make_step_tag(id, c.id, article);
    };
    fx.target->add(tag(cod::TemplateId::question_analysis), "QA by m1");
    std::size_t peer_index = 2;
    for (const auto& p : fx.peers) {
        p->add(tag(cod::TemplateId::question_analysis),
               "QA by m" + std::to_string(peer_index++));
    }
    fx.target->add(tag(cod::TemplateId::summarize), "SUMMARY by m1");
    for (const cod::CandidateArticle& cand : c.candidates) {
        const std::string& aid = cand.article.id;
        fx.target->add(tag(cod::TemplateId::evidence_analysis, aid),
                       "EA of " + aid);
        fx.target->add(tag(cod::TemplateId::revise, aid), "REVISED " + aid);
        std::vector<std::string> article_stances(3, "agree");
        if (auto it = stances.find(aid); it != stances.end()) {
            article_stances = it->second;
        }
        for (std::size_t k = 0; k < fx.peers.size(); ++k) {
            const std::string stance =
                k < article_stances.size() ? article_stances[k] : "agree";
            fx.peers[k]->add(tag(cod::TemplateId::critique, aid),
                             stance_reply(stance));
        }
        // Self-criticism entries: the target critiques its own analysis.
        const std::string self_stance =
            article_stances.empty() ? "agree" : article_stances[0];
        fx.target->add(tag(cod::TemplateId::critique, aid),
                       stance_reply(self_stance));
    }
    fx.target->add(tag(cod::TemplateId::respond), "RESPONSE citing Article A1.");
    return fx;
}

/// Call-graph stances for the canonical conformance fixture: two articles
/// cross the revision threshold (A1 3/3, A2 2/3 opposing), the rest keep
/// their initial analysis (A3 1/3, A4 0/3, A5 unparseable panel).
inline std::map<std::string, std::vector<std::string>> canonical_stances() {
    return {
        {"A1", {"oppose", "oppose", "oppose"}},
        {"A2", {"oppose", "oppose", "agree"}},
        {"A3", {"oppose", "agree", "agree"}},
        {"A4", {"agree", "agree", "agree"}},
        {"A5", {"none", "none", "none"}},
    };
}

inline std::vector<std::string> template_sequence(const cod::CallLog& log) {
    std::vector<std::string> out;
    out.reserve(log.size());
    for (const cod::CallRecord& r : log) {
        out.push_back(cod::to_string(r.template_id));
    }
    return out;
}

}  // namespace cod_test
