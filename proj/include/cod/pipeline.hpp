#pragma once

#include <future>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cod/backend.hpp"
#include "cod/corpus.hpp"
#include "cod/errors.hpp"
#include "cod/prompts.hpp"

namespace cod {

// ---------------------------------------------------------------------------
// Run settings
// ---------------------------------------------------------------------------

enum class RunSetting {
    VanillaCoT,         // single pass: per-article judgment, then response
    BaselineCoT,        // two-stage chain of thought, target only
    Stage1Only,         // panel question analyses + summary
    Stage2Only,         // peer critiques + conditional revision
    ChainOfDiscussion,  // both stages
    SelfCriticism,      // stage 2 with the target as its own critic
};

inline const char* to_string(RunSetting s) {
    switch (s) {
        case RunSetting::VanillaCoT: return "vanilla";
        case RunSetting::BaselineCoT: return "bs";
        case RunSetting::Stage1Only: return "s1";
        case RunSetting::Stage2Only: return "s2";
        case RunSetting::ChainOfDiscussion: return "cod";
        case RunSetting::SelfCriticism: return "selfcrit";
    }
    return "bs";
}

inline RunSetting run_setting_from_string(std::string_view s) {
    if (s == "vanilla") return RunSetting::VanillaCoT;
    if (s == "bs") return RunSetting::BaselineCoT;
    if (s == "s1") return RunSetting::Stage1Only;
    if (s == "s2") return RunSetting::Stage2Only;
    if (s == "cod") return RunSetting::ChainOfDiscussion;
    if (s == "selfcrit") return RunSetting::SelfCriticism;
    throw ConfigError("unknown setting: '" + std::string(s) +
                      "' (expected vanilla|bs|s1|s2|cod|selfcrit)");
}

// ---------------------------------------------------------------------------
// Critique verdicts
// ---------------------------------------------------------------------------

enum class Stance { Oppose, Agree, Unparseable };

inline const char* to_string(Stance s) {
    switch (s) {
        case Stance::Oppose: return "oppose";
        case Stance::Agree: return "agree";
        case Stance::Unparseable: return "unparseable";
    }
    return "unparseable";
}

inline Stance stance_from_string(std::string_view s) {
    if (s == "oppose") return Stance::Oppose;
    if (s == "agree") return Stance::Agree;
    return Stance::Unparseable;
}

struct CritiqueVerdict {
    Stance stance = Stance::Unparseable;
    std::string rationale;  // the critic's full text
};

namespace detail {

// Last segment of `text` after terminal punctuation (。！？!?. or newline).
inline std::string final_sentence(const std::string& text) {
    static const std::vector<std::string> kTerminators = {
        "。", "！", "？", "!", "?", ".", "\n"};
    std::string_view remaining = trim(text);
    bool found = true;
    while (found) {
        found = false;
        std::size_t best = std::string_view::npos;
        std::size_t best_len = 0;
        for (const std::string& term : kTerminators) {
            std::size_t pos = remaining.rfind(term);
            if (pos != std::string_view::npos &&
                (best == std::string_view::npos || pos > best)) {
                best = pos;
                best_len = term.size();
            }
        }
        if (best != std::string_view::npos) {
            std::string_view tail = trim(remaining.substr(best + best_len));
            if (!tail.empty()) {
                return std::string(tail);
            }
            remaining = trim(remaining.substr(0, best));
            found = !remaining.empty();
        }
    }
    return std::string(remaining);
}

}  // namespace detail

/// Extracts the critic's stance. A trailing machine-readable verdict line
/// wins ("VERDICT: OPPOSE|AGREE", or the Chinese equivalents
/// 判定：反对 / 判定：同意); otherwise the final sentence is scanned for the
/// misconstrual keywords, negated forms first. Anything else is
/// Unparseable — a broken critique is neither consent nor dissent.
inline CritiqueVerdict parse_critique(const std::string& text) {
    CritiqueVerdict verdict;
    verdict.rationale = text;

    struct Marker {
        const char* needle;
        Stance stance;
    };
    static const Marker kMarkers[] = {
        {"verdict: oppose", Stance::Oppose},
        {"verdict:oppose", Stance::Oppose},
        {"verdict: agree", Stance::Agree},
        {"verdict:agree", Stance::Agree},
        {"判定：反对", Stance::Oppose},
        {"判定:反对", Stance::Oppose},
        {"判定：同意", Stance::Agree},
        {"判定:同意", Stance::Agree},
    };
    const std::string lowered = to_lower(text);
    std::size_t best_pos = std::string::npos;
    for (const Marker& m : kMarkers) {
        // English markers are matched case-insensitively on the lowered text;
        // the multibyte Chinese markers are unaffected by ASCII lowering.
        std::size_t pos = lowered.rfind(m.needle);
        if (pos != std::string::npos &&
            (best_pos == std::string::npos || pos > best_pos)) {
            best_pos = pos;
            verdict.stance = m.stance;
        }
    }
    if (best_pos != std::string::npos) {
        return verdict;
    }

    const std::string sentence = detail::final_sentence(text);
    const std::string sentence_lower = to_lower(sentence);
    if (sentence.find("没有误解") != std::string::npos ||
        sentence_lower.find("does not misconstrue") != std::string::npos ||
        sentence_lower.find("did not misconstrue") != std::string::npos) {
        verdict.stance = Stance::Agree;
    } else if (sentence.find("误解") != std::string::npos ||
               sentence_lower.find("misconstrue") != std::string::npos) {
        verdict.stance = Stance::Oppose;
    } else {
        verdict.stance = Stance::Unparseable;
    }
    return verdict;
}

/// The revision rule: revise iff the opposing share of parseable critiques
/// strictly exceeds delta. Unparseable verdicts leave the denominator;
/// an all-unparseable panel keeps the original analysis.
inline bool decide_revision(const std::vector<CritiqueVerdict>& verdicts,
                            double delta) {
    if (delta < 0.0 || delta > 1.0) {
        throw ValidationError("decide_revision: delta must be in [0,1]");
    }
    std::size_t parseable = 0;
    std::size_t oppose = 0;
    for (const CritiqueVerdict& v : verdicts) {
        if (v.stance == Stance::Unparseable) continue;
        ++parseable;
        if (v.stance == Stance::Oppose) ++oppose;
    }
    if (parseable == 0) return false;
    return static_cast<double>(oppose) / static_cast<double>(parseable) > delta;
}

// ---------------------------------------------------------------------------
// Transcript
// ---------------------------------------------------------------------------

struct CallRecord {
    std::string model;
    TemplateId template_id = TemplateId::question_analysis;
    int attempt_count = 1;
};

using CallLog = std::vector<CallRecord>;

struct CritiqueRecord {
    std::string critic;
    CritiqueVerdict verdict;
};

struct EvidenceRecord {
    std::string article_id;
    std::string initial_analysis;
    std::vector<CritiqueRecord> critiques;
    std::optional<std::string> revised;
    std::string final_analysis;  // == revised when present, else initial
};

/// Full record of one pipeline run over one case.
struct DiscussionTranscript {
    std::string case_id;
    RunSetting setting = RunSetting::BaselineCoT;
    std::vector<std::pair<std::string, std::string>> question_analyses;
    std::optional<std::string> summary;
    std::vector<EvidenceRecord> evidence_records;
    std::string response;
    CallLog call_log;
    bool failed = false;
    std::string failure_reason;
};

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct DiscussionConfig {
    std::shared_ptr<Backend> target;
    std::vector<std::shared_ptr<Backend>> peers;
    double delta = 0.66;
    DecodingParams decoding;
    int num_candidates = 5;
    int max_regens = 2;
    TemplateCatalog catalog = TemplateCatalog::builtin(TemplateLanguage::zh);
    std::map<TemplateId, std::vector<IclExample>> icl;
    bool parallel = true;
    std::function<void(const std::string&)> warn;

    void validate() const {
        if (!target) throw ConfigError("discussion config: no target endpoint");
        if (delta < 0.0 || delta > 1.0) {
            throw ConfigError("discussion config: delta must be in [0,1]");
        }
        if (num_candidates < 1) {
            throw ConfigError("discussion config: num_candidates must be >= 1");
        }
        if (max_regens < 0) {
            throw ConfigError("discussion config: max_regens must be >= 0");
        }
        for (const auto& p : peers) {
            if (!p) throw ConfigError("discussion config: null peer endpoint");
            if (p->name() == target->name()) {
                throw ConfigError("discussion config: target '" +
                                  target->name() + "' also listed as a peer");
            }
        }
        decoding.validate();
    }
};

namespace detail {

template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, bool parallel, F&& fn) {
    std::vector<T> out(n);
    if (!parallel || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::future<T>> futures;
    futures.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        futures.push_back(std::async(std::launch::async,
                                     [&fn, i] { return fn(i); }));
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = futures[i].get();
    return out;
}

}  // namespace detail

/// Runs the discussion protocol over single cases. Immutable once built;
/// safe to share across case workers. Call logs are assembled in protocol
/// order regardless of scheduling, so scripted runs are byte-reproducible.
class DiscussionPipeline {
public:
    explicit DiscussionPipeline(DiscussionConfig config)
        : config_(std::move(config)) {
        config_.validate();
    }

    const DiscussionConfig& config() const noexcept { return config_; }

    /// Stage 1, per model: analyze the question with the retrieved articles
    /// as reference cues. Only the section ahead of the article-analysis
    /// marker is kept.
    std::string analyze_question(Backend& model, const ConsultationCase& c,
                                 CallLog& log) const {
        if (c.candidates.empty()) {
            throw ValidationError("case '" + c.id + "': no candidate articles");
        }
        const PromptTemplate& tmpl =
            config_.catalog.get(TemplateId::question_analysis);
        CompletionResult result = invoke(
            model, TemplateId::question_analysis,
            {{"question", c.question},
             {"articles", format_articles(c.candidates, language())}},
            make_step_tag(TemplateId::question_analysis, c.id), log);
        std::string text = result.text;
        if (tmpl.stop_marker) {
            text = split_on_marker(text, *tmpl.stop_marker).first;
        }
        return std::string(trim(text));
    }

    /// Stage 1, target only: fold every panel member's analysis into one
    /// summary.
    std::string summarize_analyses(
        const ConsultationCase& c,
        const std::vector<std::pair<std::string, std::string>>& analyses,
        CallLog& log) const {
        if (analyses.empty()) {
            throw ValidationError("summarize_analyses: no analyses given");
        }
        CompletionResult result = invoke(
            *config_.target, TemplateId::summarize,
            {{"question", c.question},
             {"articles", format_articles(c.candidates, language())},
             {"analyses", format_analyses(analyses)}},
            make_step_tag(TemplateId::summarize, c.id), log);
        return std::string(trim(result.text));
    }

    /// Stage 2, target only: judge one article against the question
    /// analysis. Exactly one article per call.
    std::string analyze_evidence(const ConsultationCase& c,
                                 const CandidateArticle& candidate,
                                 const std::string& question_analysis,
                                 CallLog& log) const {
        CompletionResult result = invoke(
            *config_.target, TemplateId::evidence_analysis,
            {{"question", c.question},
             {"que_ana", question_analysis},
             {"article", format_single_article(candidate, language())}},
            make_step_tag(TemplateId::evidence_analysis, c.id,
                          candidate.article.id),
            log);
        return std::string(trim(result.text));
    }

    /// Stage 2, per critic: review the target's evidence analysis. Backend
    /// errors propagate; unparseable replies become Unparseable verdicts.
    CritiqueVerdict critique(Backend& critic, const ConsultationCase& c,
                             const CandidateArticle& candidate,
                             const std::string& evidence_analysis,
                             CallLog& log) const {
        CompletionResult result = invoke(
            critic, TemplateId::critique,
            {{"question", c.question},
             {"article", format_single_article(candidate, language())},
             {"art_ana", evidence_analysis},
             {"cur_art_id", candidate.article.id}},
            make_step_tag(TemplateId::critique, c.id, candidate.article.id),
            log);
        return parse_critique(result.text);
    }

    /// Stage 2, target only: rewrite the evidence analysis in light of every
    /// critic's rationale.
    std::string revise(const ConsultationCase& c,
                       const CandidateArticle& candidate,
                       const std::string& question_analysis,
                       const std::string& evidence_analysis,
                       const std::vector<std::string>& critique_rationales,
                       CallLog& log) const {
        CompletionResult result = invoke(
            *config_.target, TemplateId::revise,
            {{"question", c.question},
             {"article", format_single_article(candidate, language())},
             {"que_ana", question_analysis},
             {"art_ana", evidence_analysis},
             {"critiques", format_critiques(critique_rationales)}},
            make_step_tag(TemplateId::revise, c.id, candidate.article.id), log);
        return std::string(trim(result.text));
    }

    /// Final step: answer from the question analysis and every final
    /// evidence analysis, in candidate order.
    std::string generate_response(
        const ConsultationCase& c, const std::string& question_analysis,
        const std::vector<std::pair<std::string, std::string>>& final_analyses,
        CallLog& log) const {
        if (final_analyses.size() != c.candidates.size()) {
            throw ValidationError(
                "generate_response: expected one final analysis per candidate");
        }
        CompletionResult result = invoke(
            *config_.target, TemplateId::respond,
            {{"question", c.question},
             {"articles", format_articles(c.candidates, language())},
             {"que_ana", question_analysis},
             {"art_ana", format_final_analyses(final_analyses)}},
            make_step_tag(TemplateId::respond, c.id), log);
        return std::string(trim(result.text));
    }

    /// Executes one case under `setting`. Any stage error aborts the case;
    /// the partial transcript comes back flagged failed.
    DiscussionTranscript run_case(RunSetting setting,
                                  const ConsultationCase& c) const {
        DiscussionTranscript t;
        t.case_id = c.id;
        t.setting = setting;
        try {
            run_case_impl(setting, c, t);
        } catch (const std::exception& e) {
            t.failed = true;
            t.failure_reason = e.what();
        }
        return t;
    }

private:
    TemplateLanguage language() const { return config_.catalog.language(); }

    void warn(const std::string& msg) const {
        if (config_.warn) {
            config_.warn(msg);
        } else {
            std::cerr << "warning: " << msg << '\n';
        }
    }

    std::string format_analyses(
        const std::vector<std::pair<std::string, std::string>>& analyses) const {
        std::string out;
        std::size_t i = 0;
        for (const auto& [model, text] : analyses) {
            ++i;
            if (!out.empty()) out += "\n\n";
            if (language() == TemplateLanguage::zh) {
                out += "律师" + std::to_string(i) + "的分析：\n";
            } else {
                out += "Lawyer " + std::to_string(i) + "'s analysis:\n";
            }
            out += text;
        }
        return out;
    }

    std::string format_critiques(const std::vector<std::string>& rationales) const {
        std::string out;
        std::size_t i = 0;
        for (const std::string& text : rationales) {
            ++i;
            if (!out.empty()) out += "\n\n";
            if (language() == TemplateLanguage::zh) {
                out += "专家" + std::to_string(i) + "的点评：\n";
            } else {
                out += "Expert " + std::to_string(i) + "'s critique:\n";
            }
            out += text;
        }
        return out;
    }

    std::string format_final_analyses(
        const std::vector<std::pair<std::string, std::string>>& analyses) const {
        std::string out;
        for (const auto& [article_id, text] : analyses) {
            if (!out.empty()) out += "\n\n";
            if (language() == TemplateLanguage::zh) {
                out += "关于第" + article_id + "条的分析：";
            } else {
                out += "Analysis of Article " + article_id + ": ";
            }
            out += text;
        }
        return out;
    }

    CompletionResult invoke(Backend& backend, TemplateId id,
                            const std::map<std::string, std::string>& bindings,
                            const std::string& step_tag, CallLog& log) const {
        std::vector<IclExample> icl;
        if (auto it = config_.icl.find(id); it != config_.icl.end()) {
            icl = it->second;
        }
        RenderedPrompt prompt = config_.catalog.render(id, bindings, icl, step_tag);
        CompletionRequest request;
        request.messages = std::move(prompt.messages);
        request.params = config_.decoding;
        request.step_tag = prompt.step_tag;
        const PromptTemplate& tmpl = config_.catalog.get(id);
        if (tmpl.stop_marker) {
            request.params.stop_sequences.push_back(*tmpl.stop_marker);
        }
        CompletionResult result = complete_with_regen(
            backend, request, default_fragmentary(), config_.max_regens);
        log.push_back({backend.name(), id, result.attempt_count});
        return result;
    }

    void run_case_impl(RunSetting setting, const ConsultationCase& c,
                       DiscussionTranscript& t) const {
        c.validate();
        if (c.candidates.size() !=
            static_cast<std::size_t>(config_.num_candidates)) {
            throw ValidationError(
                "case '" + c.id + "' has " +
                std::to_string(c.candidates.size()) +
                " candidates; configured num_candidates is " +
                std::to_string(config_.num_candidates));
        }

        RunSetting effective = setting;
        if (config_.peers.empty() &&
            (setting == RunSetting::Stage1Only ||
             setting == RunSetting::Stage2Only ||
             setting == RunSetting::ChainOfDiscussion)) {
            warn("setting '" + std::string(to_string(setting)) +
                 "' requested with no peer endpoints; degrading to the "
                 "single-model baseline");
            effective = RunSetting::BaselineCoT;
        }

        std::string question_analysis;
        switch (effective) {
            case RunSetting::VanillaCoT:
                break;  // no question-analysis stage
            case RunSetting::BaselineCoT:
            case RunSetting::Stage2Only:
            case RunSetting::SelfCriticism: {
                question_analysis =
                    analyze_question(*config_.target, c, t.call_log);
                t.question_analyses.emplace_back(config_.target->name(),
                                                 question_analysis);
                t.summary = question_analysis;
                break;
            }
            case RunSetting::Stage1Only:
            case RunSetting::ChainOfDiscussion: {
                std::vector<Backend*> panel;
                panel.push_back(config_.target.get());
                for (const auto& p : config_.peers) panel.push_back(p.get());
                struct FanoutResult {
                    std::string text;
                    CallLog log;
                };
                std::vector<FanoutResult> results =
                    detail::parallel_map<FanoutResult>(
                        panel.size(), config_.parallel, [&](std::size_t i) {
                            FanoutResult r;
                            r.text = analyze_question(*panel[i], c, r.log);
                            return r;
                        });
                for (std::size_t i = 0; i < panel.size(); ++i) {
                    t.question_analyses.emplace_back(panel[i]->name(),
                                                     results[i].text);
                    t.call_log.insert(t.call_log.end(), results[i].log.begin(),
                                      results[i].log.end());
                }
                question_analysis =
                    summarize_analyses(c, t.question_analyses, t.call_log);
                t.summary = question_analysis;
                break;
            }
        }

        std::vector<Backend*> critics;
        if (effective == RunSetting::Stage2Only ||
            effective == RunSetting::ChainOfDiscussion) {
            for (const auto& p : config_.peers) critics.push_back(p.get());
        } else if (effective == RunSetting::SelfCriticism) {
            critics.push_back(config_.target.get());
        }

        t.evidence_records =
            run_evidence_stage(c, question_analysis, critics, t.call_log);

        std::vector<std::pair<std::string, std::string>> finals;
        finals.reserve(t.evidence_records.size());
        for (const EvidenceRecord& rec : t.evidence_records) {
            finals.emplace_back(rec.article_id, rec.final_analysis);
        }
        t.response = generate_response(c, question_analysis, finals, t.call_log);
    }

    std::vector<EvidenceRecord> run_evidence_stage(
        const ConsultationCase& c, const std::string& question_analysis,
        const std::vector<Backend*>& critics, CallLog& log) const {
        struct ArticleResult {
            EvidenceRecord record;
            CallLog log;
        };
        std::vector<ArticleResult> results =
            detail::parallel_map<ArticleResult>(
                c.candidates.size(), config_.parallel, [&](std::size_t i) {
                    ArticleResult r;
                    const CandidateArticle& cand = c.candidates[i];
                    r.record.article_id = cand.article.id;
                    r.record.initial_analysis =
                        analyze_evidence(c, cand, question_analysis, r.log);
                    if (!critics.empty()) {
                        struct CritiqueResult {
                            CritiqueRecord record;
                            CallLog log;
                        };
                        std::vector<CritiqueResult> critiques =
                            detail::parallel_map<CritiqueResult>(
                                critics.size(), config_.parallel,
                                [&](std::size_t k) {
                                    CritiqueResult cr;
                                    cr.record.critic = critics[k]->name();
                                    cr.record.verdict = critique(
                                        *critics[k], c, cand,
                                        r.record.initial_analysis, cr.log);
                                    return cr;
                                });
                        std::vector<CritiqueVerdict> verdicts;
                        std::vector<std::string> rationales;
                        for (CritiqueResult& cr : critiques) {
                            r.log.insert(r.log.end(), cr.log.begin(),
                                         cr.log.end());
                            verdicts.push_back(cr.record.verdict);
                            rationales.push_back(cr.record.verdict.rationale);
                            r.record.critiques.push_back(std::move(cr.record));
                        }
                        if (decide_revision(verdicts, config_.delta)) {
                            r.record.revised = revise(
                                c, cand, question_analysis,
                                r.record.initial_analysis, rationales, r.log);
                        }
                    }
                    r.record.final_analysis = r.record.revised
                                                  ? *r.record.revised
                                                  : r.record.initial_analysis;
                    return r;
                });
        std::vector<EvidenceRecord> records;
        records.reserve(results.size());
        for (ArticleResult& r : results) {
            log.insert(log.end(), r.log.begin(), r.log.end());
            records.push_back(std::move(r.record));
        }
        return records;
    }

    DiscussionConfig config_;
};

}  // namespace cod
