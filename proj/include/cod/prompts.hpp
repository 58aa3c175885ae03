#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cod/backend.hpp"
#include "cod/corpus.hpp"
#include "cod/errors.hpp"
#include "cod/prompt_texts.hpp"
#include "cod/util.hpp"

namespace cod {

enum class TemplateId {
    question_analysis,
    summarize,
    evidence_analysis,
    critique,
    revise,
    respond,
    judge,
};

inline const char* to_string(TemplateId id) {
    switch (id) {
        case TemplateId::question_analysis: return "question_analysis";
        case TemplateId::summarize: return "summarize";
        case TemplateId::evidence_analysis: return "evidence_analysis";
        case TemplateId::critique: return "critique";
        case TemplateId::revise: return "revise";
        case TemplateId::respond: return "respond";
        case TemplateId::judge: return "judge";
    }
    return "unknown";
}

inline TemplateId template_id_from_string(std::string_view s) {
    if (s == "question_analysis") return TemplateId::question_analysis;
    if (s == "summarize") return TemplateId::summarize;
    if (s == "evidence_analysis") return TemplateId::evidence_analysis;
    if (s == "critique") return TemplateId::critique;
    if (s == "revise") return TemplateId::revise;
    if (s == "respond") return TemplateId::respond;
    if (s == "judge") return TemplateId::judge;
    throw TemplateError("unknown template id: '" + std::string(s) + "'");
}

enum class TemplateLanguage { zh, en };

inline const char* to_string(TemplateLanguage lang) {
    return lang == TemplateLanguage::zh ? "zh" : "en";
}

inline TemplateLanguage template_language_from_string(std::string_view s) {
    if (s == "zh") return TemplateLanguage::zh;
    if (s == "en") return TemplateLanguage::en;
    throw ConfigError("unknown template language: '" + std::string(s) +
                      "' (expected zh or en)");
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

namespace detail {

/// Placeholder names found in `text`, in order, duplicates included.
inline std::vector<std::string> find_placeholders(std::string_view text) {
    std::vector<std::string> names;
    std::size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string_view::npos) {
        std::size_t end = text.find("}}", pos + 2);
        if (end == std::string_view::npos) break;
        names.emplace_back(text.substr(pos + 2, end - pos - 2));
        pos = end + 2;
    }
    return names;
}

/// Single-pass substitution. Binding values are inserted verbatim and never
/// rescanned, so values containing braces round-trip untouched.
inline std::string substitute(std::string_view text,
                              const std::map<std::string, std::string>& bindings,
                              const std::string& template_name) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        std::size_t close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        std::string name(text.substr(open + 2, close - open - 2));
        auto it = bindings.find(name);
        if (it == bindings.end()) {
            throw TemplateError("template '" + template_name +
                                "': no binding for placeholder '" + name + "'");
        }
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

}  // namespace detail

struct PromptTemplate {
    TemplateId id = TemplateId::question_analysis;
    std::string system;  // may be empty
    std::string body;    // double-brace placeholders
    std::set<std::string> required_placeholders;
    std::optional<std::string> stop_marker;

    void validate() const {
        std::set<std::string> present;
        for (const std::string& n : detail::find_placeholders(system)) {
            present.insert(n);
        }
        for (const std::string& n : detail::find_placeholders(body)) {
            present.insert(n);
        }
        for (const std::string& req : required_placeholders) {
            if (present.count(req) == 0) {
                throw TemplateError("template '" +
                                    std::string(to_string(id)) +
                                    "': required placeholder '" + req +
                                    "' does not appear in the template");
            }
        }
    }
};

struct RenderedPrompt {
    TemplateId template_id = TemplateId::question_analysis;
    std::vector<ChatMessage> messages;
    std::string step_tag;
};

/// One in-context example: a user turn and the assistant turn that answers
/// it, injected ahead of the live request.
struct IclExample {
    std::string input;
    std::string output;
};

inline constexpr std::size_t kMaxIclExamples = 2;

/// step_tag shape: "<template_id>:<case_id>[:<article_id>]".
inline std::string make_step_tag(TemplateId id, const std::string& case_id,
                                 const std::string& article_id = {}) {
    std::string tag = std::string(to_string(id)) + ":" + case_id;
    if (!article_id.empty()) tag += ":" + article_id;
    return tag;
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

class TemplateCatalog {
public:
    static TemplateCatalog builtin(TemplateLanguage lang) {
        TemplateCatalog cat;
        cat.language_ = lang;
        const bool zh = lang == TemplateLanguage::zh;
        cat.put({TemplateId::question_analysis,
                 zh ? detail::kQuestionAnalysisSystemZh
                    : detail::kQuestionAnalysisSystemEn,
                 zh ? detail::kQuestionAnalysisBodyZh
                    : detail::kQuestionAnalysisBodyEn,
                 {"question", "articles"},
                 zh ? std::optional<std::string>{detail::kQuestionAnalysisStopZh}
                    : std::optional<std::string>{detail::kQuestionAnalysisStopEn}});
        cat.put({TemplateId::summarize,
                 zh ? detail::kSummarizeSystemZh : detail::kSummarizeSystemEn,
                 zh ? detail::kSummarizeBodyZh : detail::kSummarizeBodyEn,
                 {"question", "articles", "analyses"},
                 std::nullopt});
        cat.put({TemplateId::evidence_analysis,
                 zh ? detail::kEvidenceAnalysisSystemZh
                    : detail::kEvidenceAnalysisSystemEn,
                 zh ? detail::kEvidenceAnalysisBodyZh
                    : detail::kEvidenceAnalysisBodyEn,
                 {"question", "que_ana", "article"},
                 std::nullopt});
        cat.put({TemplateId::critique,
                 zh ? detail::kCritiqueSystemZh : detail::kCritiqueSystemEn,
                 zh ? detail::kCritiqueBodyZh : detail::kCritiqueBodyEn,
                 {"question", "article", "art_ana", "cur_art_id"},
                 std::nullopt});
        cat.put({TemplateId::revise,
                 zh ? detail::kReviseSystemZh : detail::kReviseSystemEn,
                 zh ? detail::kReviseBodyZh : detail::kReviseBodyEn,
                 {"question", "article", "que_ana", "art_ana", "critiques"},
                 std::nullopt});
        cat.put({TemplateId::respond,
                 zh ? detail::kRespondSystemZh : detail::kRespondSystemEn,
                 zh ? detail::kRespondBodyZh : detail::kRespondBodyEn,
                 {"question", "articles", "que_ana", "art_ana"},
                 std::nullopt});
        cat.put({TemplateId::judge,
                 "",
                 detail::kJudgeBody,
                 {"question", "articles", "golden_response", "llm_response"},
                 std::nullopt});
        return cat;
    }

    TemplateLanguage language() const noexcept { return language_; }

    const PromptTemplate& get(TemplateId id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) {
            throw TemplateError("template '" + std::string(to_string(id)) +
                                "' not present in catalog");
        }
        return it->second;
    }

    void put(PromptTemplate tmpl) {
        tmpl.validate();
        templates_[tmpl.id] = std::move(tmpl);
    }

    /// Parses one template file: "key: value" front-matter up to a "---"
    /// line, then the template text; an optional "===" line splits system
    /// from user text. Keys: id, required, stop_marker.
    void load_template_file(const std::filesystem::path& path) {
        std::vector<std::string> lines = split_lines(read_text_file(path));
        PromptTemplate tmpl;
        bool have_id = false;
        std::size_t i = 0;
        for (; i < lines.size(); ++i) {
            std::string_view line = trim(lines[i]);
            if (line == "---") {
                ++i;
                break;
            }
            if (line.empty()) continue;
            std::size_t colon = line.find(':');
            if (colon == std::string_view::npos) {
                throw TemplateError("template file " + path.string() +
                                    ": bad front-matter line '" +
                                    std::string(line) + "'");
            }
            std::string key{trim(line.substr(0, colon))};
            std::string value{trim(line.substr(colon + 1))};
            if (key == "id") {
                tmpl.id = template_id_from_string(value);
                have_id = true;
            } else if (key == "required") {
                for (std::string_view part : split_csv(value)) {
                    tmpl.required_placeholders.insert(std::string(trim(part)));
                }
            } else if (key == "stop_marker") {
                if (!value.empty()) tmpl.stop_marker = value;
            } else if (key == "language") {
                // informational; the catalog's language is set at build time
            } else {
                throw TemplateError("template file " + path.string() +
                                    ": unknown front-matter key '" + key + "'");
            }
        }
        if (!have_id) {
            throw TemplateError("template file " + path.string() +
                                ": missing id");
        }
        std::string system;
        std::string body;
        bool in_body = false;
        bool saw_split = false;
        for (; i < lines.size(); ++i) {
            if (!saw_split && trim(lines[i]) == "===") {
                saw_split = true;
                in_body = true;
                continue;
            }
            std::string& dst = in_body ? body : system;
            if (!dst.empty()) dst += '\n';
            dst += lines[i];
        }
        if (!saw_split) {
            body = std::move(system);
            system.clear();
        }
        tmpl.system = std::string(trim(system));
        tmpl.body = std::string(trim(body));
        put(std::move(tmpl));
    }

    /// Loads every regular file in `dir` as a template override.
    void load_overrides(const std::filesystem::path& dir) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) load_template_file(f);
    }

    /// Binds placeholders and injects in-context examples as alternating
    /// user/assistant messages ahead of the live request. Every placeholder
    /// must resolve; values are substituted verbatim.
    RenderedPrompt render(TemplateId id,
                          const std::map<std::string, std::string>& bindings,
                          const std::vector<IclExample>& icl_examples = {},
                          const std::string& step_tag = {}) const {
        if (icl_examples.size() > kMaxIclExamples) {
            throw ValidationError("render: at most " +
                                  std::to_string(kMaxIclExamples) +
                                  " in-context examples are supported");
        }
        const PromptTemplate& tmpl = get(id);
        for (const std::string& req : tmpl.required_placeholders) {
            if (bindings.count(req) == 0) {
                throw TemplateError("template '" +
                                    std::string(to_string(id)) +
                                    "': no binding for placeholder '" + req +
                                    "'");
            }
        }
        RenderedPrompt out;
        out.template_id = id;
        out.step_tag = step_tag.empty()
                           ? std::string(to_string(id))
                           : step_tag;
        if (!tmpl.system.empty()) {
            out.messages.push_back(
                {Role::system,
                 detail::substitute(tmpl.system, bindings, to_string(id))});
        }
        for (const IclExample& ex : icl_examples) {
            out.messages.push_back({Role::user, ex.input});
            out.messages.push_back({Role::assistant, ex.output});
        }
        out.messages.push_back(
            {Role::user, detail::substitute(tmpl.body, bindings, to_string(id))});
        return out;
    }

private:
    static std::vector<std::string_view> split_csv(std::string_view s) {
        std::vector<std::string_view> parts;
        std::size_t start = 0;
        while (start <= s.size()) {
            std::size_t comma = s.find(',', start);
            if (comma == std::string_view::npos) {
                parts.push_back(s.substr(start));
                break;
            }
            parts.push_back(s.substr(start, comma - start));
            start = comma + 1;
        }
        return parts;
    }

    TemplateLanguage language_ = TemplateLanguage::zh;
    std::map<TemplateId, PromptTemplate> templates_;
};

// ---------------------------------------------------------------------------
// Article formatting and output splitting
// ---------------------------------------------------------------------------

/// Renders candidate articles as prompt blocks: source + identifier + body,
/// in candidate order, blank-line separated. Relevance labels are ground
/// truth for evaluation and never appear here.
inline std::string format_articles(const std::vector<CandidateArticle>& candidates,
                                   TemplateLanguage lang) {
    if (candidates.empty()) {
        throw ValidationError("format_articles: empty candidate list");
    }
    std::string out;
    for (const CandidateArticle& c : candidates) {
        if (!out.empty()) out += "\n\n";
        if (lang == TemplateLanguage::zh) {
            if (!c.article.source.empty()) {
                out += "《" + c.article.source + "》";
            }
            out += "第" + c.article.id + "条\n";
        } else {
            if (!c.article.source.empty()) {
                out += "[" + c.article.source + "] ";
            }
            out += "Article " + c.article.id + "\n";
        }
        out += c.article.text;
    }
    return out;
}

inline std::string format_single_article(const CandidateArticle& candidate,
                                         TemplateLanguage lang) {
    return format_articles({candidate}, lang);
}

/// Splits `output` at the first occurrence of `marker`; absent marker
/// yields (whole text, nullopt).
inline std::pair<std::string, std::optional<std::string>> split_on_marker(
    const std::string& output, const std::string& marker) {
    if (marker.empty()) {
        throw ValidationError("split_on_marker: empty marker");
    }
    std::size_t pos = output.find(marker);
    if (pos == std::string::npos) {
        return {output, std::nullopt};
    }
    return {output.substr(0, pos), output.substr(pos + marker.size())};
}

// ---------------------------------------------------------------------------
// In-context example files
// ---------------------------------------------------------------------------

/// Parses a paired plain-text record file:
///   === input ===
///   ...\n
///   === output ===
///   ...\n
/// repeated per example.
inline std::vector<IclExample> load_icl_examples(
    const std::filesystem::path& path) {
    std::vector<IclExample> examples;
    std::string* current = nullptr;
    for (const std::string& line : split_lines(read_text_file(path))) {
        std::string_view t = trim(line);
        if (t == "=== input ===") {
            examples.emplace_back();
            current = &examples.back().input;
            continue;
        }
        if (t == "=== output ===") {
            if (examples.empty()) {
                throw ValidationError("icl file " + path.string() +
                                      ": output section before input");
            }
            current = &examples.back().output;
            continue;
        }
        if (current == nullptr) {
            if (t.empty()) continue;
            throw ValidationError("icl file " + path.string() +
                                  ": text outside input/output sections");
        }
        if (!current->empty()) *current += '\n';
        *current += line;
    }
    for (IclExample& ex : examples) {
        ex.input = std::string(trim(ex.input));
        ex.output = std::string(trim(ex.output));
        if (ex.input.empty() || ex.output.empty()) {
            throw ValidationError("icl file " + path.string() +
                                  ": example with empty input or output");
        }
    }
    return examples;
}

}  // namespace cod
