#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "cod/backend.hpp"

namespace cod {

/// Deterministic backend for tests and offline runs. Responses come from
/// an explicit script keyed by step_tag, or, in synthetic mode, from a pure
/// function of (endpoint name, step_tag, request digest, seed). Repeated
/// identical requests walk a keyed sequence, which is how regeneration
/// fixtures model fragment-then-complete behavior.
class ScriptedBackend : public Backend {
public:
    struct ScriptEntry {
        std::vector<std::string> texts;
        FinishReason finish_reason = FinishReason::stop;
    };

    explicit ScriptedBackend(ModelEndpoint endpoint, bool synthetic = false,
                             std::uint64_t seed = 0)
        : Backend(std::move(endpoint)), synthetic_(synthetic), seed_(seed) {}

    void add(const std::string& key, std::string text,
             FinishReason reason = FinishReason::stop) {
        ScriptEntry e;
        e.texts.push_back(std::move(text));
        e.finish_reason = reason;
        entries_[key] = std::move(e);
    }

    void add_sequence(const std::string& key, std::vector<std::string> texts,
                      FinishReason reason = FinishReason::stop) {
        entries_[key] = ScriptEntry{std::move(texts), reason};
    }

    /// Loads script entries from a line-delimited file of
    /// {"key": ..., "text": ...} or {"key": ..., "texts": [...]} records.
    void load_script(const std::filesystem::path& path) {
        std::size_t line_no = 0;
        for (const std::string& line : split_lines(read_text_file(path))) {
            ++line_no;
            if (trim(line).empty()) continue;
            nlohmann::ordered_json j;
            try {
                j = nlohmann::ordered_json::parse(line);
            } catch (const std::exception& e) {
                throw ValidationError("script line " + std::to_string(line_no) +
                                      ": invalid JSON: " + e.what());
            }
            if (!j.contains("key")) {
                throw ValidationError("script line " + std::to_string(line_no) +
                                      ": missing key");
            }
            ScriptEntry entry;
            if (j.contains("texts")) {
                for (const auto& t : j["texts"]) {
                    entry.texts.push_back(t.get<std::string>());
                }
            } else if (j.contains("text")) {
                entry.texts.push_back(j["text"].get<std::string>());
            }
            if (entry.texts.empty()) {
                throw ValidationError("script line " + std::to_string(line_no) +
                                      ": no text");
            }
            if (j.contains("finish_reason")) {
                std::string r = j["finish_reason"].get<std::string>();
                entry.finish_reason = r == "length" ? FinishReason::length
                                     : r == "stop" ? FinishReason::stop
                                                   : FinishReason::other;
            }
            entries_[j["key"].get<std::string>()] = std::move(entry);
        }
    }

protected:
    CompletionResult do_complete(const CompletionRequest& request) override {
        auto it = entries_.find(request.step_tag);
        if (it != entries_.end()) {
            std::lock_guard<std::mutex> lock(mutex_);
            std::size_t idx = sequence_positions_[request.step_tag]++;
            const ScriptEntry& entry = it->second;
            idx = std::min(idx, entry.texts.size() - 1);
            return CompletionResult{entry.texts[idx], entry.finish_reason, 1};
        }
        if (synthetic_) {
            return CompletionResult{synthesize(request), FinishReason::stop, 1};
        }
        throw EndpointError("scripted endpoint '" + name() +
                            "' has no entry for key '" + request.step_tag + "'");
    }

private:
    // step_tag shape is "<template_id>:<case_id>[:<article_id>]".
    static std::string step_kind(const std::string& step_tag) {
        std::size_t pos = step_tag.find(':');
        return pos == std::string::npos ? step_tag : step_tag.substr(0, pos);
    }

    /// Article-id tokens mentioned in the request, in order of first
    /// appearance. Recognizes the two shapes the prompt formatter emits.
    static std::vector<std::string> scan_article_ids(
        const CompletionRequest& request) {
        std::vector<std::string> ids;
        auto push_unique = [&](const std::string& id) {
            if (!id.empty() &&
                std::find(ids.begin(), ids.end(), id) == ids.end()) {
                ids.push_back(id);
            }
        };
        for (const ChatMessage& m : request.messages) {
            const std::string& s = m.content;
            std::size_t pos = 0;
            while ((pos = s.find("\xE7\xAC\xAC", pos)) != std::string::npos) {
                std::size_t start = pos + 3;  // past "第"
                std::size_t end = s.find("\xE6\x9D\xA1", start);  // "条"
                if (end != std::string::npos && end > start &&
                    end - start <= 24) {
                    push_unique(s.substr(start, end - start));
                }
                pos = start;
            }
            pos = 0;
            while ((pos = s.find("Article ", pos)) != std::string::npos) {
                std::size_t start = pos + 8;
                std::size_t end = start;
                while (end < s.size() &&
                       (std::isalnum(static_cast<unsigned char>(s[end])) ||
                        s[end] == '-' || s[end] == '_')) {
                    ++end;
                }
                push_unique(s.substr(start, end - start));
                pos = start;
            }
        }
        return ids;
    }

    std::string synthesize(const CompletionRequest& request) const {
        const std::uint64_t h = request.digest(seed_) ^ fnv1a64(name());
        const std::string tag =
            name() + "/" + request.step_tag + "/" + to_hex(h).substr(0, 8);
        const std::string kind = step_kind(request.step_tag);
        static const char* kPoints[] = {
            "the factual background of the consultation",
            "the rights and obligations at issue",
            "the applicable registration procedure",
            "the allocation of the burden of proof",
            "the scope of statutory exceptions",
            "the consequences of non-performance",
            "the potential follow-up scenarios",
            "the limits of the cited provisions",
        };
        auto point = [&](int shift) {
            return kPoints[(h >> shift) & 0x7];
        };
        if (kind == "critique") {
            bool oppose = (h >> 17) & 1;
            std::string body = "Review (" + tag + "): the analysis addresses " +
                               std::string(point(3)) + " but its treatment of " +
                               point(9) + " deserves scrutiny.\n";
            body += oppose ? "VERDICT: OPPOSE" : "VERDICT: AGREE";
            return body;
        }
        if (kind == "judge") {
            int rating = 1 + static_cast<int>(h % 10);
            return "Assessment (" + tag + "): the answer covers " +
                   std::string(point(5)) + " and partially covers " + point(11) +
                   ".\nRating: [[" + std::to_string(rating) + "]]";
        }
        if (kind == "respond") {
            std::string body = "Response (" + tag + "): ";
            bool cited = false;
            for (const std::string& id : scan_article_ids(request)) {
                std::uint64_t hid = fnv1a64(id, h);
                if ((hid >> 5) & 1) {
                    body += "\xE6\xA0\xB9\xE6\x8D\xAE\xE7\xAC\xAC" + id +
                            "\xE6\x9D\xA1, ";  // 根据第{id}条
                    body += std::string(point(static_cast<int>(hid & 0x1F))) +
                            " supports the consultant's position. ";
                    cited = true;
                }
            }
            if (!cited) {
                body += "none of the reference articles applies directly; ";
            }
            body += "overall the consultant should weigh " +
                    std::string(point(23)) + ".";
            return body;
        }
        // question_analysis, summarize, evidence_analysis, revise
        return "Analysis (" + tag + "): the key consideration is " +
               std::string(point(7)) + ", followed by " + point(13) + ".";
    }

    std::map<std::string, ScriptEntry> entries_;
    bool synthetic_ = false;
    std::uint64_t seed_ = 0;
    mutable std::mutex mutex_;
    std::map<std::string, std::size_t> sequence_positions_;
};

}  // namespace cod
