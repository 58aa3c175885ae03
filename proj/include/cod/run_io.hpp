#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cod/evaluation.hpp"
#include "cod/pipeline.hpp"
#include "cod/util.hpp"

namespace cod {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run directory locking
// ---------------------------------------------------------------------------

/// Exclusive lock on a run directory; two commands never write the same
/// directory concurrently. The lock file is created O_EXCL and removed on
/// destruction.
class RunLock {
public:
    explicit RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
        fs::create_directories(run_dir);
        int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw ConfigError("run directory '" + run_dir.string() +
                              "' is locked by another command (remove " +
                              path_.string() + " if stale)");
        }
        ::close(fd);
    }

    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string run_id;
    RunSetting setting = RunSetting::BaselineCoT;
    std::string target;
    std::vector<std::string> panel;  // target first, then peers
    TemplateLanguage language = TemplateLanguage::zh;
    std::string corpus_digest;
    std::uint64_t seed = 0;
    std::string created_at;
    std::string completed_at;
    std::vector<std::string> failed_cases;
    nlohmann::ordered_json config_snapshot;
};

inline fs::path manifest_path(const fs::path& run_dir) {
    return run_dir / "manifest.json";
}

inline void write_manifest(const fs::path& run_dir, const RunManifest& m) {
    nlohmann::ordered_json j;
    j["run_id"] = m.run_id;
    j["setting"] = to_string(m.setting);
    j["target"] = m.target;
    j["panel"] = m.panel;
    j["template_language"] = to_string(m.language);
    j["corpus_digest"] = m.corpus_digest;
    j["seed"] = m.seed;
    j["created_at"] = m.created_at;
    j["completed_at"] = m.completed_at;
    j["failed_cases"] = m.failed_cases;
    j["config"] = m.config_snapshot;
    write_text_file(manifest_path(run_dir), j.dump(2) + "\n");
}

inline RunManifest read_manifest(const fs::path& run_dir) {
    const fs::path path = manifest_path(run_dir);
    if (!fs::exists(path)) {
        throw ConfigError("no manifest in '" + run_dir.string() +
                          "'; is this a run directory?");
    }
    nlohmann::ordered_json j =
        nlohmann::ordered_json::parse(read_text_file(path));
    RunManifest m;
    m.run_id = j.value("run_id", std::string{});
    m.setting = run_setting_from_string(j.value("setting", std::string{"bs"}));
    m.target = j.value("target", std::string{});
    for (const auto& p : j.value("panel", nlohmann::ordered_json::array())) {
        m.panel.push_back(p.get<std::string>());
    }
    m.language = template_language_from_string(
        j.value("template_language", std::string{"zh"}));
    m.corpus_digest = j.value("corpus_digest", std::string{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.created_at = j.value("created_at", std::string{});
    m.completed_at = j.value("completed_at", std::string{});
    for (const auto& c :
         j.value("failed_cases", nlohmann::ordered_json::array())) {
        m.failed_cases.push_back(c.get<std::string>());
    }
    if (j.contains("config")) m.config_snapshot = j["config"];
    return m;
}

// ---------------------------------------------------------------------------
// Transcript files: one per case, line-delimited sections
// ---------------------------------------------------------------------------

inline std::string sanitize_filename(const std::string& id) {
    std::string out;
    for (char c : id) {
        out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                       c == '_' || c == '.'
                   ? c
                   : '_';
    }
    return out.empty() ? "_" : out;
}

inline fs::path transcript_dir(const fs::path& run_dir) {
    return run_dir / "transcripts";
}

inline std::string transcript_to_jsonl(const DiscussionTranscript& t) {
    std::string out;
    auto emit = [&](nlohmann::ordered_json j) {
        out += j.dump();
        out += '\n';
    };
    emit({{"section", "meta"},
          {"case_id", t.case_id},
          {"setting", to_string(t.setting)},
          {"failed", t.failed},
          {"failure_reason", t.failure_reason}});
    for (const auto& [model, text] : t.question_analyses) {
        emit({{"section", "question_analysis"}, {"model", model}, {"text", text}});
    }
    if (t.summary) {
        emit({{"section", "summary"}, {"text", *t.summary}});
    }
    for (const EvidenceRecord& rec : t.evidence_records) {
        nlohmann::ordered_json critiques = nlohmann::ordered_json::array();
        for (const CritiqueRecord& cr : rec.critiques) {
            critiques.push_back({{"critic", cr.critic},
                                 {"stance", to_string(cr.verdict.stance)},
                                 {"rationale", cr.verdict.rationale}});
        }
        nlohmann::ordered_json j{{"section", "evidence"},
                                 {"article_id", rec.article_id},
                                 {"initial", rec.initial_analysis},
                                 {"critiques", std::move(critiques)}};
        j["revised"] = rec.revised ? nlohmann::ordered_json(*rec.revised)
                                   : nlohmann::ordered_json(nullptr);
        j["final"] = rec.final_analysis;
        emit(std::move(j));
    }
    emit({{"section", "response"}, {"text", t.response}});
    for (const CallRecord& call : t.call_log) {
        emit({{"section", "call"},
              {"model", call.model},
              {"template", to_string(call.template_id)},
              {"attempts", call.attempt_count}});
    }
    return out;
}

inline DiscussionTranscript transcript_from_jsonl(const std::string& content,
                                                  const std::string& origin) {
    DiscussionTranscript t;
    bool have_meta = false;
    for (const std::string& line : split_lines(content)) {
        if (trim(line).empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("transcript " + origin + ": invalid JSON: " +
                                  e.what());
        }
        const std::string section = j.value("section", std::string{});
        if (section == "meta") {
            t.case_id = j.value("case_id", std::string{});
            t.setting =
                run_setting_from_string(j.value("setting", std::string{"bs"}));
            t.failed = j.value("failed", false);
            t.failure_reason = j.value("failure_reason", std::string{});
            have_meta = true;
        } else if (section == "question_analysis") {
            t.question_analyses.emplace_back(j.value("model", std::string{}),
                                             j.value("text", std::string{}));
        } else if (section == "summary") {
            t.summary = j.value("text", std::string{});
        } else if (section == "evidence") {
            EvidenceRecord rec;
            rec.article_id = j.value("article_id", std::string{});
            rec.initial_analysis = j.value("initial", std::string{});
            for (const auto& cj :
                 j.value("critiques", nlohmann::ordered_json::array())) {
                CritiqueRecord cr;
                cr.critic = cj.value("critic", std::string{});
                cr.verdict.stance =
                    stance_from_string(cj.value("stance", std::string{}));
                cr.verdict.rationale = cj.value("rationale", std::string{});
                rec.critiques.push_back(std::move(cr));
            }
            if (j.contains("revised") && !j["revised"].is_null()) {
                rec.revised = j["revised"].get<std::string>();
            }
            rec.final_analysis = j.value("final", std::string{});
            t.evidence_records.push_back(std::move(rec));
        } else if (section == "response") {
            t.response = j.value("text", std::string{});
        } else if (section == "call") {
            CallRecord call;
            call.model = j.value("model", std::string{});
            call.template_id = template_id_from_string(
                j.value("template", std::string{"question_analysis"}));
            call.attempt_count = j.value("attempts", 1);
            t.call_log.push_back(std::move(call));
        } else {
            throw ValidationError("transcript " + origin +
                                  ": unknown section '" + section + "'");
        }
    }
    if (!have_meta || t.case_id.empty()) {
        throw ValidationError("transcript " + origin + ": missing meta section");
    }
    return t;
}

inline void write_transcript(const fs::path& run_dir,
                             const DiscussionTranscript& t) {
    write_text_file(transcript_dir(run_dir) /
                        (sanitize_filename(t.case_id) + ".jsonl"),
                    transcript_to_jsonl(t));
}

inline std::vector<DiscussionTranscript> load_transcripts(
    const fs::path& run_dir) {
    std::vector<DiscussionTranscript> transcripts;
    const fs::path dir = transcript_dir(run_dir);
    if (!fs::is_directory(dir)) return transcripts;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
        transcripts.push_back(
            transcript_from_jsonl(read_text_file(f), f.string()));
    }
    return transcripts;
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

inline fs::path report_path(const fs::path& run_dir, bool judged) {
    return run_dir / (judged ? "report_judged.jsonl" : "report.jsonl");
}

inline std::string report_to_jsonl(const RunReport& report) {
    std::string out;
    for (const CaseReport& c : report.cases) {
        nlohmann::ordered_json j{{"section", "case"}, {"case_id", c.case_id}};
        j["n_acc"] = c.n_acc ? nlohmann::ordered_json(*c.n_acc)
                             : nlohmann::ordered_json(nullptr);
        j["o_acc"] = c.o_acc ? nlohmann::ordered_json(*c.o_acc)
                             : nlohmann::ordered_json(nullptr);
        j["response_length"] = c.response_length;
        nlohmann::ordered_json detections = nlohmann::ordered_json::array();
        for (const ReferenceDetection& d : c.detections) {
            detections.push_back({{"article_id", d.article_id},
                                  {"referenced", d.referenced},
                                  {"method", to_string(d.method)},
                                  {"best_lcs_len", d.best_lcs_len},
                                  {"threshold_len", d.threshold_len}});
        }
        j["detections"] = std::move(detections);
        if (c.judge) {
            j["judge_score"] = c.judge->score;
            j["judge_rationale"] = c.judge->rationale;
        }
        j["judge_flagged"] = c.judge_flagged;
        out += j.dump();
        out += '\n';
    }
    nlohmann::ordered_json agg{{"section", "aggregate"},
                               {"run_id", report.run_id},
                               {"case_count", report.cases.size()}};
    agg["macro_n_acc"] = report.macro_n_acc
                             ? nlohmann::ordered_json(*report.macro_n_acc)
                             : nlohmann::ordered_json(nullptr);
    agg["macro_o_acc"] = report.macro_o_acc
                             ? nlohmann::ordered_json(*report.macro_o_acc)
                             : nlohmann::ordered_json(nullptr);
    agg["n_defined"] = report.n_defined;
    agg["o_defined"] = report.o_defined;
    agg["skipped"] = report.skipped;
    agg["mean_judge"] = report.mean_judge
                            ? nlohmann::ordered_json(*report.mean_judge)
                            : nlohmann::ordered_json(nullptr);
    agg["judged_count"] = report.judged_count;
    agg["mean_response_length"] = report.mean_response_length;
    out += agg.dump();
    out += '\n';
    return out;
}

inline RunReport report_from_jsonl(const std::string& content,
                                   const std::string& origin) {
    RunReport report;
    for (const std::string& line : split_lines(content)) {
        if (trim(line).empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("report " + origin + ": invalid JSON: " +
                                  e.what());
        }
        const std::string section = j.value("section", std::string{});
        if (section == "case") {
            CaseReport c;
            c.case_id = j.value("case_id", std::string{});
            if (j.contains("n_acc") && !j["n_acc"].is_null()) {
                c.n_acc = j["n_acc"].get<double>();
            }
            if (j.contains("o_acc") && !j["o_acc"].is_null()) {
                c.o_acc = j["o_acc"].get<double>();
            }
            c.response_length = j.value("response_length", std::size_t{0});
            for (const auto& dj :
                 j.value("detections", nlohmann::ordered_json::array())) {
                ReferenceDetection d;
                d.article_id = dj.value("article_id", std::string{});
                d.referenced = dj.value("referenced", false);
                d.method = detection_method_from_string(
                    dj.value("method", std::string{"none"}));
                d.best_lcs_len = dj.value("best_lcs_len", std::size_t{0});
                d.threshold_len = dj.value("threshold_len", std::size_t{0});
                c.detections.push_back(std::move(d));
            }
            if (j.contains("judge_score")) {
                JudgeScore score;
                score.score = j["judge_score"].get<int>();
                score.rationale = j.value("judge_rationale", std::string{});
                c.judge = std::move(score);
            }
            c.judge_flagged = j.value("judge_flagged", false);
            report.cases.push_back(std::move(c));
        } else if (section == "aggregate") {
            report.run_id = j.value("run_id", std::string{});
            if (j.contains("macro_n_acc") && !j["macro_n_acc"].is_null()) {
                report.macro_n_acc = j["macro_n_acc"].get<double>();
            }
            if (j.contains("macro_o_acc") && !j["macro_o_acc"].is_null()) {
                report.macro_o_acc = j["macro_o_acc"].get<double>();
            }
            report.n_defined = j.value("n_defined", std::size_t{0});
            report.o_defined = j.value("o_defined", std::size_t{0});
            for (const auto& s :
                 j.value("skipped", nlohmann::ordered_json::array())) {
                report.skipped.push_back(s.get<std::string>());
            }
            if (j.contains("mean_judge") && !j["mean_judge"].is_null()) {
                report.mean_judge = j["mean_judge"].get<double>();
            }
            report.judged_count = j.value("judged_count", std::size_t{0});
            report.mean_response_length =
                j.value("mean_response_length", 0.0);
        } else {
            throw ValidationError("report " + origin + ": unknown section '" +
                                  section + "'");
        }
    }
    return report;
}

inline void write_report(const fs::path& run_dir, const RunReport& report,
                         bool judged) {
    write_text_file(report_path(run_dir, judged), report_to_jsonl(report));
}

inline RunReport load_report(const fs::path& run_dir, bool judged) {
    const fs::path path = report_path(run_dir, judged);
    if (!fs::exists(path)) {
        throw ConfigError("no " + path.filename().string() + " in '" +
                          run_dir.string() + "'; run " +
                          (judged ? "the judge command" : "the evaluate command") +
                          " first");
    }
    return report_from_jsonl(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Judge cache: content-addressed score files in the run directory
// ---------------------------------------------------------------------------

inline std::string judge_cache_key(const std::string& case_id,
                                   const std::string& response,
                                   const std::string& judge_name) {
    std::uint64_t h = fnv1a64(case_id);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(response, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(judge_name, h);
    return to_hex(h);
}

inline fs::path judge_cache_path(const fs::path& run_dir,
                                 const std::string& key) {
    return run_dir / "judge_cache" / (key + ".json");
}

inline std::optional<JudgeScore> load_cached_judge_score(
    const fs::path& run_dir, const std::string& key) {
    const fs::path path = judge_cache_path(run_dir, key);
    if (!fs::exists(path)) return std::nullopt;
    nlohmann::ordered_json j =
        nlohmann::ordered_json::parse(read_text_file(path));
    JudgeScore score;
    score.score = j.value("score", 0);
    score.rationale = j.value("rationale", std::string{});
    score.raw = j.value("raw", std::string{});
    return score;
}

inline void store_cached_judge_score(const fs::path& run_dir,
                                     const std::string& key,
                                     const JudgeScore& score) {
    nlohmann::ordered_json j{{"score", score.score},
                             {"rationale", score.rationale},
                             {"raw", score.raw}};
    write_text_file(judge_cache_path(run_dir, key), j.dump() + "\n");
}

}  // namespace cod
