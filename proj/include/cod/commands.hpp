#pragma once

#include <atomic>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "cod/config.hpp"
#include "cod/corpus.hpp"
#include "cod/evaluation.hpp"
#include "cod/pipeline.hpp"
#include "cod/run_io.hpp"

namespace cod {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartialFailure = 1;
inline constexpr int kExitConfigError = 2;

namespace detail {

inline std::string format_metric(const std::optional<double>& v) {
    if (!v) return "undefined";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
}

inline void print_report_table(const RunReport& report, std::ostream& out) {
    out << "case                  n_acc    o_acc    judge  len\n";
    for (const CaseReport& c : report.cases) {
        std::ostringstream row;
        row << std::left << std::setw(20) << c.case_id << "  ";
        auto cell = [&](const std::optional<double>& v) {
            if (v) {
                row << std::left << std::setw(7) << std::fixed
                    << std::setprecision(4) << *v << "  ";
            } else {
                row << std::left << std::setw(7) << "-" << "  ";
            }
        };
        cell(c.n_acc);
        cell(c.o_acc);
        if (c.judge) {
            row << std::left << std::setw(5) << c.judge->score << "  ";
        } else {
            row << std::left << std::setw(5) << (c.judge_flagged ? "!" : "-")
                << "  ";
        }
        row << c.response_length;
        out << row.str() << "\n";
    }
    out << "macro N-Acc: " << format_metric(report.macro_n_acc) << " ("
        << report.n_defined << " defined)   macro O-Acc: "
        << format_metric(report.macro_o_acc) << " (" << report.o_defined
        << " defined)\n";
    if (report.mean_judge) {
        out << "mean judge score: " << std::fixed << std::setprecision(3)
            << *report.mean_judge << " over " << report.judged_count
            << " case(s)\n";
    }
    out << "mean response length: " << std::fixed << std::setprecision(1)
        << report.mean_response_length << " code points\n";
    if (!report.skipped.empty()) {
        out << "skipped cases:";
        for (const std::string& id : report.skipped) out << ' ' << id;
        out << "\n";
    }
}

template <typename F>
inline void bounded_parallel_for(std::size_t n, int workers, F&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    const int count = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(workers), n));
    threads.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ingest: annotations + articles + questions -> case file
// ---------------------------------------------------------------------------

struct IngestArgs {
    fs::path annotations;
    fs::path articles;
    fs::path questions;
    fs::path out;
    int num_candidates = 5;
};

/// Aggregates annotator scores into labels, assembles each case's
/// fixed-size candidate set, writes the corpus and prints its statistics.
inline int cmd_ingest(const IngestArgs& args, std::ostream& out = std::cout) {
    if (args.num_candidates < 1) {
        throw ConfigError("ingest: num_candidates must be >= 1");
    }

    // Article store: {id, source, text} per line.
    std::map<std::string, EvidenceArticle> store;
    std::size_t line_no = 0;
    for (const std::string& line : split_lines(read_text_file(args.articles))) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("articles line " + std::to_string(line_no) +
                                  ": invalid JSON: " + e.what());
        }
        EvidenceArticle article;
        article.id = j.value("id", std::string{});
        article.source = j.value("source", std::string{});
        article.text = j.value("text", std::string{});
        article.validate();
        if (!store.emplace(article.id, article).second) {
            throw ValidationError("articles: duplicate article id '" +
                                  article.id + "'");
        }
    }

    // Annotations, grouped per case.
    std::map<std::string, std::vector<AnnotationRecord>> by_case;
    {
        std::set<std::pair<std::string, std::string>> seen;
        for (AnnotationRecord& rec : load_annotations(args.annotations)) {
            if (!seen.emplace(rec.case_id, rec.article_id).second) {
                throw ValidationError("annotations: duplicate record for case '" +
                                      rec.case_id + "', article '" +
                                      rec.article_id + "'");
            }
            by_case[rec.case_id].push_back(std::move(rec));
        }
    }

    // Questions: {id, question, gold_response?, retrieved: [{article_id,
    // score}]} per line. Retrieval scores order the not-required pool.
    std::vector<ConsultationCase> cases;
    std::set<std::string> case_ids;
    line_no = 0;
    for (const std::string& line : split_lines(read_text_file(args.questions))) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ValidationError("questions line " + std::to_string(line_no) +
                                  ": invalid JSON: " + e.what());
        }
        ConsultationCase c;
        c.id = j.value("id", std::string{});
        c.question = j.value("question", std::string{});
        if (c.id.empty() || c.question.empty()) {
            throw ValidationError("questions line " + std::to_string(line_no) +
                                  ": id and question required");
        }
        if (!case_ids.insert(c.id).second) {
            throw ValidationError("questions: duplicate case id '" + c.id + "'");
        }
        if (j.contains("gold_response") && !j["gold_response"].is_null()) {
            c.gold_response = j["gold_response"].get<std::string>();
        }
        std::map<std::string, double> scores;
        for (const auto& rj :
             j.value("retrieved", nlohmann::ordered_json::array())) {
            std::string article_id = rj.value("article_id", std::string{});
            double score = rj.value("score", 0.0);
            if (score < 0.0 || score > 1.0) {
                throw ValidationError("case '" + c.id + "': retriever score for "
                                      "article '" + article_id +
                                      "' outside [0,1]");
            }
            scores[article_id] = score;
        }

        auto ann_it = by_case.find(c.id);
        if (ann_it == by_case.end()) {
            throw ValidationError("case '" + c.id + "' has no annotations");
        }
        std::vector<CandidateArticle> required;
        std::vector<CandidateArticle> pool;
        for (const AnnotationRecord& rec : ann_it->second) {
            auto article_it = store.find(rec.article_id);
            if (article_it == store.end()) {
                throw ValidationError("case '" + c.id + "': annotated article '" +
                                      rec.article_id +
                                      "' not present in the article store");
            }
            CandidateArticle cand;
            cand.article = article_it->second;
            cand.label = aggregate_annotations(rec.scores);
            if (auto s = scores.find(rec.article_id); s != scores.end()) {
                cand.retriever_score = s->second;
            }
            (cand.label == RelevanceLabel::NotRequired ? pool : required)
                .push_back(std::move(cand));
        }
        std::sort(required.begin(), required.end(),
                  [](const CandidateArticle& a, const CandidateArticle& b) {
                      if (a.retriever_score != b.retriever_score) {
                          return a.retriever_score > b.retriever_score;
                      }
                      return a.article.id < b.article.id;
                  });
        try {
            c.candidates =
                build_candidate_set(std::move(required), std::move(pool),
                                    static_cast<std::size_t>(args.num_candidates));
        } catch (const ValidationError& e) {
            throw ValidationError("case '" + c.id + "': " + e.what());
        }
        c.validate();
        cases.push_back(std::move(c));
    }

    save_corpus(cases, args.out);
    const CorpusStats st = corpus_stats(cases);
    out << "wrote " << st.case_count << " case(s) to " << args.out.string()
        << "\n";
    out << std::fixed << std::setprecision(2) << "mean labels per case: "
        << st.mean_necessary << " necessary, " << st.mean_optional
        << " optional, " << st.mean_not_required << " not required\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsArgs {
    fs::path corpus;
};

inline int cmd_stats(const StatsArgs& args, std::ostream& out = std::cout) {
    const std::vector<ConsultationCase> cases = load_corpus(args.corpus);
    const CorpusStats st = corpus_stats(cases);
    out << "cases: " << st.case_count << "\n";
    out << std::fixed << std::setprecision(4)
        << "mean necessary:    " << st.mean_necessary << " (total "
        << st.total_necessary << ")\n"
        << "mean optional:     " << st.mean_optional << " (total "
        << st.total_optional << ")\n"
        << "mean not required: " << st.mean_not_required << " (total "
        << st.total_not_required << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
    fs::path config;
    fs::path corpus;
    std::string setting = "cod";
    std::string target;
    fs::path out_dir;
    std::string run_id;  // defaults to the out_dir basename
    std::optional<double> delta;
    std::optional<int> num_candidates;
    std::optional<std::string> template_lang;
    std::optional<std::uint64_t> seed;
    bool log_raw = false;
};

/// Executes one setting over the whole corpus with bounded case
/// parallelism. Exit code 0 only when every case produced a transcript.
inline int cmd_run(const RunArgs& args, std::ostream& out = std::cout) {
    RunConfig cfg = load_run_config(args.config);
    if (args.delta) cfg.delta = *args.delta;
    if (args.num_candidates) cfg.num_candidates = *args.num_candidates;
    if (args.template_lang) {
        cfg.language = template_language_from_string(*args.template_lang);
    }
    if (args.seed) cfg.seed = *args.seed;
    if (cfg.delta < 0.0 || cfg.delta > 1.0) {
        throw ConfigError("delta must be in [0,1]");
    }
    // The manifest snapshot records effective values, overrides included.
    cfg.snapshot["delta"] = cfg.delta;
    cfg.snapshot["num_candidates"] = cfg.num_candidates;
    cfg.snapshot["template_language"] = to_string(cfg.language);
    cfg.snapshot["seed"] = cfg.seed;

    const RunSetting setting = run_setting_from_string(args.setting);
    if (args.target.empty()) throw ConfigError("run: --target is required");
    const EndpointSpec& target_spec = cfg.find_endpoint(args.target);

    const std::vector<ConsultationCase> cases = load_corpus(args.corpus);
    if (cases.empty()) throw ValidationError("run: corpus is empty");
    for (const ConsultationCase& c : cases) {
        if (c.candidates.size() !=
            static_cast<std::size_t>(cfg.num_candidates)) {
            throw ConfigError("case '" + c.id + "' has " +
                              std::to_string(c.candidates.size()) +
                              " candidates; configured num_candidates is " +
                              std::to_string(cfg.num_candidates));
        }
    }

    if (fs::exists(manifest_path(args.out_dir))) {
        throw ConfigError("run directory '" + args.out_dir.string() +
                          "' already holds a run; directories are append-only");
    }
    RunLock lock(args.out_dir);

    std::unique_ptr<RawLogSink> raw_log;
    if (args.log_raw) {
        raw_log = std::make_unique<RawLogSink>(args.out_dir / "raw.jsonl");
    }

    DiscussionConfig dcfg;
    dcfg.target = make_backend(target_spec, cfg, raw_log.get());
    for (const EndpointSpec& spec : cfg.endpoints) {
        // Peers default to every other configured endpoint; a declared
        // judge endpoint stays out of the discussion panel.
        if (spec.name == args.target) continue;
        if (!cfg.judge.empty() && spec.name == cfg.judge) continue;
        dcfg.peers.push_back(make_backend(spec, cfg, raw_log.get()));
    }
    dcfg.delta = cfg.delta;
    dcfg.decoding = cfg.decoding;
    dcfg.num_candidates = cfg.num_candidates;
    dcfg.max_regens = cfg.max_regens;
    dcfg.catalog = make_catalog(cfg);
    dcfg.icl = load_icl_set(cfg);
    const DiscussionPipeline pipeline(std::move(dcfg));

    RunManifest manifest;
    manifest.run_id = args.run_id.empty()
                          ? args.out_dir.filename().string()
                          : args.run_id;
    manifest.setting = setting;
    manifest.target = args.target;
    manifest.panel.push_back(pipeline.config().target->name());
    for (const auto& p : pipeline.config().peers) {
        manifest.panel.push_back(p->name());
    }
    manifest.language = cfg.language;
    manifest.corpus_digest = file_digest_hex(args.corpus);
    manifest.seed = cfg.seed;
    manifest.created_at = now_iso8601();
    manifest.config_snapshot = cfg.snapshot;

    std::vector<DiscussionTranscript> transcripts(cases.size());
    detail::bounded_parallel_for(
        cases.size(), cfg.case_parallelism,
        [&](std::size_t i) { transcripts[i] = pipeline.run_case(setting, cases[i]); });

    for (const DiscussionTranscript& t : transcripts) {
        write_transcript(args.out_dir, t);
        if (t.failed) manifest.failed_cases.push_back(t.case_id);
    }
    manifest.completed_at = now_iso8601();
    write_manifest(args.out_dir, manifest);

    out << "run '" << manifest.run_id << "': " << transcripts.size()
        << " case(s), " << manifest.failed_cases.size() << " failed\n";
    for (const std::string& id : manifest.failed_cases) {
        out << "failed: " << id << "\n";
    }
    return manifest.failed_cases.empty() ? kExitOk : kExitPartialFailure;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    fs::path run_dir;
    fs::path corpus;
};

/// Pure post-hoc metric computation: reference detection, per-case
/// accuracies and macro averages. Performs no network activity by
/// construction — no endpoint is ever built here.
inline int cmd_evaluate(const EvaluateArgs& args, std::ostream& out = std::cout) {
    const RunManifest manifest = read_manifest(args.run_dir);
    const std::string digest = file_digest_hex(args.corpus);
    if (digest != manifest.corpus_digest) {
        throw ConfigError("corpus '" + args.corpus.string() +
                          "' (digest " + digest +
                          ") is not the corpus this run used (digest " +
                          manifest.corpus_digest + ")");
    }
    const std::vector<ConsultationCase> cases = load_corpus(args.corpus);
    std::map<std::string, DiscussionTranscript> transcripts;
    for (DiscussionTranscript& t : load_transcripts(args.run_dir)) {
        transcripts[t.case_id] = std::move(t);
    }

    std::set<std::string> corpus_ids;
    for (const ConsultationCase& c : cases) corpus_ids.insert(c.id);
    std::string unknown;
    for (const auto& [id, t] : transcripts) {
        if (!corpus_ids.count(id)) unknown += " " + id;
    }
    if (!unknown.empty()) {
        throw ValidationError(
            "run directory holds transcripts for unknown case id(s):" + unknown);
    }

    RunLock lock(args.run_dir);
    RunReport report;
    report.run_id = manifest.run_id;
    for (const ConsultationCase& c : cases) {
        auto it = transcripts.find(c.id);
        if (it == transcripts.end() || it->second.failed) {
            report.skipped.push_back(c.id);
            continue;
        }
        const DiscussionTranscript& t = it->second;
        std::vector<ReferenceDetection> detections;
        detections.reserve(c.candidates.size());
        for (const CandidateArticle& cand : c.candidates) {
            detections.push_back(detect_reference(t.response, cand.article));
        }
        const ExampleMetrics metrics = compute_accuracy(c, detections);
        CaseReport cr;
        cr.case_id = c.id;
        cr.n_acc = metrics.n_acc;
        cr.o_acc = metrics.o_acc;
        cr.detections = metrics.detections;
        cr.response_length = codepoint_count(t.response);
        report.cases.push_back(std::move(cr));
    }
    if (report.cases.empty()) {
        throw ValidationError("run directory '" + args.run_dir.string() +
                              "' holds no usable transcripts");
    }
    finalize_report(report);
    write_report(args.run_dir, report, /*judged=*/false);
    detail::print_report_table(report, out);
    return report.skipped.empty() ? kExitOk : kExitPartialFailure;
}

// ---------------------------------------------------------------------------
// judge
// ---------------------------------------------------------------------------

struct JudgeArgs {
    fs::path run_dir;
    fs::path corpus;
    fs::path config;
    std::string judge_name;  // defaults to the config's judge entry
};

/// Scores every evaluated case with the judge rubric, appending a
/// JudgeScore per case. Scores are cached content-addressed in the run
/// directory, so re-invocations are free.
inline int cmd_judge(const JudgeArgs& args, std::ostream& out = std::cout) {
    const RunManifest manifest = read_manifest(args.run_dir);
    const std::string digest = file_digest_hex(args.corpus);
    if (digest != manifest.corpus_digest) {
        throw ConfigError("corpus '" + args.corpus.string() +
                          "' is not the corpus this run used");
    }
    RunConfig cfg = load_run_config(args.config);
    std::string judge_name = args.judge_name.empty() ? cfg.judge : args.judge_name;
    if (judge_name.empty()) {
        throw ConfigError("judge: no judge endpoint named (flag or config)");
    }
    const std::shared_ptr<Backend> judge =
        make_backend(cfg.find_endpoint(judge_name), cfg);
    const TemplateCatalog catalog = make_catalog(cfg);

    RunReport report = load_report(args.run_dir, /*judged=*/false);
    std::map<std::string, ConsultationCase> cases;
    for (ConsultationCase& c : load_corpus(args.corpus)) {
        cases[c.id] = std::move(c);
    }
    std::map<std::string, DiscussionTranscript> transcripts;
    for (DiscussionTranscript& t : load_transcripts(args.run_dir)) {
        transcripts[t.case_id] = std::move(t);
    }

    RunLock lock(args.run_dir);
    std::size_t flagged = 0;
    for (CaseReport& cr : report.cases) {
        const ConsultationCase& c = cases.at(cr.case_id);
        auto t = transcripts.find(cr.case_id);
        if (t == transcripts.end()) {
            cr.judge_flagged = true;
            ++flagged;
            continue;
        }
        const std::string& response = t->second.response;
        const std::string key = judge_cache_key(cr.case_id, response, judge_name);
        if (auto cached = load_cached_judge_score(args.run_dir, key)) {
            cr.judge = std::move(*cached);
            cr.judge_flagged = false;
            continue;
        }
        if (!c.gold_response) {
            cr.judge_flagged = true;
            ++flagged;
            out << "case '" << cr.case_id << "': no gold response; skipped\n";
            continue;
        }
        try {
            JudgeScore score =
                judge_response(*judge, catalog, c, response, cfg.decoding);
            store_cached_judge_score(args.run_dir, key, score);
            cr.judge = std::move(score);
            cr.judge_flagged = false;
        } catch (const JudgeParseError& e) {
            cr.judge_flagged = true;
            ++flagged;
            out << "case '" << cr.case_id << "': " << e.what() << "\n";
        }
    }
    finalize_report(report);
    write_report(args.run_dir, report, /*judged=*/true);
    detail::print_report_table(report, out);
    return flagged == 0 ? kExitOk : kExitPartialFailure;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareArgs {
    fs::path run_a;
    fs::path run_b;
    fs::path out_file;  // optional JSON summary
};

inline int cmd_compare(const CompareArgs& args, std::ostream& out = std::cout) {
    const RunReport a = load_report(args.run_a, /*judged=*/true);
    const RunReport b = load_report(args.run_b, /*judged=*/true);
    const RunComparison cmp = compare_runs(a, b);
    out << "compared " << cmp.per_case.size() << " case(s): " << cmp.wins
        << " win(s), " << cmp.ties << " tie(s), " << cmp.losses << " loss(es)";
    if (cmp.unscored > 0) out << ", " << cmp.unscored << " unscored";
    out << "\n";
    out << std::fixed << std::setprecision(1) << "win rate "
        << cmp.win_rate * 100 << "%  tie rate " << cmp.tie_rate * 100
        << "%  loss rate " << cmp.loss_rate * 100 << "%  mean delta "
        << std::setprecision(3) << cmp.mean_delta << "\n";
    if (!args.out_file.empty()) {
        nlohmann::ordered_json j;
        j["run_a"] = a.run_id;
        j["run_b"] = b.run_id;
        j["wins"] = cmp.wins;
        j["ties"] = cmp.ties;
        j["losses"] = cmp.losses;
        j["unscored"] = cmp.unscored;
        j["mean_delta"] = cmp.mean_delta;
        nlohmann::ordered_json per_case = nlohmann::ordered_json::array();
        for (const CaseComparison& cc : cmp.per_case) {
            per_case.push_back({{"case_id", cc.case_id},
                                {"outcome", cc.outcome},
                                {"score_a", cc.score_a},
                                {"score_b", cc.score_b}});
        }
        j["per_case"] = std::move(per_case);
        write_text_file(args.out_file, j.dump(2) + "\n");
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
    fs::path run_dir;
};

inline int cmd_report(const ReportArgs& args, std::ostream& out = std::cout) {
    RunReport report;
    if (fs::exists(report_path(args.run_dir, /*judged=*/true))) {
        report = load_report(args.run_dir, /*judged=*/true);
    } else {
        report = load_report(args.run_dir, /*judged=*/false);
    }
    detail::print_report_table(report, out);
    return kExitOk;
}

}  // namespace cod
