// Command-line front end: ingest, stats, run, evaluate, judge, compare,
// report. Exit codes: 0 success, 1 partial failure, 2 configuration or
// validation error.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cod/commands.hpp"

namespace {

struct CliOptions {
    cod::IngestArgs ingest;
    cod::StatsArgs stats;
    cod::RunArgs run;
    cod::EvaluateArgs evaluate;
    cod::JudgeArgs judge;
    cod::CompareArgs compare;
    cod::ReportArgs report;

    // run flag storage (CLI11 needs concrete lvalues for optional flags)
    double delta = -1.0;
    int num_candidates = 0;
    std::string template_lang;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-model discussion engine for evidence-based QA"};
    app.require_subcommand(1);
    CliOptions opt;

    auto* ingest = app.add_subcommand(
        "ingest", "Build a case file from annotations, articles and questions");
    ingest->add_option("--annotations", opt.ingest.annotations)->required();
    ingest->add_option("--articles", opt.ingest.articles)->required();
    ingest->add_option("--questions", opt.ingest.questions)->required();
    ingest->add_option("--out", opt.ingest.out)->required();
    ingest->add_option("--num-candidates", opt.ingest.num_candidates,
                       "Candidate articles per case (default 5)");

    auto* stats = app.add_subcommand("stats", "Print corpus label statistics");
    stats->add_option("--corpus", opt.stats.corpus)->required();

    auto* run = app.add_subcommand("run", "Execute one setting over a corpus");
    run->add_option("--config", opt.run.config)->required();
    run->add_option("--corpus", opt.run.corpus)->required();
    run->add_option("--setting", opt.run.setting,
                    "vanilla|bs|s1|s2|cod|selfcrit")
        ->required();
    run->add_option("--target", opt.run.target)->required();
    run->add_option("--out", opt.run.out_dir)->required();
    run->add_option("--run-id", opt.run.run_id);
    auto* delta_opt = run->add_option("--delta", opt.delta,
                                      "Revision threshold override");
    auto* nc_opt = run->add_option("--num-candidates", opt.num_candidates);
    auto* lang_opt = run->add_option("--template-lang", opt.template_lang,
                                     "zh|en");
    auto* seed_opt = run->add_option("--seed", opt.seed,
                                     "Scripted-backend tie-break seed");
    run->add_flag("--log-raw", opt.run.log_raw,
                  "Log full request/response pairs");

    auto* evaluate = app.add_subcommand(
        "evaluate", "Compute evidence metrics for a finished run");
    evaluate->add_option("--run", opt.evaluate.run_dir)->required();
    evaluate->add_option("--corpus", opt.evaluate.corpus)->required();

    auto* judge = app.add_subcommand("judge", "Score responses with a judge model");
    judge->add_option("--run", opt.judge.run_dir)->required();
    judge->add_option("--corpus", opt.judge.corpus)->required();
    judge->add_option("--config", opt.judge.config)->required();
    judge->add_option("--judge", opt.judge.judge_name,
                      "Judge endpoint name (defaults to config)");

    auto* compare = app.add_subcommand("compare", "Compare two judged runs");
    compare->add_option("--run-a", opt.compare.run_a)->required();
    compare->add_option("--run-b", opt.compare.run_b)->required();
    compare->add_option("--out", opt.compare.out_file);

    auto* report = app.add_subcommand("report", "Print a stored run report");
    report->add_option("--run", opt.report.run_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and --version exit 0; every other parse failure is a
        // configuration error.
        const int code = app.exit(e);
        return code == 0 ? 0 : cod::kExitConfigError;
    }

    try {
        if (*ingest) return cod::cmd_ingest(opt.ingest);
        if (*stats) return cod::cmd_stats(opt.stats);
        if (*run) {
            if (*delta_opt) opt.run.delta = opt.delta;
            if (*nc_opt) opt.run.num_candidates = opt.num_candidates;
            if (*lang_opt) opt.run.template_lang = opt.template_lang;
            if (*seed_opt) opt.run.seed = opt.seed;
            return cod::cmd_run(opt.run);
        }
        if (*evaluate) return cod::cmd_evaluate(opt.evaluate);
        if (*judge) return cod::cmd_judge(opt.judge);
        if (*compare) return cod::cmd_compare(opt.compare);
        if (*report) return cod::cmd_report(opt.report);
    } catch (const cod::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cod::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return cod::kExitConfigError;
    }
    return cod::kExitConfigError;
}
