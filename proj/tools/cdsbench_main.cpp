#include "cdsbench/error.hpp"
#include "cdsbench/pipeline.hpp"
#include "cdsbench/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

namespace {

using cdsbench::RunConfig;

void print_log(const std::string& message) { std::cout << message << "\n"; }

void print_error(const cdsbench::Error& ex) {
    nlohmann::json err;
    err["error"] = cdsbench::error_code_name(ex.code());
    err["message"] = ex.what();
    std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark chat backends against child-caregiver dialogue references"};
    app.set_version_flag("--version", cdsbench::kToolkitVersion);
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("-c,--config", config_path, "Run configuration (JSON)")
        ->required()
        ->check(CLI::ExistingFile);

    auto* ingest = app.add_subcommand(
        "ingest", "Select the benchmark set from CHAT/record corpora and write stats");
    auto* run = app.add_subcommand("run", "Execute the configured protocol");
    auto* analyze =
        app.add_subcommand("analyze", "Profile reference + generated conversations, report");
    auto* report = app.add_subcommand("report", "Rebuild report files from metrics.csv");
    auto* record =
        app.add_subcommand("record", "Run while capturing a playback fixture");
    auto* replay = app.add_subcommand("replay", "Run against a recorded playback fixture");

    std::vector<std::string> extra_runs;
    analyze->add_option("-r,--run", extra_runs, "Run directory to include (repeatable)");
    std::string metrics_dir;
    report->add_option("--metrics-dir", metrics_dir,
                       "Directory holding metrics.csv (default: <output_dir>/analysis)");
    std::string replay_fixture;
    replay->add_option("--fixture", replay_fixture,
                       "Playback fixture (default: the backend descriptors' fixtures)");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig config = cdsbench::load_run_config(config_path);
        if (ingest->parsed()) {
            cdsbench::CorpusStats stats = cdsbench::command_ingest(config, print_log);
            std::cout << "pairs=" << stats.pair_count
                      << " tokens=" << stats.token_count_total
                      << " child=" << stats.token_count_child
                      << " caregiver=" << stats.token_count_caregiver << "\n";
        } else if (run->parsed()) {
            cdsbench::command_run(config, cdsbench::RunMode::Normal, "", print_log);
        } else if (record->parsed()) {
            cdsbench::command_run(config, cdsbench::RunMode::Record, "", print_log);
        } else if (replay->parsed()) {
            cdsbench::command_run(config, cdsbench::RunMode::Replay, replay_fixture, print_log);
        } else if (analyze->parsed()) {
            cdsbench::command_analyze(config, extra_runs, print_log);
        } else if (report->parsed()) {
            cdsbench::command_report(config, metrics_dir, print_log);
        }
    } catch (const cdsbench::Error& ex) {
        print_error(ex);
        return cdsbench::error_exit_code(ex.code());
    } catch (const std::exception& ex) {
        nlohmann::json err;
        err["error"] = "INTERNAL";
        err["message"] = ex.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
