#pragma once

#include "cdsbench/analysis.hpp"
#include "cdsbench/config.hpp"
#include "cdsbench/protocols.hpp"

#include <functional>
#include <string>
#include <vector>

namespace cdsbench {

using LogFn = std::function<void(const std::string&)>;

// Run-directory layout under config.output_dir:
//   benchmark/benchmark_set.jsonl, benchmark/stats.csv      (ingest)
//   run/manifest.json, run/generated.jsonl, run/state/...   (run)
//   run/fixture.jsonl                                       (record)
//   analysis/metrics.csv + report files                     (analyze/report)
std::string benchmark_dir(const RunConfig& config);
std::string run_dir(const RunConfig& config);
std::string analysis_dir(const RunConfig& config);

// Generated-corpus record IO (records carry reference ids and flags).
std::string generated_to_records(const std::vector<GeneratedConversation>& conversations);
std::vector<GeneratedConversation> generated_from_records(const std::string& text);

enum class RunMode { Normal, Record, Replay };

// Ingest: read corpora, select the benchmark set, write records + stats.
CorpusStats command_ingest(const RunConfig& config, const LogFn& log = {});

// Run: execute the configured protocol against the ingested set; resumable
// via per-conversation markers. Record captures a playback fixture; Replay
// forces playback backends (optionally from an explicit fixture path).
std::string command_run(const RunConfig& config, RunMode mode = RunMode::Normal,
                        const std::string& replay_fixture = "", const LogFn& log = {});

// Analyze: profile reference + generated conversations with the configured
// providers, write metrics.csv and the report files.
std::string command_analyze(const RunConfig& config,
                            const std::vector<std::string>& extra_runs = {},
                            const LogFn& log = {});

// Report: regenerate report files from an existing metrics.csv.
std::string command_report(const RunConfig& config, const std::string& metrics_dir = "",
                           const LogFn& log = {});

}  // namespace cdsbench
