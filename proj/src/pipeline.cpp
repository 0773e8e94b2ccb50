#include "cdsbench/pipeline.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/json_io.hpp"
#include "cdsbench/util.hpp"
#include "cdsbench/version.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace cdsbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log_line(const LogFn& log, const std::string& message) {
    if (log) log(message);
}

std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string safe_file_stem(const std::string& id) {
    std::string out;
    for (char c : id) {
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                  c == '-';
        out.push_back(ok ? c : '_');
    }
    // Hash suffix keeps sanitized ids collision-free.
    return out + "-" + to_hex(fnv1a64(id)).substr(0, 8);
}

void parallel_over(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    int count = std::min<int>(workers, static_cast<int>(n));
    for (int t = 0; t < count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<Conversation> load_corpus_inputs(const RunConfig& config) {
    std::vector<Conversation> conversations;
    const auto& cc = config.corpus;
    if (cc.chat_dir.empty() && cc.records_file.empty()) {
        throw Error(ErrorCode::ConfigInvalid,
                    "corpus.chat_dir or corpus.records_file is required");
    }
    if (!cc.chat_dir.empty()) {
        if (!fs::is_directory(cc.chat_dir)) {
            throw Error(ErrorCode::CorpusNotFound, "chat_dir not found: " + cc.chat_dir);
        }
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(cc.chat_dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".cha") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& file : files) {
            conversations.push_back(
                parse_chat(read_text_file(file.string()), file.stem().string()));
        }
    }
    if (!cc.records_file.empty()) {
        if (!fs::exists(cc.records_file)) {
            throw Error(ErrorCode::CorpusNotFound,
                        "records_file not found: " + cc.records_file);
        }
        for (Conversation& conv : load_record_file(cc.records_file)) {
            conversations.push_back(std::move(conv));
        }
    }
    return conversations;
}

// Pre-normalization token count; kept alongside the normalized counts so
// both readings of the corpus size are reported.
std::int64_t raw_token_count(const std::vector<Conversation>& conversations) {
    std::int64_t count = 0;
    for (const Conversation& conv : conversations) {
        for (const Utterance& u : conv.utterances) {
            if (u.is_silence) continue;
            count += static_cast<std::int64_t>(split_ws(u.raw_text).size());
        }
    }
    return count;
}

BenchmarkSet load_benchmark_set(const RunConfig& config) {
    std::string path = (fs::path(benchmark_dir(config)) / "benchmark_set.jsonl").string();
    if (!fs::exists(path)) {
        throw Error(ErrorCode::CorpusNotFound,
                    "no ingested benchmark set at " + path + "; run `ingest` first");
    }
    BenchmarkSet set;
    for (const Conversation& conv : load_record_file(path)) {
        AlternationResult alt = alternate_and_pair(conv);  // idempotent on ingested data
        set.conversations.push_back(std::move(alt.conversation));
        for (ExchangePair& pair : alt.pairs) set.pairs.push_back(std::move(pair));
    }
    set.stats = compute_stats(set.conversations, set.pairs);
    return set;
}

std::vector<Role> roles_from_json(const json& j) {
    std::vector<Role> roles;
    for (const auto& r : j) roles.push_back(role_from_name(r.get<std::string>()));
    return roles;
}

}  // namespace

std::string benchmark_dir(const RunConfig& config) {
    return (fs::path(config.output_dir) / "benchmark").string();
}

std::string run_dir(const RunConfig& config) {
    return (fs::path(config.output_dir) / "run").string();
}

std::string analysis_dir(const RunConfig& config) {
    return (fs::path(config.output_dir) / "analysis").string();
}

std::string generated_to_records(const std::vector<GeneratedConversation>& conversations) {
    std::string out;
    for (const GeneratedConversation& gen : conversations) {
        json roles = json::array();
        for (Role r : gen.generated_roles) roles.push_back(role_name(r));
        for (const Utterance& u : gen.conversation.utterances) {
            json rec;
            rec["conversation_id"] = gen.conversation.id;
            rec["role"] = role_name(u.role);
            rec["age_months"] = gen.conversation.age_months;
            rec["text"] = u.text();
            rec["source"] = "generated";
            rec["reference_id"] = gen.reference_id;
            rec["generated_roles"] = roles;
            rec["truncated"] = gen.truncated;
            out += rec.dump();
            out.push_back('\n');
        }
    }
    return out;
}

std::vector<GeneratedConversation> generated_from_records(const std::string& text) {
    std::vector<GeneratedConversation> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::IoError,
                        "generated record line " + std::to_string(lineno) + ": " + ex.what());
        }
        std::string conv_id = rec.at("conversation_id").get<std::string>();
        if (out.empty() || out.back().conversation.id != conv_id) {
            GeneratedConversation gen;
            gen.conversation.id = conv_id;
            gen.conversation.age_months = rec.value("age_months", 0);
            gen.conversation.source = ConversationSource::Generated;
            gen.reference_id = rec.value("reference_id", "");
            if (rec.contains("generated_roles")) {
                gen.generated_roles = roles_from_json(rec.at("generated_roles"));
            }
            gen.truncated = rec.value("truncated", false);
            out.push_back(std::move(gen));
        }
        Role role = role_from_name(rec.at("role").get<std::string>());
        auto& utts = out.back().conversation.utterances;
        utts.push_back(normalize_utterance(rec.at("text").get<std::string>(), role,
                                           static_cast<int>(utts.size())));
    }
    return out;
}

CorpusStats command_ingest(const RunConfig& config, const LogFn& log) {
    std::vector<Conversation> conversations = load_corpus_inputs(config);
    log_line(log, "loaded " + std::to_string(conversations.size()) + " conversation(s)");

    BenchmarkSet set =
        select_benchmark_set(conversations, config.corpus.ages, config.corpus.per_age);
    std::int64_t raw_tokens = raw_token_count(set.conversations);

    fs::create_directories(benchmark_dir(config));
    write_record_file((fs::path(benchmark_dir(config)) / "benchmark_set.jsonl").string(),
                      set.conversations);

    std::string stats_csv =
        "pair_count,token_count_total,token_count_child,token_count_caregiver,"
        "raw_token_count_total\n" +
        std::to_string(set.stats.pair_count) + "," +
        std::to_string(set.stats.token_count_total) + "," +
        std::to_string(set.stats.token_count_child) + "," +
        std::to_string(set.stats.token_count_caregiver) + "," + std::to_string(raw_tokens) +
        "\n";
    write_text_file((fs::path(benchmark_dir(config)) / "stats.csv").string(), stats_csv);

    log_line(log, "selected " + std::to_string(set.conversations.size()) +
                      " conversations, " + std::to_string(set.stats.pair_count) + " pairs, " +
                      std::to_string(set.stats.token_count_total) + " tokens (child " +
                      std::to_string(set.stats.token_count_child) + ", caregiver " +
                      std::to_string(set.stats.token_count_caregiver) + ", pre-normalization " +
                      std::to_string(raw_tokens) + ")");
    return set.stats;
}

std::string command_run(const RunConfig& config, RunMode mode,
                        const std::string& replay_fixture, const LogFn& log) {
    BenchmarkSet set = load_benchmark_set(config);

    BackendDescriptor child_desc = config.child_backend;
    BackendDescriptor caregiver_desc = config.caregiver_backend;
    if (mode == RunMode::Replay) {
        for (BackendDescriptor* desc : {&child_desc, &caregiver_desc}) {
            desc->kind = "playback";
            if (!replay_fixture.empty()) desc->fixture_path = replay_fixture;
        }
    }

    const std::string dir = run_dir(config);
    const std::string state_dir = (fs::path(dir) / "state").string();
    fs::create_directories(state_dir);

    // References completed by an earlier, interrupted invocation.
    std::map<std::string, std::vector<std::string>> done;  // reference id -> part files
    for (const auto& entry : fs::directory_iterator(state_dir)) {
        if (entry.path().extension() != ".done") continue;
        json marker = json::parse(read_text_file(entry.path().string()));
        done[marker.at("reference_id").get<std::string>()] =
            marker.at("parts").get<std::vector<std::string>>();
    }
    if (!done.empty()) {
        log_line(log, "resuming: " + std::to_string(done.size()) + " reference(s) already done");
    }

    std::mutex state_mutex;
    RunOptions options;
    options.workers = config.workers;
    options.max_turns = config.protocol.max_turns;
    options.exemplar_count = config.protocol.exemplar_count;
    options.log = log;
    options.already_done = [&](const std::string& ref_id) {
        return done.find(ref_id) != done.end();
    };
    options.on_reference_complete = [&](const std::string& ref_id,
                                        const std::vector<GeneratedConversation>& generated) {
        std::lock_guard<std::mutex> lock(state_mutex);
        std::vector<std::string> parts;
        for (const GeneratedConversation& gen : generated) {
            std::string part = safe_file_stem(gen.conversation.id) + ".jsonl";
            write_text_file((fs::path(state_dir) / part).string(),
                            generated_to_records({gen}));
            parts.push_back(part);
        }
        json marker;
        marker["reference_id"] = ref_id;
        marker["parts"] = parts;
        write_text_file((fs::path(state_dir) / (safe_file_stem(ref_id) + ".done")).string(),
                        marker.dump() + "\n");
    };

    std::shared_ptr<RecorderSink> recorder;
    if (mode == RunMode::Record) recorder = std::make_shared<RecorderSink>();

    BackendPool child_pool(child_desc);
    BackendPool caregiver_pool(caregiver_desc);
    if (recorder) {
        child_pool.attach_recorder(recorder);
        caregiver_pool.attach_recorder(recorder);
    }
    GeneratedCorpus corpus;
    if (config.protocol.mode == "single") {
        corpus = run_single_turn(set, child_pool, caregiver_pool, config.protocol.direction,
                                 config.protocol.shots, options);
    } else {
        corpus = run_multi_turn(set, child_pool, caregiver_pool, config.protocol.shots,
                                config.protocol.max_turns, options);
    }

    // Complete the manifest with run-level provenance.
    corpus.manifest.embedder = config.embedder;
    corpus.manifest.parser = config.parser;
    corpus.manifest.seed = config.seed;
    corpus.manifest.timestamp = now_iso8601();
    corpus.manifest.toolkit_version = kToolkitVersion;
    write_text_file((fs::path(dir) / "manifest.json").string(), corpus.manifest.to_json());

    // Assemble generated.jsonl in reference order, merging resumed parts.
    std::map<std::string, std::vector<const GeneratedConversation*>> fresh;
    for (const GeneratedConversation& gen : corpus.conversations) {
        fresh[gen.reference_id].push_back(&gen);
    }
    std::string records;
    std::vector<GeneratedConversation> resumed_storage;
    for (const Conversation& ref : set.conversations) {
        auto done_it = done.find(ref.id);
        if (done_it != done.end()) {
            for (const std::string& part : done_it->second) {
                records += read_text_file((fs::path(state_dir) / part).string());
            }
            continue;
        }
        auto fresh_it = fresh.find(ref.id);
        if (fresh_it != fresh.end()) {
            for (const GeneratedConversation* gen : fresh_it->second) {
                records += generated_to_records({*gen});
            }
        }
    }
    write_text_file((fs::path(dir) / "generated.jsonl").string(), records);

    if (recorder) {
        recorder->save((fs::path(dir) / "fixture.jsonl").string());
        log_line(log, "recorded " + std::to_string(recorder->size()) + " completions");
    }
    log_line(log, "run complete: " + std::to_string(corpus.conversations.size()) +
                      " generated conversation(s) in " + dir);
    return dir;
}

namespace {

struct ProfiledRecords {
    std::vector<MetricRecord> records;
    std::int64_t undefined_values = 0;
};

void count_undefined(const std::vector<MetricRecord>& records, std::int64_t& counter) {
    for (const MetricRecord& rec : records) {
        for (Measure m : kAllMeasures) {
            if (!rec.measure(m).value) ++counter;
        }
    }
}

std::vector<MetricRecord> profile_conversations(const std::vector<const Conversation*>& convs,
                                                const Lexicons& lexicons,
                                                DependencyParser& parser, Embedder& embedder,
                                                int workers) {
    std::vector<std::pair<MetricRecord, MetricRecord>> slots(convs.size());
    parallel_over(convs.size(), workers, [&](std::size_t i) {
        slots[i] = profile_conversation(*convs[i], lexicons, parser, embedder);
    });
    std::vector<MetricRecord> records;
    records.reserve(convs.size() * 2);
    for (auto& [child_rec, caregiver_rec] : slots) {
        records.push_back(std::move(child_rec));
        records.push_back(std::move(caregiver_rec));
    }
    return records;
}

// One regression per (configuration, role, measure) with >= 2 defined
// observations on both sides; skips are noted, not fatal.
std::vector<RegressionResult> compute_regressions(const std::vector<MetricRecord>& records,
                                                  std::vector<std::string>* notes) {
    std::vector<RegressionResult> results;
    std::map<std::pair<std::string, Role>, std::vector<const MetricRecord*>> llm_groups;
    for (const MetricRecord& rec : records) {
        if (rec.source == "reference") continue;
        llm_groups[{rec.source, rec.role}].push_back(&rec);
    }
    for (const auto& [key, group] : llm_groups) {
        for (Measure m : kAllMeasures) {
            std::vector<double> llm_values;
            for (const MetricRecord* rec : group) {
                if (auto v = rec->measure(m).value) llm_values.push_back(*v);
            }
            std::vector<double> ref_values;
            for (const MetricRecord& rec : records) {
                if (rec.source != "reference" || rec.role != key.second) continue;
                if (auto v = rec.measure(m).value) ref_values.push_back(*v);
            }
            if (llm_values.size() < 2 || ref_values.size() < 2) {
                if (notes) {
                    notes->push_back("regression skipped (too few observations): " +
                                     std::string(measure_name(m)) + " / " + key.first);
                }
                continue;
            }
            RegressionResult result =
                regress_vs_reference(llm_values, ref_values, measure_name(m), key.first);
            result.role = role_name(key.second);
            results.push_back(std::move(result));
        }
    }
    return results;
}

}  // namespace

std::string command_analyze(const RunConfig& config,
                            const std::vector<std::string>& extra_runs, const LogFn& log) {
    if (config.lexicons.concreteness_csv.empty() || config.lexicons.function_words.empty()) {
        throw Error(ErrorCode::ConfigInvalid,
                    "analyze requires lexicons.concreteness_csv and lexicons.function_words");
    }
    Lexicons lexicons =
        load_lexicons(config.lexicons.concreteness_csv, config.lexicons.function_words);
    log_line(log, "concreteness lexicon: " +
                      std::to_string(lexicons.concreteness.entry_count()) + " entries (" +
                      std::to_string(lexicons.concreteness.skipped_rows()) +
                      " rows skipped); " + std::to_string(lexicons.function_words.size()) +
                      " function words");
    if (lexicons.concreteness.skipped_rows() > 0) {
        log_line(log, "warning: " + std::to_string(lexicons.concreteness.skipped_rows()) +
                          " malformed concreteness row(s) skipped");
    }
    std::unique_ptr<Embedder> embedder = make_embedder(config.embedder);
    std::unique_ptr<DependencyParser> parser = make_parser(config.parser);

    BenchmarkSet set = load_benchmark_set(config);
    std::vector<const Conversation*> ref_convs;
    for (const Conversation& conv : set.conversations) ref_convs.push_back(&conv);
    std::vector<MetricRecord> records =
        profile_conversations(ref_convs, lexicons, *parser, *embedder, config.workers);
    for (MetricRecord& rec : records) rec.source = "reference";
    log_line(log, "profiled " + std::to_string(set.conversations.size()) +
                      " reference conversation(s)");

    std::vector<std::string> run_dirs = config.runs;
    run_dirs.insert(run_dirs.end(), extra_runs.begin(), extra_runs.end());

    std::string digest_input;
    for (const std::string& dir : run_dirs) {
        RunManifest manifest =
            RunManifest::from_json(read_text_file((fs::path(dir) / "manifest.json").string()));
        digest_input += manifest.digest();
        std::vector<GeneratedConversation> gens =
            generated_from_records(read_text_file((fs::path(dir) / "generated.jsonl").string()));

        std::vector<const Conversation*> gen_convs;
        for (const GeneratedConversation& gen : gens) gen_convs.push_back(&gen.conversation);
        std::vector<MetricRecord> gen_records =
            profile_conversations(gen_convs, lexicons, *parser, *embedder, config.workers);

        // Keep only the roles the backend actually played, tagged with the
        // run configuration; the other side is reference material.
        std::size_t kept = 0;
        for (std::size_t i = 0; i < gens.size(); ++i) {
            for (Role role : gens[i].generated_roles) {
                bool wanted = std::find(config.analysis.roles.begin(),
                                        config.analysis.roles.end(),
                                        role) != config.analysis.roles.end();
                if (!wanted) continue;
                MetricRecord rec =
                    role == Role::Child ? gen_records[2 * i] : gen_records[2 * i + 1];
                rec.source = manifest.configuration_tag(role);
                records.push_back(std::move(rec));
                ++kept;
            }
        }
        log_line(log, dir + ": " + std::to_string(gens.size()) + " generated conversation(s), " +
                          std::to_string(kept) + " record(s)");
    }

    std::int64_t undefined_values = 0;
    count_undefined(records, undefined_values);

    const std::string out_dir = analysis_dir(config);
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "metrics.csv").string(),
                    metric_records_to_csv(records));

    ReportInputs inputs;
    inputs.record_count = static_cast<std::int64_t>(records.size());
    inputs.undefined_value_count = undefined_values;
    inputs.manifest_digest = run_dirs.empty() ? "" : to_hex(fnv1a64(digest_input));
    inputs.aggregates = aggregate_with_ci(
        records, config.analysis.pool_ages ? AgeGrouping::Pooled : AgeGrouping::PerBucket,
        config.analysis.n_boot, config.seed, &inputs.notes);
    inputs.regressions = compute_regressions(records, &inputs.notes);

    if (undefined_values > 0) {
        log_line(log, "warning: " + std::to_string(undefined_values) +
                          " undefined measure value(s); see reason columns in metrics.csv");
    }
    build_report(inputs, out_dir);
    log_line(log, "analysis written to " + out_dir);
    return out_dir;
}

std::string command_report(const RunConfig& config, const std::string& metrics_dir,
                           const LogFn& log) {
    const std::string dir = metrics_dir.empty() ? analysis_dir(config) : metrics_dir;
    const std::string metrics_path = (fs::path(dir) / "metrics.csv").string();
    if (!fs::exists(metrics_path)) {
        throw Error(ErrorCode::IoError, "no metrics.csv under " + dir + "; run `analyze` first");
    }
    std::vector<MetricRecord> records = metric_records_from_csv(read_text_file(metrics_path));

    ReportInputs inputs;
    inputs.record_count = static_cast<std::int64_t>(records.size());
    count_undefined(records, inputs.undefined_value_count);
    std::string summary_path = (fs::path(dir) / "summary.json").string();
    if (fs::exists(summary_path)) {
        json old = json::parse(read_text_file(summary_path));
        inputs.manifest_digest = old.value("manifest_digest", "");
    }
    inputs.aggregates = aggregate_with_ci(
        records, config.analysis.pool_ages ? AgeGrouping::Pooled : AgeGrouping::PerBucket,
        config.analysis.n_boot, config.seed, &inputs.notes);
    inputs.regressions = compute_regressions(records, &inputs.notes);
    build_report(inputs, dir);
    log_line(log, "report rebuilt in " + dir);
    return dir;
}

}  // namespace cdsbench
