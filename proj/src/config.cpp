#include "cdsbench/config.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/json_io.hpp"
#include "cdsbench/util.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>

namespace cdsbench {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& context) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end()) {
            throw Error(ErrorCode::ConfigInvalid,
                        "unknown key '" + key + "' in " + context);
        }
    }
}

std::string resolve_path(const std::string& path, const std::string& base_dir) {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

ProviderDescriptor parse_provider(const json& j, const std::string& context,
                                  const std::string& default_kind,
                                  const std::string& base_dir) {
    reject_unknown_keys(j,
                        {"kind", "name", "endpoint", "fixture", "dimension", "batch_size",
                         "max_concurrency", "timeout_ms", "max_retries"},
                        context);
    ProviderDescriptor desc = provider_from_json(j);
    if (desc.kind.empty()) desc.kind = default_kind;
    desc.fixture = resolve_path(desc.fixture, base_dir);
    return desc;
}

BackendDescriptor parse_backend(const json& j, const std::string& context,
                                const std::string& base_dir) {
    reject_unknown_keys(j,
                        {"kind", "id", "endpoint", "model", "temperature", "max_concurrency",
                         "timeout_ms", "max_retries", "initial_backoff_ms",
                         "backoff_multiplier", "fixture", "script", "api_key_env"},
                        context);
    BackendDescriptor desc = backend_from_json(j);
    desc.fixture_path = resolve_path(desc.fixture_path, base_dir);
    return desc;
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") +
                                                  ex.what());
    }
    if (!j.is_object()) {
        throw Error(ErrorCode::ConfigInvalid, "config root must be an object");
    }
    reject_unknown_keys(j,
                        {"seed", "workers", "output_dir", "corpus", "lexicons", "embedder",
                         "parser", "backends", "protocol", "analysis", "runs"},
                        "config root");

    RunConfig config;
    config.seed = j.value("seed", config.seed);
    config.workers = j.value("workers", config.workers);
    if (config.workers < 1) {
        throw Error(ErrorCode::ConfigInvalid, "workers must be >= 1");
    }
    config.output_dir = resolve_path(j.value("output_dir", config.output_dir), base_dir);

    if (j.contains("corpus")) {
        const json& c = j.at("corpus");
        reject_unknown_keys(c, {"chat_dir", "records_file", "ages", "per_age"}, "corpus");
        config.corpus.chat_dir = resolve_path(c.value("chat_dir", ""), base_dir);
        config.corpus.records_file = resolve_path(c.value("records_file", ""), base_dir);
        if (c.contains("ages")) config.corpus.ages = c.at("ages").get<std::vector<int>>();
        config.corpus.per_age = c.value("per_age", config.corpus.per_age);
        if (config.corpus.per_age < 0) {
            throw Error(ErrorCode::ConfigInvalid, "corpus.per_age must be >= 0");
        }
    }
    if (j.contains("lexicons")) {
        const json& l = j.at("lexicons");
        reject_unknown_keys(l, {"concreteness_csv", "function_words"}, "lexicons");
        config.lexicons.concreteness_csv = resolve_path(l.value("concreteness_csv", ""), base_dir);
        config.lexicons.function_words = resolve_path(l.value("function_words", ""), base_dir);
    }
    config.embedder.kind = "hashed";
    config.parser.kind = "chain";
    if (j.contains("embedder")) {
        config.embedder = parse_provider(j.at("embedder"), "embedder", "hashed", base_dir);
    }
    if (j.contains("parser")) {
        config.parser = parse_provider(j.at("parser"), "parser", "chain", base_dir);
    }
    if (j.contains("backends")) {
        const json& b = j.at("backends");
        reject_unknown_keys(b, {"child", "caregiver"}, "backends");
        if (b.contains("child")) {
            config.child_backend = parse_backend(b.at("child"), "backends.child", base_dir);
        }
        if (b.contains("caregiver")) {
            config.caregiver_backend =
                parse_backend(b.at("caregiver"), "backends.caregiver", base_dir);
        }
    }
    if (j.contains("protocol")) {
        const json& p = j.at("protocol");
        reject_unknown_keys(p, {"mode", "direction", "shots", "max_turns", "exemplar_count"},
                            "protocol");
        config.protocol.mode = p.value("mode", config.protocol.mode);
        if (config.protocol.mode != "single" && config.protocol.mode != "multi") {
            throw Error(ErrorCode::ConfigInvalid,
                        "protocol.mode must be 'single' or 'multi'");
        }
        if (p.contains("direction")) {
            config.protocol.direction =
                direction_from_name(p.at("direction").get<std::string>());
        }
        if (p.contains("shots")) {
            config.protocol.shots = shot_from_name(p.at("shots").get<std::string>());
        }
        config.protocol.max_turns = p.value("max_turns", config.protocol.max_turns);
        if (config.protocol.max_turns < 1) {
            throw Error(ErrorCode::ConfigInvalid, "protocol.max_turns must be >= 1");
        }
        config.protocol.exemplar_count =
            p.value("exemplar_count", config.protocol.exemplar_count);
        if (config.protocol.exemplar_count < 0) {
            throw Error(ErrorCode::ConfigInvalid, "protocol.exemplar_count must be >= 0");
        }
    }
    if (j.contains("analysis")) {
        const json& a = j.at("analysis");
        reject_unknown_keys(a, {"n_boot", "roles", "pool_ages"}, "analysis");
        config.analysis.n_boot = a.value("n_boot", config.analysis.n_boot);
        if (config.analysis.n_boot < 1) {
            throw Error(ErrorCode::ConfigInvalid, "analysis.n_boot must be >= 1");
        }
        if (a.contains("roles")) {
            config.analysis.roles.clear();
            for (const auto& r : a.at("roles")) {
                config.analysis.roles.push_back(role_from_name(r.get<std::string>()));
            }
            if (config.analysis.roles.empty()) {
                throw Error(ErrorCode::ConfigInvalid, "analysis.roles must not be empty");
            }
        }
        config.analysis.pool_ages = a.value("pool_ages", config.analysis.pool_ages);
    }
    if (j.contains("runs")) {
        for (const auto& r : j.at("runs")) {
            config.runs.push_back(resolve_path(r.get<std::string>(), base_dir));
        }
    }
    return config;
}

RunConfig load_run_config(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error&) {
        throw Error(ErrorCode::ConfigInvalid, "cannot read config file " + path);
    }
    std::string base_dir = std::filesystem::path(path).parent_path().string();
    return run_config_from_json_text(text, base_dir);
}

}  // namespace cdsbench
