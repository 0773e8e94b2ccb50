#pragma once

#include "cdsbench/analyzers.hpp"
#include "cdsbench/backends.hpp"
#include "cdsbench/protocols.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cdsbench {

/// Declarative run configuration; one JSON file, env vars for secrets only.
struct RunConfig {
    std::uint64_t seed = 0;
    int workers = 1;
    std::string output_dir = "out";

    struct CorpusConfig {
        std::string chat_dir;      // directory of .cha files
        std::string records_file;  // line-delimited record corpus
        std::vector<int> ages = {2, 3, 4, 5};
        int per_age = 10;
    } corpus;

    struct LexiconConfig {
        std::string concreteness_csv;
        std::string function_words;
    } lexicons;

    ProviderDescriptor embedder;  // kind defaults to "hashed"
    ProviderDescriptor parser;    // kind defaults to "chain"

    BackendDescriptor child_backend;
    BackendDescriptor caregiver_backend;

    struct ProtocolConfig {
        std::string mode = "single";  // single | multi
        Direction direction = Direction::ChildToCaregiver;
        ShotSetting shots = ShotSetting::Zero;
        int max_turns = 300;
        int exemplar_count = 3;
    } protocol;

    struct AnalysisConfig {
        int n_boot = 1000;
        std::vector<Role> roles = {Role::Child, Role::Caregiver};
        bool pool_ages = false;
    } analysis;

    std::vector<std::string> runs;  // run dirs consumed by analyze
};

// Loads and validates; unknown keys anywhere are rejected. Relative paths
// resolve against the config file's directory.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text, const std::string& base_dir);

}  // namespace cdsbench
