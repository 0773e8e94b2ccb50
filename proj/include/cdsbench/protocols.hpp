#pragma once

#include "cdsbench/analyzers.hpp"
#include "cdsbench/backends.hpp"
#include "cdsbench/corpus.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cdsbench {

enum class Direction { ChildToCaregiver, CaregiverToChild, Both };

const char* direction_name(Direction d);
Direction direction_from_name(std::string_view name);

// Prompt role for a single-turn direction ("child-to-caregiver" prompts
// with child turns; the caregiver side is generated).
Role prompt_role(Direction d);

/// Everything that determines a run, serialized next to every output.
struct RunManifest {
    std::string protocol;   // "single" | "multi"
    std::string direction;  // single-turn only; "" for multi
    ShotSetting shots = ShotSetting::Zero;
    std::map<std::string, BackendDescriptor> backends;  // keyed by role name
    std::map<std::string, std::string> template_hashes;
    ProviderDescriptor embedder;
    ProviderDescriptor parser;
    std::uint64_t seed = 0;
    int max_turns = 300;
    int exemplar_count = 3;
    // Pair indices excluded from few-shot evaluation (the exemplar pairs).
    std::vector<int> excluded_exemplar_pairs;
    std::string timestamp;
    std::string toolkit_version;

    // Stable digest over everything except the timestamp, so replayed runs
    // reconcile with their reports byte for byte.
    std::string digest() const;
    std::string to_json() const;
    static RunManifest from_json(const std::string& text);

    // Tag used as the MetricRecord source for a generated role, e.g.
    // "parrot:zero:single:caregiver".
    std::string configuration_tag(Role generated_role) const;
};

struct GeneratedConversation {
    Conversation conversation;  // alternating by construction
    std::string reference_id;
    std::vector<Role> generated_roles;  // roles whose turns the backend produced
    bool truncated = false;             // backend exhausted mid-conversation
};

struct GeneratedCorpus {
    std::vector<GeneratedConversation> conversations;
    RunManifest manifest;
};

// First k pairs in temporal order; these pair indices are excluded from
// few-shot evaluation.
std::vector<ExchangePair> extract_exemplars(const Conversation& conv, int k);

struct RunOptions {
    int workers = 1;
    int max_turns = 300;
    int exemplar_count = 3;
    // Resume hooks: references reporting done() are skipped; once every
    // generation for a reference finishes, the batch is handed to
    // on_reference_complete (may run concurrently across references).
    std::function<bool(const std::string& reference_id)> already_done;
    std::function<void(const std::string& reference_id,
                       const std::vector<GeneratedConversation>& generated)>
        on_reference_complete;
    std::function<void(const std::string& message)> log;
};

// One generated response per eligible pair. The generated conversation
// interleaves reference prompts with generated responses, so it alternates
// and profiles exactly like a reference conversation. The pool matching
// each direction's responder role answers (direction `both` uses both).
GeneratedCorpus run_single_turn(const BenchmarkSet& set, const BackendPool& child_backend,
                                const BackendPool& caregiver_backend, Direction direction,
                                ShotSetting shots, const RunOptions& options = {});

// Dual-agent self-play seeded with each reference conversation's first
// utterance; stops at min(reference turns, max_turns).
GeneratedCorpus run_multi_turn(const BenchmarkSet& set, const BackendPool& child_backend,
                               const BackendPool& caregiver_backend, ShotSetting shots,
                               int max_turns, const RunOptions& options = {});

}  // namespace cdsbench
