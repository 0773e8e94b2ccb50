#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cdsbench {

inline constexpr const char* kSilenceToken = "<SILENCE>";
inline constexpr const char* kUnintelligibleToken = "<UNINTELLIGIBLE>";

enum class Role { Child, Caregiver };

Role opposite(Role role);
const char* role_name(Role role);   // "child" / "caregiver" (serialization)
const char* role_label(Role role);  // "CHI" / "ADULT" (prompt rendering)
Role role_from_name(std::string_view name);

/// One normalized speaker turn.
struct Utterance {
    Role role = Role::Child;
    std::string raw_text;
    std::vector<std::string> tokens;
    bool is_silence = false;
    bool is_unintelligible = false;
    int index = 0;

    // Canonical display/embedding text: the literal special token for
    // silence/unintelligible turns, otherwise the normalized tokens joined
    // by single spaces.
    std::string text() const;

    // Eligible for word/utterance/dialogue measures.
    bool scoreable() const { return !is_silence && !is_unintelligible; }
};

Utterance make_silence(Role role, int index = 0);

enum class ConversationSource { Reference, Generated };

struct Conversation {
    std::string id;
    int age_months = 0;  // 0 = unknown until selection
    std::vector<Utterance> utterances;
    ConversationSource source = ConversationSource::Reference;

    bool is_alternating() const;
};

/// Adjacent (prompt, response) turns of opposite roles after alternation.
struct ExchangePair {
    Utterance prompt;
    Utterance response;
    std::string conversation_id;
    int pair_index = 0;
};

struct CorpusStats {
    std::int64_t pair_count = 0;
    std::int64_t token_count_total = 0;
    std::int64_t token_count_child = 0;
    std::int64_t token_count_caregiver = 0;
};

struct BenchmarkSet {
    std::vector<Conversation> conversations;  // alternated, normalized
    std::vector<ExchangePair> pairs;
    CorpusStats stats;
};

// Normalizes one tier payload: strips CHAT annotation spans (&=..., [...],
// (...)), lowercases, strips edge punctuation per token. Empty payloads
// become silence; xxx/yyy payloads become unintelligible. Total function.
Utterance normalize_utterance(std::string_view raw, Role role = Role::Child, int index = 0);

// Parses a CHAT transcript. *CHI: maps to child, any other speaker tier to
// caregiver; % and @ tiers are skipped except @ID, which supplies the
// target child's age. Tab-indented lines continue the previous tier.
Conversation parse_chat(const std::string& text, const std::string& id = "");

struct AlternationResult {
    Conversation conversation;
    std::vector<ExchangePair> pairs;
};

// Inserts an opposite-role SILENCE turn between consecutive same-role turns
// and emits every adjacent pair of the alternated sequence.
AlternationResult alternate_and_pair(const Conversation& conv);

// Deterministic per-age-bucket selection (sorted by id, first per_age each).
// ages are in years; a conversation falls in bucket age_months / 12.
BenchmarkSet select_benchmark_set(const std::vector<Conversation>& candidates,
                                  const std::vector<int>& ages_years,
                                  int per_age);

CorpusStats compute_stats(const std::vector<Conversation>& alternated,
                          const std::vector<ExchangePair>& pairs);

// Line-delimited record IO. One JSON object per utterance with fields
// conversation_id, role, age_months, text. Text round-trips through
// normalize_utterance on load.
std::vector<Conversation> conversations_from_records(const std::string& jsonl_text);
std::string conversations_to_records(const std::vector<Conversation>& conversations);
std::vector<Conversation> load_record_file(const std::string& path);
void write_record_file(const std::string& path, const std::vector<Conversation>& conversations);

}  // namespace cdsbench
