#pragma once

#include "cdsbench/analyzers.hpp"
#include "cdsbench/corpus.hpp"
#include "cdsbench/lexicon.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>

namespace cdsbench {

enum class Measure {
    Concreteness = 0,
    LexicalDensity,
    UtteranceLength,
    SyntacticDepth,
    DialogueAlignment,
    DialogueDiversity,
};

inline constexpr int kMeasureCount = 6;
inline constexpr std::array<Measure, kMeasureCount> kAllMeasures = {
    Measure::Concreteness,     Measure::LexicalDensity,    Measure::UtteranceLength,
    Measure::SyntacticDepth,   Measure::DialogueAlignment, Measure::DialogueDiversity,
};

const char* measure_name(Measure m);
Measure measure_from_name(std::string_view name);

// No silent zeros: an absent value always carries a reason code.
struct MeasureValue {
    std::optional<double> value;
    std::string reason;   // empty when value is set
    int n_scored = 0;     // utterances (or pairs) entering the value
    int n_skipped = 0;    // eligible-by-role items skipped
};

struct MetricRecord {
    std::string conversation_id;
    std::string source = "reference";  // "reference" or a run configuration tag
    Role role = Role::Child;
    int age_months = 0;
    std::array<MeasureValue, kMeasureCount> values;

    const MeasureValue& measure(Measure m) const {
        return values[static_cast<std::size_t>(m)];
    }
    MeasureValue& measure(Measure m) { return values[static_cast<std::size_t>(m)]; }
};

// --- per-utterance measures -------------------------------------------------

// Mean concreteness rating over content tokens found in the lexicon;
// nullopt when no content token is rated (no imputation).
std::optional<double> word_concreteness(const Utterance& u, const ConcretenessLexicon& lex,
                                        const FunctionWordSet& fws);

// Content tokens / total tokens, in [0, 1].
std::optional<double> lexical_density(const Utterance& u, const FunctionWordSet& fws);

// Token count after normalization; punctuation never counts.
int utterance_length(const Utterance& u);

// tree_depth over the provider's parse; nullopt (never throws) when the
// provider fails, so one bad utterance cannot abort a run.
std::optional<int> syntactic_depth(const Utterance& u, DependencyParser& parser,
                                   std::string* failure_reason = nullptr);

// --- dialogue measures ------------------------------------------------------

// Mean cosine similarity between prompt and response embeddings over the
// exchange pairs answered by `role`, silences/unintelligibles excluded.
std::optional<double> dialogue_alignment(const Conversation& conv, Role role,
                                         Embedder& embedder);

// Mean pairwise cosine distance (1 - similarity) over all unordered pairs
// of the role's scoreable utterances; needs at least two of them.
std::optional<double> dialogue_diversity(const Conversation& conv, Role role,
                                         Embedder& embedder);

// Full per-role aggregation; component failures become reason-coded
// undefined fields, never exceptions.
std::pair<MetricRecord, MetricRecord> profile_conversation(const Conversation& conv,
                                                           const Lexicons& lexicons,
                                                           DependencyParser& parser,
                                                           Embedder& embedder);

// CSV serialization: one row per conversation x role, value + reason + n
// columns per measure.
std::string metric_records_to_csv(const std::vector<MetricRecord>& records);
std::vector<MetricRecord> metric_records_from_csv(const std::string& csv_text);

}  // namespace cdsbench
