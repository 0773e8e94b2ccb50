#include "cdsbench/metrics.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cdsbench {

namespace {

constexpr const char* kReasonNoScoreable = "no_scoreable_utterances";
constexpr const char* kReasonNoRatedContent = "no_rated_content_words";
constexpr const char* kReasonNoEligiblePairs = "no_eligible_pairs";
constexpr const char* kReasonTooFewUtterances = "fewer_than_two_utterances";
constexpr const char* kReasonProvider = "provider_unavailable";

std::vector<const Utterance*> scoreable_by_role(const Conversation& conv, Role role) {
    std::vector<const Utterance*> out;
    for (const Utterance& u : conv.utterances) {
        if (u.role == role && u.scoreable()) out.push_back(&u);
    }
    return out;
}

}  // namespace

const char* measure_name(Measure m) {
    switch (m) {
        case Measure::Concreteness: return "concreteness";
        case Measure::LexicalDensity: return "lexical_density";
        case Measure::UtteranceLength: return "mean_utterance_length";
        case Measure::SyntacticDepth: return "mean_syntactic_depth";
        case Measure::DialogueAlignment: return "dialogue_alignment";
        case Measure::DialogueDiversity: return "dialogue_diversity";
    }
    return "unknown";
}

Measure measure_from_name(std::string_view name) {
    for (Measure m : kAllMeasures) {
        if (name == measure_name(m)) return m;
    }
    throw Error(ErrorCode::ConfigInvalid, "unknown measure '" + std::string(name) + "'");
}

std::optional<double> word_concreteness(const Utterance& u, const ConcretenessLexicon& lex,
                                        const FunctionWordSet& fws) {
    if (!u.scoreable()) return std::nullopt;
    double sum = 0.0;
    int n = 0;
    for (const std::string& token : u.tokens) {
        if (!is_content_word(token, fws)) continue;
        if (auto rating = lex.rating(token)) {
            sum += *rating;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

std::optional<double> lexical_density(const Utterance& u, const FunctionWordSet& fws) {
    if (!u.scoreable() || u.tokens.empty()) return std::nullopt;
    int content = 0;
    for (const std::string& token : u.tokens) {
        if (is_content_word(token, fws)) ++content;
    }
    return static_cast<double>(content) / static_cast<double>(u.tokens.size());
}

int utterance_length(const Utterance& u) {
    return static_cast<int>(u.tokens.size());
}

std::optional<int> syntactic_depth(const Utterance& u, DependencyParser& parser,
                                   std::string* failure_reason) {
    if (!u.scoreable() || u.tokens.empty()) return std::nullopt;
    try {
        return tree_depth(parser.parse_heads(u.tokens));
    } catch (const Error& ex) {
        if (failure_reason) *failure_reason = ex.what();
        return std::nullopt;
    }
}

std::optional<double> dialogue_alignment(const Conversation& conv, Role role,
                                         Embedder& embedder) {
    std::vector<std::string> texts;
    std::size_t n_pairs = 0;
    for (std::size_t i = 0; i + 1 < conv.utterances.size(); ++i) {
        const Utterance& prompt = conv.utterances[i];
        const Utterance& response = conv.utterances[i + 1];
        if (response.role != role || prompt.role == response.role) continue;
        if (!prompt.scoreable() || !response.scoreable()) continue;
        texts.push_back(prompt.text());
        texts.push_back(response.text());
        ++n_pairs;
    }
    if (n_pairs == 0) return std::nullopt;
    std::vector<EmbeddingVector> vecs = embedder.embed_batch(texts);
    double sum = 0.0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
        sum += cosine_similarity(vecs[2 * p], vecs[2 * p + 1]);
    }
    return sum / static_cast<double>(n_pairs);
}

std::optional<double> dialogue_diversity(const Conversation& conv, Role role,
                                         Embedder& embedder) {
    std::vector<const Utterance*> mine = scoreable_by_role(conv, role);
    const std::size_t k = mine.size();
    if (k < 2) return std::nullopt;
    std::vector<std::string> texts;
    texts.reserve(k);
    for (const Utterance* u : mine) texts.push_back(u->text());
    std::vector<EmbeddingVector> vecs = embedder.embed_batch(texts);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            sum += 1.0 - cosine_similarity(vecs[i], vecs[j]);
        }
    }
    return sum / (static_cast<double>(k) * static_cast<double>(k - 1) / 2.0);
}

namespace {

MetricRecord profile_role(const Conversation& conv, Role role, const Lexicons& lexicons,
                          DependencyParser& parser, Embedder& embedder) {
    MetricRecord rec;
    rec.conversation_id = conv.id;
    rec.role = role;
    rec.age_months = conv.age_months;
    rec.source = conv.source == ConversationSource::Generated ? "generated" : "reference";

    int n_role_utts = 0;
    for (const Utterance& u : conv.utterances) {
        if (u.role == role) ++n_role_utts;
    }

    double conc_sum = 0.0;
    int conc_n = 0;
    double dens_sum = 0.0;
    int dens_n = 0;
    double len_sum = 0.0;
    int len_n = 0;
    double depth_sum = 0.0;
    int depth_n = 0;
    std::string depth_failure;

    for (const Utterance& u : conv.utterances) {
        if (u.role != role || !u.scoreable()) continue;
        if (auto c = word_concreteness(u, lexicons.concreteness, lexicons.function_words)) {
            conc_sum += *c;
            ++conc_n;
        }
        if (auto d = lexical_density(u, lexicons.function_words)) {
            dens_sum += *d;
            ++dens_n;
        }
        len_sum += utterance_length(u);
        ++len_n;
        if (auto depth = syntactic_depth(u, parser, &depth_failure)) {
            depth_sum += *depth;
            ++depth_n;
        }
    }

    auto set_mean = [&](Measure m, double sum, int n, const char* undefined_reason) {
        MeasureValue& mv = rec.measure(m);
        mv.n_scored = n;
        mv.n_skipped = n_role_utts - n;
        if (n > 0) {
            mv.value = sum / n;
        } else {
            mv.reason = n_role_utts == 0 ? kReasonNoScoreable : undefined_reason;
        }
    };
    set_mean(Measure::Concreteness, conc_sum, conc_n, kReasonNoRatedContent);
    set_mean(Measure::LexicalDensity, dens_sum, dens_n, kReasonNoScoreable);
    set_mean(Measure::UtteranceLength, len_sum, len_n, kReasonNoScoreable);
    set_mean(Measure::SyntacticDepth, depth_sum, depth_n,
             depth_failure.empty() ? kReasonNoScoreable : kReasonProvider);

    // Dialogue measures; provider failures degrade to reason codes.
    {
        MeasureValue& mv = rec.measure(Measure::DialogueAlignment);
        int eligible_pairs = 0;
        int responded_pairs = 0;
        for (std::size_t i = 0; i + 1 < conv.utterances.size(); ++i) {
            if (conv.utterances[i + 1].role != role ||
                conv.utterances[i].role == conv.utterances[i + 1].role) {
                continue;
            }
            ++responded_pairs;
            if (conv.utterances[i].scoreable() && conv.utterances[i + 1].scoreable()) {
                ++eligible_pairs;
            }
        }
        mv.n_scored = eligible_pairs;
        mv.n_skipped = responded_pairs - eligible_pairs;
        try {
            if (auto v = dialogue_alignment(conv, role, embedder)) {
                mv.value = *v;
            } else {
                mv.reason = kReasonNoEligiblePairs;
                mv.n_scored = 0;
            }
        } catch (const Error&) {
            mv.reason = kReasonProvider;
            mv.n_scored = 0;
        }
    }
    {
        MeasureValue& mv = rec.measure(Measure::DialogueDiversity);
        int k = static_cast<int>(scoreable_by_role(conv, role).size());
        mv.n_scored = k >= 2 ? k : 0;
        mv.n_skipped = n_role_utts - mv.n_scored;
        try {
            if (auto v = dialogue_diversity(conv, role, embedder)) {
                mv.value = *v;
            } else {
                mv.reason = k == 0 && n_role_utts == 0 ? kReasonNoScoreable
                                                       : kReasonTooFewUtterances;
            }
        } catch (const Error&) {
            mv.reason = kReasonProvider;
            mv.n_scored = 0;
        }
    }
    return rec;
}

}  // namespace

std::pair<MetricRecord, MetricRecord> profile_conversation(const Conversation& conv,
                                                           const Lexicons& lexicons,
                                                           DependencyParser& parser,
                                                           Embedder& embedder) {
    return {profile_role(conv, Role::Child, lexicons, parser, embedder),
            profile_role(conv, Role::Caregiver, lexicons, parser, embedder)};
}

std::string metric_records_to_csv(const std::vector<MetricRecord>& records) {
    std::string out = "conversation_id,source,role,age_months";
    for (Measure m : kAllMeasures) {
        std::string name = measure_name(m);
        out += "," + name + "," + name + "_reason," + name + "_n_scored," + name + "_n_skipped";
    }
    out.push_back('\n');
    for (const MetricRecord& rec : records) {
        out += csv_escape(rec.conversation_id);
        out += ",";
        out += csv_escape(rec.source);
        out += ",";
        out += role_name(rec.role);
        out += ",";
        out += std::to_string(rec.age_months);
        for (Measure m : kAllMeasures) {
            const MeasureValue& mv = rec.measure(m);
            out += ",";
            if (mv.value) out += format_double(*mv.value);
            out += "," + csv_escape(mv.reason);
            out += "," + std::to_string(mv.n_scored);
            out += "," + std::to_string(mv.n_skipped);
        }
        out.push_back('\n');
    }
    return out;
}

std::vector<MetricRecord> metric_records_from_csv(const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::IoError, "empty metric records CSV");
    }
    const std::size_t expected_fields = 4 + 4 * kMeasureCount;
    std::vector<MetricRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = parse_csv_line(line);
        if (fields.size() != expected_fields) {
            throw Error(ErrorCode::IoError, "metric CSV line " + std::to_string(lineno) +
                                                ": expected " + std::to_string(expected_fields) +
                                                " fields, got " + std::to_string(fields.size()));
        }
        MetricRecord rec;
        rec.conversation_id = fields[0];
        rec.source = fields[1];
        rec.role = role_from_name(fields[2]);
        rec.age_months = std::stoi(fields[3]);
        std::size_t col = 4;
        for (Measure m : kAllMeasures) {
            MeasureValue& mv = rec.measure(m);
            if (!fields[col].empty()) mv.value = std::stod(fields[col]);
            mv.reason = fields[col + 1];
            mv.n_scored = std::stoi(fields[col + 2]);
            mv.n_skipped = std::stoi(fields[col + 3]);
            col += 4;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace cdsbench
