#include "cdsbench/corpus.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace cdsbench {

namespace {

using nlohmann::json;

bool is_edge_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

// Strips leading/trailing punctuation; interior apostrophes etc. survive,
// so "let's" stays one token while "catch." becomes "catch".
std::string strip_edge_punct(std::string_view token) {
    std::size_t b = 0;
    std::size_t e = token.size();
    while (b < e && is_edge_punct(token[b])) ++b;
    while (e > b && is_edge_punct(token[e - 1])) --e;
    return std::string(token.substr(b, e - b));
}

// Removes [...] and (...) spans and &=word annotation tokens at the
// character level. Unbalanced closers are dropped.
std::string strip_annotations(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    int square = 0;
    int paren = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (c == '[') {
            ++square;
            ++i;
            continue;
        }
        if (c == ']') {
            if (square > 0) --square;
            ++i;
            continue;
        }
        if (c == '(') {
            ++paren;
            ++i;
            continue;
        }
        if (c == ')') {
            if (paren > 0) --paren;
            ++i;
            continue;
        }
        if (square > 0 || paren > 0) {
            ++i;
            continue;
        }
        if (c == '&' && i + 1 < s.size() && s[i + 1] == '=') {
            while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
            continue;
        }
        out.push_back(c);
        ++i;
    }
    return out;
}

int parse_chat_age_months(std::string_view age_field) {
    // CHAT age format: years;months.days, e.g. "2;6.14".
    std::string field = trim(age_field);
    if (field.empty()) return 0;
    std::size_t semi = field.find(';');
    try {
        if (semi == std::string::npos) {
            int years = std::stoi(field);
            return years * 12;
        }
        int years = std::stoi(field.substr(0, semi));
        int months = 0;
        std::string rest = field.substr(semi + 1);
        std::size_t dot = rest.find('.');
        std::string month_part = dot == std::string::npos ? rest : rest.substr(0, dot);
        if (!trim(month_part).empty()) months = std::stoi(month_part);
        return years * 12 + months;
    } catch (const std::exception&) {
        return 0;
    }
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            if (!current.empty() && current.back() == '\r') current.pop_back();
            lines.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) lines.push_back(current);
    return lines;
}

}  // namespace

Role opposite(Role role) {
    return role == Role::Child ? Role::Caregiver : Role::Child;
}

const char* role_name(Role role) {
    return role == Role::Child ? "child" : "caregiver";
}

const char* role_label(Role role) {
    return role == Role::Child ? "CHI" : "ADULT";
}

Role role_from_name(std::string_view name) {
    std::string n = to_lower(name);
    if (n == "child") return Role::Child;
    if (n == "caregiver") return Role::Caregiver;
    throw Error(ErrorCode::UnknownRole, "unknown role '" + std::string(name) + "'");
}

std::string Utterance::text() const {
    if (is_silence) return kSilenceToken;
    if (is_unintelligible) return kUnintelligibleToken;
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

Utterance make_silence(Role role, int index) {
    Utterance u;
    u.role = role;
    u.raw_text = kSilenceToken;
    u.is_silence = true;
    u.index = index;
    return u;
}

bool Conversation::is_alternating() const {
    for (std::size_t i = 1; i < utterances.size(); ++i) {
        if (utterances[i].role == utterances[i - 1].role) return false;
    }
    return true;
}

Utterance normalize_utterance(std::string_view raw, Role role, int index) {
    Utterance u;
    u.role = role;
    u.index = index;

    std::string payload = trim(raw);
    if (payload == kSilenceToken) {
        u.raw_text = kSilenceToken;
        u.is_silence = true;
        return u;
    }
    if (payload == kUnintelligibleToken) {
        u.raw_text = kUnintelligibleToken;
        u.is_unintelligible = true;
        return u;
    }

    std::string cleaned = to_lower(strip_annotations(payload));
    bool saw_unintelligible = false;
    for (const std::string& piece : split_ws(cleaned)) {
        std::string token = strip_edge_punct(piece);
        if (token.empty()) continue;
        if (token == "xxx" || token == "yyy") {
            saw_unintelligible = true;
            continue;
        }
        if (token == "0") continue;  // CHAT null-action marker
        u.tokens.push_back(std::move(token));
    }

    if (u.tokens.empty()) {
        if (saw_unintelligible) {
            u.raw_text = kUnintelligibleToken;
            u.is_unintelligible = true;
        } else {
            u.raw_text = kSilenceToken;
            u.is_silence = true;
        }
        return u;
    }
    u.raw_text = payload;
    return u;
}

Conversation parse_chat(const std::string& text, const std::string& id) {
    Conversation conv;
    conv.id = id;

    struct TierLine {
        Role role;
        std::string payload;
    };
    std::vector<TierLine> tiers;
    bool in_speaker_tier = false;  // continuation lines attach only to * tiers

    const std::vector<std::string> lines = split_lines(text);
    for (std::size_t lineno = 0; lineno < lines.size(); ++lineno) {
        const std::string& line = lines[lineno];
        if (line.empty()) {
            continue;
        }
        char head = line[0];
        if (head == '@') {
            in_speaker_tier = false;
            std::size_t colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::string key = line.substr(0, colon);
            if (key == "@ID") {
                std::vector<std::string> fields;
                std::string payload = trim(line.substr(colon + 1));
                std::stringstream ss(payload);
                std::string field;
                while (std::getline(ss, field, '|')) fields.push_back(field);
                if (fields.size() > 3 && trim(fields[2]) == "CHI") {
                    int months = parse_chat_age_months(fields[3]);
                    if (months > 0) conv.age_months = months;
                }
            }
            continue;
        }
        if (head == '%') {
            in_speaker_tier = false;
            continue;
        }
        if (head == '*') {
            std::size_t colon = line.find(':');
            if (colon == std::string::npos) {
                throw Error(ErrorCode::MalformedTier,
                            "line " + std::to_string(lineno + 1) + " lacks ':' in " +
                                (id.empty() ? "<transcript>" : id));
            }
            std::string speaker = trim(line.substr(1, colon - 1));
            Role role = speaker == "CHI" ? Role::Child : Role::Caregiver;
            tiers.push_back({role, trim(line.substr(colon + 1))});
            in_speaker_tier = true;
            continue;
        }
        if ((head == '\t' || head == ' ') && in_speaker_tier && !tiers.empty()) {
            std::string cont = trim(line);
            if (!cont.empty()) {
                if (!tiers.back().payload.empty()) tiers.back().payload.push_back(' ');
                tiers.back().payload += cont;
            }
            continue;
        }
        // Anything else is outside the supported CHAT subset; skip it.
        in_speaker_tier = false;
    }

    if (tiers.empty()) {
        throw Error(ErrorCode::EmptyTranscript,
                    "no speaker tiers in " + (id.empty() ? "<transcript>" : id));
    }
    conv.utterances.reserve(tiers.size());
    for (std::size_t i = 0; i < tiers.size(); ++i) {
        conv.utterances.push_back(
            normalize_utterance(tiers[i].payload, tiers[i].role, static_cast<int>(i)));
    }
    return conv;
}

AlternationResult alternate_and_pair(const Conversation& conv) {
    if (conv.utterances.size() < 2) {
        throw Error(ErrorCode::TooShort,
                    "conversation " + conv.id + " has " +
                        std::to_string(conv.utterances.size()) + " utterance(s), need >= 2");
    }
    AlternationResult result;
    result.conversation.id = conv.id;
    result.conversation.age_months = conv.age_months;
    result.conversation.source = conv.source;

    auto& out = result.conversation.utterances;
    for (const Utterance& u : conv.utterances) {
        if (!out.empty() && out.back().role == u.role) {
            out.push_back(make_silence(opposite(u.role)));
        }
        out.push_back(u);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].index = static_cast<int>(i);
    }
    for (std::size_t i = 0; i + 1 < out.size(); ++i) {
        ExchangePair pair;
        pair.prompt = out[i];
        pair.response = out[i + 1];
        pair.conversation_id = conv.id;
        pair.pair_index = static_cast<int>(i);
        result.pairs.push_back(std::move(pair));
    }
    return result;
}

CorpusStats compute_stats(const std::vector<Conversation>& alternated,
                          const std::vector<ExchangePair>& pairs) {
    CorpusStats stats;
    stats.pair_count = static_cast<std::int64_t>(pairs.size());
    for (const Conversation& conv : alternated) {
        for (const Utterance& u : conv.utterances) {
            auto n = static_cast<std::int64_t>(u.tokens.size());
            stats.token_count_total += n;
            if (u.role == Role::Child) {
                stats.token_count_child += n;
            } else {
                stats.token_count_caregiver += n;
            }
        }
    }
    return stats;
}

BenchmarkSet select_benchmark_set(const std::vector<Conversation>& candidates,
                                  const std::vector<int>& ages_years,
                                  int per_age) {
    BenchmarkSet set;
    if (per_age == 0) return set;

    std::map<int, std::vector<const Conversation*>> buckets;
    for (const Conversation& conv : candidates) {
        buckets[conv.age_months / 12].push_back(&conv);
    }
    for (int age : ages_years) {
        auto it = buckets.find(age);
        int available = it == buckets.end() ? 0 : static_cast<int>(it->second.size());
        if (available < per_age) {
            throw Error(ErrorCode::InsufficientData,
                        "age bucket " + std::to_string(age) + "y: need " +
                            std::to_string(per_age) + " conversations, have " +
                            std::to_string(available));
        }
        auto& bucket = it->second;
        std::sort(bucket.begin(), bucket.end(),
                  [](const Conversation* a, const Conversation* b) { return a->id < b->id; });
        for (int i = 0; i < per_age; ++i) {
            AlternationResult alt = alternate_and_pair(*bucket[static_cast<std::size_t>(i)]);
            set.conversations.push_back(std::move(alt.conversation));
            for (ExchangePair& pair : alt.pairs) {
                set.pairs.push_back(std::move(pair));
            }
        }
    }
    set.stats = compute_stats(set.conversations, set.pairs);
    return set;
}

std::vector<Conversation> conversations_from_records(const std::string& jsonl_text) {
    std::vector<Conversation> conversations;
    Conversation* current = nullptr;
    std::istringstream in(jsonl_text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        json rec;
        try {
            rec = json::parse(trimmed);
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::IoError,
                        "record line " + std::to_string(lineno) + ": " + ex.what());
        }
        if (!rec.contains("conversation_id") || !rec.contains("role") || !rec.contains("text")) {
            throw Error(ErrorCode::IoError,
                        "record line " + std::to_string(lineno) +
                            ": requires conversation_id, role, age_months, text");
        }
        std::string conv_id = rec.at("conversation_id").get<std::string>();
        if (current == nullptr || current->id != conv_id) {
            Conversation conv;
            conv.id = conv_id;
            conv.age_months = rec.value("age_months", 0);
            if (rec.value("source", std::string("reference")) == "generated") {
                conv.source = ConversationSource::Generated;
            }
            conversations.push_back(std::move(conv));
            current = &conversations.back();
        }
        Role role = role_from_name(rec.at("role").get<std::string>());
        current->utterances.push_back(
            normalize_utterance(rec.at("text").get<std::string>(), role,
                                static_cast<int>(current->utterances.size())));
    }
    return conversations;
}

std::string conversations_to_records(const std::vector<Conversation>& conversations) {
    std::string out;
    for (const Conversation& conv : conversations) {
        for (const Utterance& u : conv.utterances) {
            json rec;
            rec["conversation_id"] = conv.id;
            rec["role"] = role_name(u.role);
            rec["age_months"] = conv.age_months;
            rec["text"] = u.text();
            if (conv.source == ConversationSource::Generated) {
                rec["source"] = "generated";
            }
            out += rec.dump();
            out.push_back('\n');
        }
    }
    return out;
}

std::vector<Conversation> load_record_file(const std::string& path) {
    return conversations_from_records(read_text_file(path));
}

void write_record_file(const std::string& path, const std::vector<Conversation>& conversations) {
    write_text_file(path, conversations_to_records(conversations));
}

}  // namespace cdsbench
