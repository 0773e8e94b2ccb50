#include "cdsbench/util.hpp"

#include "cdsbench/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cdsbench {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fmix64(std::uint64_t h) {
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ULL;
    h ^= h >> 33;
    return h;
}

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf);
}

std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

std::size_t uniform_index(std::uint64_t word, std::size_t n) {
    // Multiply-shift: maps the 64-bit word to [0, n) with negligible bias
    // and identical results on every platform.
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(word) * static_cast<unsigned __int128>(n)) >> 64);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    // Shortest round-trip text: value-preserving across write/read cycles.
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(field);
    return fields;
}

std::string csv_escape(std::string_view field) {
    bool needs_quotes = field.find_first_of(",\"\n") != std::string_view::npos;
    if (!needs_quotes) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::FileUnreadable, "cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path);
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, "short write to " + path);
    }
}

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedTier: return "MALFORMED_TIER";
        case ErrorCode::EmptyTranscript: return "EMPTY_TRANSCRIPT";
        case ErrorCode::TooShort: return "TOO_SHORT";
        case ErrorCode::InsufficientData: return "INSUFFICIENT_DATA";
        case ErrorCode::CorpusNotFound: return "CORPUS_NOT_FOUND";
        case ErrorCode::FileUnreadable: return "FILE_UNREADABLE";
        case ErrorCode::NoValidEntries: return "NO_VALID_ENTRIES";
        case ErrorCode::ProviderUnavailable: return "PROVIDER_UNAVAILABLE";
        case ErrorCode::DimensionMismatch: return "DIMENSION_MISMATCH";
        case ErrorCode::InvalidTree: return "INVALID_TREE";
        case ErrorCode::UnknownRole: return "UNKNOWN_ROLE";
        case ErrorCode::MissingExemplars: return "MISSING_EXEMPLARS";
        case ErrorCode::BackendExhausted: return "BACKEND_EXHAUSTED";
        case ErrorCode::PlaybackMiss: return "PLAYBACK_MISS";
        case ErrorCode::DigestCollision: return "DIGEST_COLLISION";
        case ErrorCode::DegenerateDesign: return "DEGENERATE_DESIGN";
        case ErrorCode::EmptyGroup: return "EMPTY_GROUP";
        case ErrorCode::ConfigInvalid: return "CONFIG_INVALID";
        case ErrorCode::IoError: return "IO_ERROR";
    }
    return "UNKNOWN";
}

int error_exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigInvalid:
            return 2;
        case ErrorCode::MalformedTier:
        case ErrorCode::EmptyTranscript:
        case ErrorCode::TooShort:
        case ErrorCode::InsufficientData:
        case ErrorCode::CorpusNotFound:
            return 3;
        case ErrorCode::UnknownRole:
        case ErrorCode::MissingExemplars:
        case ErrorCode::BackendExhausted:
        case ErrorCode::PlaybackMiss:
        case ErrorCode::DigestCollision:
            return 4;
        case ErrorCode::ProviderUnavailable:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::InvalidTree:
            return 5;
        case ErrorCode::FileUnreadable:
        case ErrorCode::NoValidEntries:
        case ErrorCode::IoError:
            return 6;
        case ErrorCode::DegenerateDesign:
        case ErrorCode::EmptyGroup:
            return 7;
    }
    return 1;
}

}  // namespace cdsbench
