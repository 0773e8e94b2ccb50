#include "cdsbench/lexicon.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/util.hpp"

#include <filesystem>
#include <sstream>

namespace cdsbench {

namespace {

int find_column(const std::vector<std::string>& header,
                const std::vector<std::string>& names) {
    for (const std::string& name : names) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (to_lower(trim(header[i])) == name) return static_cast<int>(i);
        }
    }
    return -1;
}

}  // namespace

std::optional<double> ConcretenessLexicon::rating(std::string_view word) const {
    auto it = entries_.find(to_lower(word));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

bool FunctionWordSet::contains(std::string_view word) const {
    return words_.count(std::string(word)) > 0;
}

ConcretenessLexicon load_concreteness_csv(const std::string& path) {
    std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::NoValidEntries, "empty concreteness file " + path);
    }
    std::vector<std::string> header = parse_csv_line(line);
    int word_col = find_column(header, {"word"});
    int rating_col = find_column(header, {"conc.m", "conc_m", "rating", "mean", "concreteness"});
    if (word_col < 0) word_col = 0;
    if (rating_col < 0) rating_col = word_col == 0 ? 1 : 0;

    std::unordered_map<std::string, double> entries;
    int skipped = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = parse_csv_line(line);
        if (static_cast<int>(fields.size()) <= std::max(word_col, rating_col)) {
            ++skipped;
            continue;
        }
        std::string word = to_lower(trim(fields[static_cast<std::size_t>(word_col)]));
        if (word.empty()) {
            ++skipped;
            continue;
        }
        double rating = 0.0;
        try {
            std::size_t consumed = 0;
            rating = std::stod(fields[static_cast<std::size_t>(rating_col)], &consumed);
            if (consumed == 0) {
                ++skipped;
                continue;
            }
        } catch (const std::exception&) {
            ++skipped;
            continue;
        }
        if (rating < 1.0 || rating > 5.0) {
            ++skipped;  // outside the documented 1-5 scale
            continue;
        }
        if (!entries.emplace(std::move(word), rating).second) {
            ++skipped;  // duplicate key, first row wins
        }
    }
    if (entries.empty()) {
        throw Error(ErrorCode::NoValidEntries, "no valid rows in " + path);
    }
    return ConcretenessLexicon(std::move(entries),
                               std::filesystem::path(path).filename().string(), skipped);
}

FunctionWordSet load_function_words(const std::string& path) {
    std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::unordered_set<std::string> words;
    while (std::getline(in, line)) {
        std::string word = trim(line);
        if (word.empty() || word[0] == '#') continue;
        words.insert(to_lower(word));
    }
    if (words.empty()) {
        throw Error(ErrorCode::NoValidEntries, "no function words in " + path);
    }
    return FunctionWordSet(std::move(words),
                           std::filesystem::path(path).filename().string());
}

Lexicons load_lexicons(const std::string& concreteness_path,
                       const std::string& function_words_path) {
    Lexicons lex;
    lex.concreteness = load_concreteness_csv(concreteness_path);
    lex.function_words = load_function_words(function_words_path);
    return lex;
}

}  // namespace cdsbench
