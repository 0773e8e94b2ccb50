#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace cdsbench {

/// Word -> mean concreteness rating on the 1..5 scale. Case-insensitive.
class ConcretenessLexicon {
public:
    ConcretenessLexicon() = default;
    ConcretenessLexicon(std::unordered_map<std::string, double> entries,
                        std::string source_name, int skipped_rows)
        : entries_(std::move(entries)),
          source_name_(std::move(source_name)),
          skipped_rows_(skipped_rows) {}

    std::optional<double> rating(std::string_view word) const;
    std::size_t entry_count() const { return entries_.size(); }
    int skipped_rows() const { return skipped_rows_; }
    const std::string& source_name() const { return source_name_; }

private:
    std::unordered_map<std::string, double> entries_;
    std::string source_name_;
    int skipped_rows_ = 0;
};

class FunctionWordSet {
public:
    FunctionWordSet() = default;
    FunctionWordSet(std::unordered_set<std::string> words, std::string source_name)
        : words_(std::move(words)), source_name_(std::move(source_name)) {}

    bool contains(std::string_view word) const;
    std::size_t size() const { return words_.size(); }
    const std::string& source_name() const { return source_name_; }

private:
    std::unordered_set<std::string> words_;
    std::string source_name_;
};

struct Lexicons {
    ConcretenessLexicon concreteness;
    FunctionWordSet function_words;
};

// Concreteness file: CSV with a header naming a word column and a mean
// rating column; rows with out-of-scale ratings, bad numbers or duplicate
// words are skipped and counted. Function-word file: one word per line,
// '#' comments allowed.
ConcretenessLexicon load_concreteness_csv(const std::string& path);
FunctionWordSet load_function_words(const std::string& path);
Lexicons load_lexicons(const std::string& concreteness_path,
                       const std::string& function_words_path);

inline bool is_content_word(std::string_view word, const FunctionWordSet& fws) {
    return !fws.contains(word);
}

}  // namespace cdsbench
