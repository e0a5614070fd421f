#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dmarket/csv.hpp"
#include "dmarket/error.hpp"
#include "dmarket/market_data.hpp"

namespace dmarket {

// Positive-word dictionary. Terms ending in '*' match any token with that
// prefix; all other terms match exactly.
class Lexicon {
public:
    Lexicon() = default;

    explicit Lexicon(const std::vector<std::string>& terms) {
        for (const auto& raw : terms) add(raw);
        if (exact_.empty() && prefixes_.empty()) throw InputError("lexicon is empty");
        std::sort(prefixes_.begin(), prefixes_.end());
        prefixes_.erase(std::unique(prefixes_.begin(), prefixes_.end()), prefixes_.end());
    }

    // One term per line, '#' starts a comment.
    static Lexicon load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw InputError("missing lexicon file: " + path.string());
        std::istringstream in(csv::read_file(path));
        std::vector<std::string> terms;
        std::string line;
        while (std::getline(in, line)) {
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            auto t = detail::trim(line);
            while (!t.empty() && (t.back() == '\r' || std::isspace(static_cast<unsigned char>(t.back())))) t.pop_back();
            if (!t.empty()) terms.push_back(t);
        }
        return Lexicon(terms);
    }

    bool matches(std::string_view token) const {
        if (token.empty()) return false;
        if (exact_.count(std::string(token))) return true;
        // candidate prefixes sort at or before the token
        auto it = std::upper_bound(prefixes_.begin(), prefixes_.end(), token,
                                   [](std::string_view t, const std::string& p) { return t < p; });
        while (it != prefixes_.begin()) {
            --it;
            if (token.substr(0, it->size()) == *it) return true;
            if (it->empty() || it->front() != token.front()) break;
        }
        return false;
    }

    std::size_t size() const { return exact_.size() + prefixes_.size(); }

private:
    void add(const std::string& raw) {
        std::string t = detail::lower(detail::trim(raw));
        if (t.empty()) return;
        const auto stars = std::count(t.begin(), t.end(), '*');
        if (stars > 1 || (stars == 1 && t.back() != '*'))
            throw InputError("lexicon term '" + raw + "': '*' is only allowed once, at the end");
        if (stars == 1) {
            t.pop_back();
            if (t.empty()) throw InputError("lexicon term '*' would match everything");
            prefixes_.push_back(t);
        } else {
            exact_.insert(t);
        }
    }

    std::unordered_set<std::string> exact_;
    std::vector<std::string> prefixes_;
};

// Whitespace split, surrounding ASCII punctuation stripped, lowercased.
// Internal punctuation such as apostrophes is kept.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        std::size_t b = i, e = j;
        while (b < e && std::ispunct(static_cast<unsigned char>(text[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(text[e - 1]))) --e;
        if (e > b) out.push_back(detail::lower(text.substr(b, e - b)));
        i = j;
    }
    return out;
}

struct MessageTextStats {
    int word_count = 0;
    int positive_count = 0;
    double positive_fraction = 0;
    double scaled_word_count = 0; // words / 100, the regression scale

    double percent_positive() const { return 100.0 * positive_fraction; }
};

inline MessageTextStats make_text_stats(int words, int positive) {
    MessageTextStats s;
    s.word_count = words;
    s.positive_count = positive;
    s.positive_fraction = static_cast<double>(positive) / std::max(words, 1);
    s.scaled_word_count = words / 100.0;
    return s;
}

inline MessageTextStats score_message(std::string_view text, const Lexicon& lexicon) {
    auto tokens = tokenize(text);
    int positive = 0;
    for (const auto& t : tokens)
        if (lexicon.matches(t)) ++positive;
    return make_text_stats(static_cast<int>(tokens.size()), positive);
}

// Fills word and positive counts from raw text where the input lacks them.
inline void annotate_messages(std::vector<MessageEvent>& messages, const Lexicon* lexicon) {
    for (auto& m : messages) {
        if (m.text.empty()) continue;
        if (!m.word_count) m.word_count = static_cast<int>(tokenize(m.text).size());
        if (lexicon && !m.positive_word_count) {
            auto s = score_message(m.text, *lexicon);
            m.word_count = s.word_count;
            m.positive_word_count = s.positive_count;
        }
    }
}

} // namespace dmarket
