#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "types.hpp"

namespace transec {

/// Identifier of the built-in default tokenizer.
inline constexpr std::string_view kDefaultTokenizer = "wordpunct-v1";

namespace detail {

inline bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
}

inline bool is_space_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace detail

/// Splits into maximal runs of word bytes ([A-Za-z0-9_] and any non-ASCII byte)
/// and single punctuation bytes. Whitespace separates tokens and is dropped.
inline std::vector<std::string_view> wordpunct_tokens(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        auto c = static_cast<unsigned char>(text[i]);
        if (detail::is_space_byte(c)) {
            ++i;
        } else if (detail::is_word_byte(c)) {
            std::size_t j = i;
            while (j < text.size() && detail::is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            out.push_back(text.substr(i, j - i));
            i = j;
        } else {
            out.push_back(text.substr(i, 1));
            ++i;
        }
    }
    return out;
}

inline std::size_t count_whitespace_tokens(std::string_view text) {
    std::size_t n = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        bool space = detail::is_space_byte(c);
        if (!space && !in_token) ++n;
        in_token = !space;
    }
    return n;
}

/// Process-wide table of named token counters.
class TokenizerRegistry {
public:
    using Counter = std::function<std::size_t(std::string_view)>;

    static TokenizerRegistry& instance() {
        static TokenizerRegistry reg;
        return reg;
    }

    void add(std::string id, Counter counter) {
        std::lock_guard lock(mutex_);
        counters_[std::move(id)] = std::move(counter);
    }

    bool contains(std::string_view id) const {
        std::lock_guard lock(mutex_);
        return counters_.find(std::string(id)) != counters_.end();
    }

    std::size_t count(std::string_view text, std::string_view id) const {
        Counter fn;
        {
            std::lock_guard lock(mutex_);
            auto it = counters_.find(std::string(id));
            if (it == counters_.end()) throw InvalidArgument("unknown tokenizer '" + std::string(id) + "'");
            fn = it->second;
        }
        return fn(text);
    }

private:
    TokenizerRegistry() {
        counters_[std::string(kDefaultTokenizer)] = [](std::string_view t) { return wordpunct_tokens(t).size(); };
        counters_["whitespace-v1"] = count_whitespace_tokens;
    }

    mutable std::mutex mutex_;
    std::map<std::string, Counter, std::less<>> counters_;
};

inline std::size_t count_tokens(std::string_view code, std::string_view tokenizer_id = kDefaultTokenizer) {
    return TokenizerRegistry::instance().count(code, tokenizer_id);
}

}  // namespace transec
