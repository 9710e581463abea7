/*
 * Copyright 2025 The perspact-bench Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace perspact::text {

// A word or punctuation token with byte offsets into the original string.
// Token text is normalized: ASCII lowercased, U+2019 folded to '.
struct Token {
    std::string text;
    size_t begin = 0;
    size_t end = 0;
    bool word = true;
};

inline bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c == '_' || c == '\'';
}

// True if s[i..] starts the UTF-8 encoding of U+2019 (right single quote).
inline bool is_curly_apostrophe(std::string_view s, size_t i) {
    return i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
           static_cast<unsigned char>(s[i + 1]) == 0x80 &&
           static_cast<unsigned char>(s[i + 2]) == 0x99;
}

inline std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> tokens;
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (is_word_byte(c) || is_curly_apostrophe(s, i)) {
            Token tok;
            tok.begin = i;
            while (i < s.size()) {
                if (is_curly_apostrophe(s, i)) {
                    tok.text.push_back('\'');
                    i += 3;
                } else if (is_word_byte(static_cast<unsigned char>(s[i]))) {
                    tok.text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
                    ++i;
                } else {
                    break;
                }
            }
            tok.end = i;
            tokens.push_back(std::move(tok));
        } else {
            // Non-word, non-space byte (or bytes of a multi-byte char):
            // consume a full UTF-8 sequence as one punctuation token.
            size_t len = 1;
            if ((c & 0xE0) == 0xC0) len = 2;
            else if ((c & 0xF0) == 0xE0) len = 3;
            else if ((c & 0xF8) == 0xF0) len = 4;
            len = std::min(len, s.size() - i);
            tokens.push_back(Token{std::string(s.substr(i, len)), i, i + len, false});
            i += len;
        }
    }
    return tokens;
}

// Indices of sentence-final tokens (.!?), with an implicit boundary at the
// end. Returns [first, last) token-index pairs per sentence.
inline std::vector<std::pair<size_t, size_t>> sentence_ranges(const std::vector<Token>& tokens) {
    std::vector<std::pair<size_t, size_t>> out;
    size_t start = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const Token& t = tokens[i];
        if (!t.word && (t.text == "." || t.text == "!" || t.text == "?")) {
            if (i > start) out.emplace_back(start, i);
            start = i + 1;
        }
    }
    if (start < tokens.size()) out.emplace_back(start, tokens.size());
    return out;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    std::string h = lower(haystack);
    std::string n = lower(needle);
    return h.find(n) != std::string::npos;
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

template <typename Range>
inline std::string join(const Range& parts, std::string_view sep) {
    std::string out;
    bool first = true;
    for (const auto& p : parts) {
        if (!first) out += sep;
        out += p;
        first = false;
    }
    return out;
}

// "left_rail" -> "left rail"; used when ids surface in human-readable text.
inline std::string humanize(std::string_view id) {
    std::string out(id);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

} // namespace perspact::text
