#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ficl {

struct Token {
    int32_t id = 0;
    bool operator==(const Token&) const = default;
};

// Character-level vocabulary: '\n' plus printable ASCII 32..126 (96 symbols).
// tokenize/detokenize are exact inverses on strings over this set.
class CharVocab {
public:
    CharVocab();

    int size() const { return static_cast<int>(chars_.size()); }
    bool contains(char c) const;
    int id(char c) const; // throws naming the character if unknown
    char chr(int id) const;

    std::vector<Token> tokenize(std::string_view text) const;
    std::string detokenize(std::span<const Token> tokens) const;

private:
    std::string chars_;
    int index_[256];
};

} // namespace ficl
