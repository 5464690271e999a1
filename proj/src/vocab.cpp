#include "ficl/vocab.hpp"

#include <stdexcept>

namespace ficl {

CharVocab::CharVocab() {
    for (int& i : index_) {
        i = -1;
    }
    chars_.push_back('\n');
    for (char c = ' '; c <= '~'; ++c) {
        chars_.push_back(c);
    }
    for (size_t i = 0; i < chars_.size(); ++i) {
        index_[static_cast<unsigned char>(chars_[i])] = static_cast<int>(i);
    }
}

bool CharVocab::contains(char c) const {
    return index_[static_cast<unsigned char>(c)] >= 0;
}

int CharVocab::id(char c) const {
    const int i = index_[static_cast<unsigned char>(c)];
    if (i < 0) {
        throw std::invalid_argument(
            "tokenize: character not in vocabulary: code " +
            std::to_string(static_cast<int>(static_cast<unsigned char>(c))));
    }
    return i;
}

char CharVocab::chr(int id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("detokenize: token id " + std::to_string(id) + " out of range");
    }
    return chars_[static_cast<size_t>(id)];
}

std::vector<Token> CharVocab::tokenize(std::string_view text) const {
    std::vector<Token> out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(Token{id(c)});
    }
    return out;
}

std::string CharVocab::detokenize(std::span<const Token> tokens) const {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) {
        out.push_back(chr(t.id));
    }
    return out;
}

} // namespace ficl
