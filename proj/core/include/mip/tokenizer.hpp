#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mip/model.hpp"

namespace mip {

// Explicit vocabulary for the greedy longest-match tokenizer. Token id is
// the index into `tokens`. Totality over arbitrary byte strings relies on
// the 256 single-byte tokens being present.
class Vocab {
public:
    Vocab() = default;
    explicit Vocab(std::vector<std::string> tokens);

    size_t size() const { return tokens_.size(); }
    const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // Id for an exact token string, or -1 if absent.
    int id_of(const std::string& token) const;
    // Same, but throws ValidationError naming the token when absent.
    int require(const std::string& token) const;

    bool has_byte_fallback() const { return has_byte_fallback_; }

    // Longest token (by byte length) whose text is a prefix of text[pos..].
    // Returns -1 when nothing matches.
    int longest_match(const std::string& text, size_t pos) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    // Candidates per leading byte, sorted by descending token length.
    std::vector<std::vector<int>> by_first_byte_;
    bool has_byte_fallback_ = false;
};

// Tokenizer file: UTF-8 text, one `token<TAB>id` line per token, ids dense
// from 0. Control bytes (<= 0x1F), DEL, and '<' inside the token text are
// written as `<0xNN>` escapes so tabs and newlines stay unambiguous.
Vocab load_vocab(const std::string& path);
void save_vocab(const Vocab& vocab, const std::string& path);

std::string escape_token(const std::string& raw);
std::string unescape_token(const std::string& escaped);

// Deterministic greedy longest-match segmentation. Throws ValidationError
// if some position matches no token (possible only without byte fallback).
TokenSequence tokenize(const Vocab& vocab, const std::string& text);

std::string detokenize(const Vocab& vocab, const TokenSequence& tokens);

}  // namespace mip
