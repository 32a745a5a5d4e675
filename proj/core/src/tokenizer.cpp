#include "mip/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "mip/errors.hpp"

namespace mip {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    by_first_byte_.resize(256);
    for (size_t id = 0; id < tokens_.size(); ++id) {
        const std::string& tok = tokens_[id];
        if (tok.empty())
            throw ValidationError("vocabulary token " + std::to_string(id) + " is empty");
        if (!index_.emplace(tok, static_cast<int>(id)).second)
            throw ValidationError("duplicate vocabulary token: " + escape_token(tok));
        by_first_byte_[static_cast<unsigned char>(tok[0])].push_back(static_cast<int>(id));
    }
    for (auto& bucket : by_first_byte_) {
        std::sort(bucket.begin(), bucket.end(), [this](int a, int b) {
            const size_t la = tokens_[static_cast<size_t>(a)].size();
            const size_t lb = tokens_[static_cast<size_t>(b)].size();
            return la != lb ? la > lb : a < b;
        });
    }
    has_byte_fallback_ = true;
    for (int b = 0; b < 256 && has_byte_fallback_; ++b)
        if (index_.find(std::string(1, static_cast<char>(b))) == index_.end())
            has_byte_fallback_ = false;
}

int Vocab::id_of(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
}

int Vocab::require(const std::string& token) const {
    const int id = id_of(token);
    if (id < 0) throw ValidationError("vocabulary lacks token: " + escape_token(token));
    return id;
}

int Vocab::longest_match(const std::string& text, size_t pos) const {
    const auto& bucket = by_first_byte_[static_cast<unsigned char>(text[pos])];
    for (int id : bucket) {
        const std::string& tok = tokens_[static_cast<size_t>(id)];
        if (text.compare(pos, tok.size(), tok) == 0) return id;
    }
    return -1;
}

std::string escape_token(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    for (unsigned char c : raw) {
        if (c <= 0x1F || c == 0x7F || c == '<') {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "<0x%02X>", c);
            out += buf;
        } else {
            out += static_cast<char>(c);
        }
    }
    return out;
}

std::string unescape_token(const std::string& escaped) {
    std::string out;
    out.reserve(escaped.size());
    for (size_t i = 0; i < escaped.size();) {
        if (escaped[i] == '<') {
            if (i + 5 >= escaped.size() || escaped.compare(i, 3, "<0x") != 0 ||
                escaped[i + 5] != '>')
                throw FormatError("malformed token escape in: " + escaped);
            const std::string hex = escaped.substr(i + 3, 2);
            char* end = nullptr;
            const long value = std::strtol(hex.c_str(), &end, 16);
            if (end != hex.c_str() + 2)
                throw FormatError("malformed token escape in: " + escaped);
            out += static_cast<char>(value);
            i += 6;
        } else {
            out += escaped[i];
            ++i;
        }
    }
    return out;
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);

    std::vector<std::pair<std::string, size_t>> entries;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const size_t tab = line.rfind('\t');
        if (tab == std::string::npos)
            throw FormatError(path + ":" + std::to_string(line_no) + ": missing tab separator");
        size_t id;
        try {
            size_t consumed = 0;
            id = std::stoul(line.substr(tab + 1), &consumed);
            if (consumed != line.size() - tab - 1) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": unparsable token id");
        }
        entries.emplace_back(unescape_token(line.substr(0, tab)), id);
    }

    std::vector<std::string> tokens(entries.size());
    std::vector<bool> seen(entries.size(), false);
    for (const auto& [tok, id] : entries) {
        if (id >= tokens.size())
            throw FormatError(path + ": token id " + std::to_string(id) +
                              " not dense in [0, " + std::to_string(tokens.size()) + ")");
        if (seen[id]) throw FormatError(path + ": duplicate token id " + std::to_string(id));
        seen[id] = true;
        tokens[id] = tok;
    }
    return Vocab(std::move(tokens));
}

void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    for (size_t id = 0; id < vocab.size(); ++id)
        out << escape_token(vocab.token(static_cast<int>(id))) << '\t' << id << '\n';
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

TokenSequence tokenize(const Vocab& vocab, const std::string& text) {
    TokenSequence seq;
    size_t pos = 0;
    while (pos < text.size()) {
        const int id = vocab.longest_match(text, pos);
        if (id < 0)
            throw ValidationError("no vocabulary token matches text at byte " +
                                  std::to_string(pos) + " (byte fallback missing)");
        seq.tokens.push_back(id);
        pos += vocab.token(id).size();
    }
    return seq;
}

std::string detokenize(const Vocab& vocab, const TokenSequence& tokens) {
    std::string out;
    for (int id : tokens.tokens) out += vocab.token(id);
    return out;
}

}  // namespace mip
