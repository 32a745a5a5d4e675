#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "mip/errors.hpp"
#include "mip/tokenizer.hpp"
#include "temp_files.hpp"

using fixtures::TempDir;
using mip::TokenSequence;
using mip::Vocab;

namespace {

// All 256 single bytes plus the given multi-byte merges.
Vocab byte_vocab(std::vector<std::string> extra) {
    std::vector<std::string> tokens;
    for (int b = 0; b < 256; ++b) tokens.push_back(std::string(1, static_cast<char>(b)));
    for (auto& t : extra) tokens.push_back(std::move(t));
    return Vocab(std::move(tokens));
}

std::vector<int> ids(const TokenSequence& seq) { return seq.tokens; }

}  // namespace

TEST_CASE("greedy segmentation takes the longest match at each step") {
    const Vocab vocab = byte_vocab({"ab", "abc", "cd"});
    const int ab = vocab.require("ab"), abc = vocab.require("abc"), cd = vocab.require("cd");

    CHECK(ids(mip::tokenize(vocab, "abc")) == std::vector<int>{abc});
    CHECK(ids(mip::tokenize(vocab, "abcd")) == std::vector<int>{abc, int('d')});
    // Greedy is not globally optimal: "abcd" never becomes ab + cd.
    CHECK(ids(mip::tokenize(vocab, "ababc")) == std::vector<int>{ab, abc});
    CHECK(ids(mip::tokenize(vocab, "cdab")) == std::vector<int>{cd, ab});
    CHECK(mip::tokenize(vocab, "").tokens.empty());
}

TEST_CASE("byte fallback makes tokenization total") {
    const Vocab vocab = byte_vocab({"hello"});
    CHECK(vocab.has_byte_fallback());
    std::string every_byte;
    for (int b = 0; b < 256; ++b) every_byte += static_cast<char>(b);
    const TokenSequence seq = mip::tokenize(vocab, every_byte);
    CHECK(mip::detokenize(vocab, seq) == every_byte);
}

TEST_CASE("detokenize inverts tokenize for arbitrary text") {
    const Vocab vocab = byte_vocab({"the ", "he", "rm", "th"});
    const std::string text = "the thermometer, \tthe them\n";
    CHECK(mip::detokenize(vocab, mip::tokenize(vocab, text)) == text);
}

TEST_CASE("without byte fallback unmatched text throws") {
    const Vocab vocab(std::vector<std::string>{"aa", "b"});
    CHECK_FALSE(vocab.has_byte_fallback());
    CHECK(ids(mip::tokenize(vocab, "baab")) == std::vector<int>{1, 0, 1});
    CHECK_THROWS_AS(mip::tokenize(vocab, "baa b"), mip::ValidationError);  // space unmatched
    CHECK_THROWS_AS(mip::tokenize(vocab, "a"), mip::ValidationError);      // lone 'a' unmatched
}

TEST_CASE("id_of and require agree and require names the missing token") {
    const Vocab vocab = byte_vocab({"yes"});
    CHECK(vocab.id_of("yes") == 256);
    CHECK(vocab.require("yes") == 256);
    CHECK(vocab.id_of("no") == -1);
    CHECK_THROWS_AS(vocab.require("no"), mip::ValidationError);
}

TEST_CASE("duplicate and empty tokens are rejected") {
    CHECK_THROWS_AS(Vocab({"a", "b", "a"}), mip::ValidationError);
    CHECK_THROWS_AS(Vocab({"a", ""}), mip::ValidationError);
}

TEST_CASE("ties in length break toward the lower id") {
    // Two distinct tokens can't be equal, but a single-byte token and the
    // byte token itself collide; verify longest_match prefers longer always.
    const Vocab vocab(std::vector<std::string>{"x", "xx", "xxx"});
    CHECK(vocab.longest_match("xxx", 0) == 2);
    CHECK(vocab.longest_match("xx", 0) == 1);
    CHECK(vocab.longest_match("xy", 0) == 0);
    CHECK(vocab.longest_match("yx", 1) == 0);
}

TEST_CASE("escape_token hides control bytes, DEL, and '<'") {
    CHECK(mip::escape_token("plain") == "plain");
    CHECK(mip::escape_token("\t") == "<0x09>");
    CHECK(mip::escape_token("\n") == "<0x0A>");
    CHECK(mip::escape_token("<") == "<0x3C>");
    CHECK(mip::escape_token("\x7f") == "<0x7F>");
    CHECK(mip::escape_token("a<b\tc") == "a<0x3C>b<0x09>c");
    // Bytes >= 0x80 pass through untouched.
    CHECK(mip::escape_token("\xc3\xa9") == "\xc3\xa9");
}

TEST_CASE("unescape_token inverts escape_token and rejects malformed escapes") {
    const std::string samples[] = {"plain", "\t\n<>", "a<b", std::string("\x00\x1f\x7f", 3)};
    for (const std::string& s : samples) CHECK(mip::unescape_token(mip::escape_token(s)) == s);
    CHECK_THROWS_AS(mip::unescape_token("<0x9>"), mip::FormatError);
    CHECK_THROWS_AS(mip::unescape_token("<oops>"), mip::FormatError);
    CHECK_THROWS_AS(mip::unescape_token("<0x4"), mip::FormatError);
    CHECK_THROWS_AS(mip::unescape_token("<0xZZ>"), mip::FormatError);
}

TEST_CASE("vocab file round-trips every byte token") {
    const Vocab vocab = byte_vocab({"ans:", " True", " False"});
    TempDir dir("vocab");
    const std::string path = dir.file("v.tsv");
    mip::save_vocab(vocab, path);
    const Vocab back = mip::load_vocab(path);
    REQUIRE(back.size() == vocab.size());
    for (size_t id = 0; id < vocab.size(); ++id)
        CHECK(back.token(static_cast<int>(id)) == vocab.token(static_cast<int>(id)));
    CHECK(back.has_byte_fallback());

    // Saving again is byte-identical.
    const std::string path2 = dir.file("v2.tsv");
    mip::save_vocab(back, path2);
    CHECK(fixtures::read_bytes(path) == fixtures::read_bytes(path2));
}

TEST_CASE("vocab file format is token<TAB>id with escapes") {
    const Vocab vocab(std::vector<std::string>{"a", "<s>", "\tq"});
    TempDir dir("vfmt");
    const std::string path = dir.file("v.tsv");
    mip::save_vocab(vocab, path);
    CHECK(fixtures::read_bytes(path) == "a\t0\n<0x3C>s>\t1\n<0x09>q\t2\n");
}

TEST_CASE("vocab loader rejects malformed files") {
    TempDir dir("vbad");
    const std::string path = dir.file("v.tsv");

    fixtures::write_bytes(path, "a 0\n");  // no tab
    CHECK_THROWS_AS(mip::load_vocab(path), mip::FormatError);

    fixtures::write_bytes(path, "a\tzero\n");  // non-numeric id
    CHECK_THROWS_AS(mip::load_vocab(path), mip::FormatError);

    fixtures::write_bytes(path, "a\t0\nb\t2\n");  // ids not dense
    CHECK_THROWS_AS(mip::load_vocab(path), mip::FormatError);

    fixtures::write_bytes(path, "a\t0\nb\t0\n");  // duplicate id
    CHECK_THROWS_AS(mip::load_vocab(path), mip::FormatError);

    fixtures::write_bytes(path, "a\t0\na\t1\n");  // duplicate token text
    CHECK_THROWS_AS(mip::load_vocab(path), mip::ValidationError);

    CHECK_THROWS_AS(mip::load_vocab(dir.file("missing.tsv")), mip::FormatError);
}

TEST_CASE("token ids order the file, not line order") {
    TempDir dir("vorder");
    const std::string path = dir.file("v.tsv");
    fixtures::write_bytes(path, "second\t1\nfirst\t0\n");
    const Vocab vocab = mip::load_vocab(path);
    CHECK(vocab.token(0) == "first");
    CHECK(vocab.token(1) == "second");
}
