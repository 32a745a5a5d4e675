#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "mip/errors.hpp"
#include "mip/model_io.hpp"
#include "mip/rng.hpp"
#include "temp_files.hpp"
#include "test_models.hpp"

using fixtures::TempDir;
using mip::TensorRecord;

namespace {
constexpr char kMagic[4] = {'T', 'E', 'S', 'T'};
}

TEST_CASE("element_count multiplies dims") {
    TensorRecord rec{"t", {3, 4, 2}, {}};
    CHECK(rec.element_count() == 24);
    TensorRecord scalarish{"s", {}, {}};
    CHECK(scalarish.element_count() == 1);
}

TEST_CASE("record file round-trips header and tensors") {
    TempDir dir("recfile");
    const std::string path = dir.file("a.bin");

    std::vector<TensorRecord> records;
    records.push_back({"alpha", {2, 3}, {1, 2, 3, 4, 5, 6}});
    records.push_back({"beta", {4}, {-1.5f, 0.25f, 1e-30f, 3e30f}});
    mip::write_record_file(path, kMagic, 7, "k=v\nname=value\n", records);

    const mip::RecordFile file = mip::read_record_file(path, kMagic, 7);
    CHECK(file.version == 7);
    CHECK(file.header == "k=v\nname=value\n");
    REQUIRE(file.records.size() == 2);
    CHECK(file.records[0].name == "alpha");
    CHECK(file.records[0].dims == std::vector<uint64_t>{2, 3});
    CHECK(file.records[0].data == records[0].data);
    CHECK(file.records[1].name == "beta");
    CHECK(file.records[1].data == records[1].data);
}

TEST_CASE("record file writing is byte-deterministic") {
    TempDir dir("recdet");
    std::vector<TensorRecord> records;
    records.push_back({"x", {2}, {0.1f, -0.2f}});
    mip::write_record_file(dir.file("one.bin"), kMagic, 1, "h=1\n", records);
    mip::write_record_file(dir.file("two.bin"), kMagic, 1, "h=1\n", records);
    const std::string a = fixtures::read_bytes(dir.file("one.bin"));
    const std::string b = fixtures::read_bytes(dir.file("two.bin"));
    CHECK(a.size() > 0);
    CHECK(a == b);
}

TEST_CASE("record file layout matches the documented byte format") {
    TempDir dir("reclayout");
    const std::string path = dir.file("layout.bin");
    mip::write_record_file(path, kMagic, 3, "hi\n", {{"ab", {1}, {1.0f}}});
    const std::string bytes = fixtures::read_bytes(path);
    // magic(4) + version u32 + header_len u64 + header(3)
    // + name_len u32 + name(2) + ndim u32 + dim u64 + f32
    REQUIRE(bytes.size() == 4 + 4 + 8 + 3 + 4 + 2 + 4 + 8 + 4);
    CHECK(bytes.substr(0, 4) == "TEST");
    CHECK(static_cast<unsigned char>(bytes[4]) == 3);  // version, little-endian
    CHECK(static_cast<unsigned char>(bytes[8]) == 3);  // header_len
    CHECK(bytes.substr(16, 3) == "hi\n");
    CHECK(static_cast<unsigned char>(bytes[19]) == 2);  // name_len
    CHECK(bytes.substr(23, 2) == "ab");
}

TEST_CASE("reader rejects bad magic, bad version, and truncation") {
    TempDir dir("recbad");
    const std::string path = dir.file("f.bin");
    mip::write_record_file(path, kMagic, 2, "a=b\n", {{"t", {2}, {1.0f, 2.0f}}});

    constexpr char other[4] = {'N', 'O', 'P', 'E'};
    CHECK_THROWS_AS(mip::read_record_file(path, other, 2), mip::FormatError);
    CHECK_THROWS_AS(mip::read_record_file(path, kMagic, 3), mip::FormatError);

    const std::string full = fixtures::read_bytes(path);
    const std::string cut = dir.file("cut.bin");
    fixtures::write_bytes(cut, full.substr(0, full.size() - 3));  // chop tensor data
    CHECK_THROWS_AS(mip::read_record_file(cut, kMagic, 2), mip::FormatError);

    fixtures::write_bytes(cut, full.substr(0, 10));  // chop inside the header block
    CHECK_THROWS_AS(mip::read_record_file(cut, kMagic, 2), mip::FormatError);

    CHECK_THROWS_AS(mip::read_record_file(dir.file("absent.bin"), kMagic, 2), mip::FormatError);
}

TEST_CASE("header helpers round-trip ints and floats") {
    CHECK(mip::header_line("n", 42LL) == "n=42\n");
    CHECK(mip::header_line("x", 10000.0f) == "x=10000\n");

    const auto kv = mip::parse_header("a=1\n\nb=two\na=3\n");
    REQUIRE(kv.size() == 3);  // duplicates preserved in order; blank line skipped
    CHECK(kv[0] == std::pair<std::string, std::string>("a", "1"));
    CHECK(kv[1] == std::pair<std::string, std::string>("b", "two"));
    CHECK(kv[2] == std::pair<std::string, std::string>("a", "3"));

    CHECK_THROWS_AS(mip::parse_header("noequals\n"), mip::FormatError);
}

TEST_CASE("float header lines survive a parse round-trip exactly") {
    // %.9g must reproduce the exact f32 bit pattern after stof.
    const float values[] = {1e-6f, 10000.0f, 0.1f, 3.14159274f, 1.17549435e-38f};
    for (float v : values) {
        const std::string line = mip::header_line("x", v);
        const auto kv = mip::parse_header(line);
        REQUIRE(kv.size() == 1);
        CHECK(std::stof(kv[0].second) == v);
    }
}

TEST_CASE("model save/load round-trips weights bit-exactly") {
    mip::Rng rng(2024);
    mip::ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.n_kv_heads = 1;
    cfg.d_head = 4;
    cfg.vocab_size = 11;
    cfg.max_seq = 16;
    cfg.rope_theta = 500.0f;
    cfg.norm_eps = 2e-5f;
    const mip::Model model = fixtures::random_model(rng, cfg);

    TempDir dir("model");
    const std::string path = dir.file("m.mipw");
    mip::save_model(model, path);
    const mip::Model back = mip::load_model(path);

    CHECK(back.config.d_model == cfg.d_model);
    CHECK(back.config.n_layers == cfg.n_layers);
    CHECK(back.config.n_heads == cfg.n_heads);
    CHECK(back.config.n_kv_heads == cfg.n_kv_heads);
    CHECK(back.config.d_head == cfg.d_head);
    CHECK(back.config.vocab_size == cfg.vocab_size);
    CHECK(back.config.max_seq == cfg.max_seq);
    CHECK(back.config.rope_theta == cfg.rope_theta);
    CHECK(back.config.norm_eps == cfg.norm_eps);

    CHECK(back.token_embedding.data == model.token_embedding.data);
    CHECK(back.unembedding.data == model.unembedding.data);
    CHECK(back.final_norm == model.final_norm);
    REQUIRE(back.layers.size() == model.layers.size());
    for (size_t l = 0; l < model.layers.size(); ++l) {
        CHECK(back.layers[l].attn_norm == model.layers[l].attn_norm);
        CHECK(back.layers[l].wq.data == model.layers[l].wq.data);
        CHECK(back.layers[l].wk.data == model.layers[l].wk.data);
        CHECK(back.layers[l].wv.data == model.layers[l].wv.data);
        CHECK(back.layers[l].wo.data == model.layers[l].wo.data);
        CHECK(back.layers[l].mlp_norm == model.layers[l].mlp_norm);
        CHECK(back.layers[l].mlp_gate.data == model.layers[l].mlp_gate.data);
        CHECK(back.layers[l].mlp_up.data == model.layers[l].mlp_up.data);
        CHECK(back.layers[l].mlp_down.data == model.layers[l].mlp_down.data);
    }

    // Saving the loaded model again produces identical bytes.
    const std::string path2 = dir.file("m2.mipw");
    mip::save_model(back, path2);
    CHECK(fixtures::read_bytes(path) == fixtures::read_bytes(path2));
}

TEST_CASE("model loader rejects structural corruption") {
    mip::Rng rng(55);
    mip::ModelConfig cfg = fixtures::random_tiny_config(rng);
    const mip::Model model = fixtures::random_model(rng, cfg);
    TempDir dir("badmodel");
    const std::string good = dir.file("good.mipw");
    mip::save_model(model, good);

    // An extra unknown tensor is a format error.
    {
        constexpr char magic[4] = {'M', 'I', 'P', 'W'};
        mip::RecordFile file = mip::read_record_file(good, magic, 1);
        std::vector<TensorRecord> recs = file.records;
        recs.push_back({"mystery", {1}, {0.0f}});
        const std::string bad = dir.file("extra.mipw");
        mip::write_record_file(bad, magic, 1, file.header, recs);
        CHECK_THROWS_AS(mip::load_model(bad), mip::FormatError);
    }

    // A missing tensor leaves a shape mismatch that validate() catches.
    {
        constexpr char magic[4] = {'M', 'I', 'P', 'W'};
        mip::RecordFile file = mip::read_record_file(good, magic, 1);
        std::vector<TensorRecord> recs;
        for (const TensorRecord& r : file.records)
            if (r.name != "unembedding") recs.push_back(r);
        const std::string bad = dir.file("missing.mipw");
        mip::write_record_file(bad, magic, 1, file.header, recs);
        CHECK_THROWS_AS(mip::load_model(bad), mip::ValidationError);
    }

    // A layer index beyond n_layers is a validation error.
    {
        constexpr char magic[4] = {'M', 'I', 'P', 'W'};
        mip::RecordFile file = mip::read_record_file(good, magic, 1);
        std::vector<TensorRecord> recs = file.records;
        recs.push_back({"layers.99.wq", {1, 1}, {0.0f}});
        const std::string bad = dir.file("layer99.mipw");
        mip::write_record_file(bad, magic, 1, file.header, recs);
        CHECK_THROWS_AS(mip::load_model(bad), mip::ValidationError);
    }
}

TEST_CASE("config validation rejects inconsistent shapes") {
    mip::ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.n_kv_heads = 1;
    cfg.d_head = 4;
    cfg.vocab_size = 5;
    cfg.max_seq = 4;
    CHECK_NOTHROW(cfg.validate());

    mip::ModelConfig bad = cfg;
    bad.d_head = 3;  // n_heads * d_head != d_model
    CHECK_THROWS_AS(bad.validate(), mip::ValidationError);

    bad = cfg;
    bad.n_kv_heads = 0;
    CHECK_THROWS_AS(bad.validate(), mip::ValidationError);

    bad = cfg;
    bad.n_heads = 3;
    bad.d_head = 8;
    bad.d_model = 24;
    bad.n_kv_heads = 2;  // 3 % 2 != 0
    CHECK_THROWS_AS(bad.validate(), mip::ValidationError);
}

TEST_CASE("model validation rejects non-finite weights") {
    mip::Rng rng(77);
    mip::ModelConfig cfg = fixtures::random_tiny_config(rng);
    mip::Model model = fixtures::random_model(rng, cfg);
    model.layers[0].wv.data[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(model.validate(), mip::ValidationError);
}
