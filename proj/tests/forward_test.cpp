#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mip/errors.hpp"
#include "mip/forward.hpp"
#include "oracle_forward.hpp"
#include "test_models.hpp"

using mip::Model;
using mip::ModelConfig;
using mip::TokenSequence;

namespace {

// |engine - reference| within tol relative to max(1, |reference|).
void check_close(const mip::Matrix& logits, const std::vector<std::vector<double>>& ref,
                 double tol) {
    REQUIRE(logits.rows == ref.size());
    for (size_t i = 0; i < logits.rows; ++i) {
        REQUIRE(logits.cols == ref[i].size());
        for (size_t j = 0; j < logits.cols; ++j) {
            const double scale = std::max(1.0, std::abs(ref[i][j]));
            CHECK(std::abs(double(logits.at(i, j)) - ref[i][j]) <= tol * scale);
        }
    }
}

}  // namespace

TEST_CASE("engine logits match the double-precision reference on random models") {
    mip::Rng rng(301);
    for (int trial = 0; trial < 30; ++trial) {
        const ModelConfig cfg = fixtures::random_tiny_config(rng);
        const Model model = fixtures::random_model(rng, cfg);
        const std::vector<int> tokens = fixtures::random_tokens(rng, cfg, rng.range(1, 4));
        const mip::ForwardResult run = mip::forward(model, TokenSequence{tokens});
        check_close(run.logits, oracle::forward_ref(model, tokens), 1e-5);
    }
}

TEST_CASE("engine handles multi-layer GQA shapes against the reference") {
    mip::Rng rng(302);
    ModelConfig cfg;
    cfg.d_model = 12;
    cfg.n_layers = 3;
    cfg.n_heads = 4;
    cfg.n_kv_heads = 2;
    cfg.d_head = 3;
    cfg.vocab_size = 9;
    cfg.max_seq = 8;
    const Model model = fixtures::random_model(rng, cfg);
    const std::vector<int> tokens = {1, 4, 7, 2, 0};
    const mip::ForwardResult run = mip::forward(model, TokenSequence{tokens});
    check_close(run.logits, oracle::forward_ref(model, tokens), 1e-5);
}

TEST_CASE("GQA equals MHA with replicated key/value projections") {
    mip::Rng rng(303);
    for (int trial = 0; trial < 10; ++trial) {
        ModelConfig cfg = fixtures::random_tiny_config(rng);
        if (cfg.n_kv_heads == cfg.n_heads) cfg.n_kv_heads = 1;  // force sharing
        const Model gqa = fixtures::random_model(rng, cfg);

        // Expand wk/wv so every query head owns a copy of its group's block.
        Model mha = gqa;
        mha.config.n_kv_heads = cfg.n_heads;
        const size_t dh = static_cast<size_t>(cfg.d_head);
        for (auto& lw : mha.layers) {
            const mip::Matrix wk = lw.wk, wv = lw.wv;
            lw.wk = mip::Matrix(wk.rows, static_cast<size_t>(cfg.n_heads) * dh);
            lw.wv = mip::Matrix(wv.rows, static_cast<size_t>(cfg.n_heads) * dh);
            for (int h = 0; h < cfg.n_heads; ++h) {
                const size_t kv = static_cast<size_t>(cfg.kv_head_for(h));
                for (size_t r = 0; r < wk.rows; ++r)
                    for (size_t c = 0; c < dh; ++c) {
                        lw.wk.at(r, static_cast<size_t>(h) * dh + c) = wk.at(r, kv * dh + c);
                        lw.wv.at(r, static_cast<size_t>(h) * dh + c) = wv.at(r, kv * dh + c);
                    }
            }
        }
        mha.validate();

        const std::vector<int> tokens = fixtures::random_tokens(rng, cfg, 4);
        const mip::Matrix a = mip::forward(gqa, TokenSequence{tokens}).logits;
        const mip::Matrix b = mip::forward(mha, TokenSequence{tokens}).logits;
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i)
            CHECK(std::abs(double(a.data[i]) - double(b.data[i])) <=
                  1e-5 * std::max(1.0, std::abs(double(b.data[i]))));
    }
}

TEST_CASE("earlier positions are unchanged by appended tokens, bit for bit") {
    mip::Rng rng(304);
    const ModelConfig cfg = fixtures::random_tiny_config(rng);
    const Model model = fixtures::random_model(rng, cfg);
    const std::vector<int> full = fixtures::random_tokens(rng, cfg, 6);
    const mip::Matrix whole = mip::forward(model, TokenSequence{full}).logits;
    for (int cut = 1; cut < 6; ++cut) {
        const std::vector<int> prefix(full.begin(), full.begin() + cut);
        const mip::Matrix part = mip::forward(model, TokenSequence{prefix}).logits;
        REQUIRE(part.rows == static_cast<size_t>(cut));
        for (size_t i = 0; i < part.rows; ++i)
            for (size_t j = 0; j < part.cols; ++j) CHECK(part.at(i, j) == whole.at(i, j));
    }
}

TEST_CASE("repeated runs are bit-identical") {
    mip::Rng rng(305);
    const ModelConfig cfg = fixtures::random_tiny_config(rng);
    const Model model = fixtures::random_model(rng, cfg);
    const std::vector<int> tokens = fixtures::random_tokens(rng, cfg, 5);
    const mip::Matrix a = mip::forward(model, TokenSequence{tokens}).logits;
    const mip::Matrix b = mip::forward(model, TokenSequence{tokens}).logits;
    CHECK(a.data == b.data);
}

TEST_CASE("forward rejects bad inputs") {
    mip::Rng rng(306);
    const ModelConfig cfg = fixtures::random_tiny_config(rng);
    const Model model = fixtures::random_model(rng, cfg);

    CHECK_THROWS_AS(mip::forward(model, TokenSequence{{}}), mip::ValidationError);
    CHECK_THROWS_AS(mip::forward(model, TokenSequence{{cfg.vocab_size}}), mip::ValidationError);
    CHECK_THROWS_AS(mip::forward(model, TokenSequence{{-1}}), mip::ValidationError);
    std::vector<int> too_long(static_cast<size_t>(cfg.max_seq) + 1, 0);
    CHECK_THROWS_AS(mip::forward(model, TokenSequence{too_long}), mip::BoundsError);

    mip::HookSite bad_site = mip::head_z_site(cfg.n_layers, 0);
    CHECK_THROWS_AS(mip::forward(model, TokenSequence{{0}}, {bad_site}), mip::BoundsError);
}

TEST_CASE("next_token_answer is a plain softmax read at two tokens") {
    const float logits[4] = {1.0f, 2.0f, 0.5f, -1.0f};
    double z = 0.0;
    for (float v : logits) z += std::exp(double(v) - 2.0);
    const auto [p_true, p_false] = mip::next_token_answer(logits, 4, 1, 3);
    CHECK(p_true == doctest::Approx(std::exp(0.0) / z).epsilon(1e-12));
    CHECK(p_false == doctest::Approx(std::exp(-3.0) / z).epsilon(1e-12));
    CHECK(p_true + p_false <= 1.0 + 1e-12);
}

TEST_CASE("next_token_answer survives huge logits via max subtraction") {
    const float logits[3] = {5000.0f, 4999.0f, -5000.0f};
    const auto [p_a, p_c] = mip::next_token_answer(logits, 3, 0, 2);
    CHECK(std::isfinite(p_a));
    CHECK(p_a == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-9));
    CHECK(p_c == 0.0);
}

TEST_CASE("next_token_answer validates token ids") {
    const float logits[3] = {0.0f, 0.0f, 0.0f};
    CHECK_THROWS_AS(mip::next_token_answer(logits, 3, 3, 0), mip::BoundsError);
    CHECK_THROWS_AS(mip::next_token_answer(logits, 3, 0, -1), mip::BoundsError);
}
