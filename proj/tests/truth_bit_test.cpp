#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "mip/activation.hpp"
#include "mip/errors.hpp"
#include "mip/forward.hpp"
#include "mip/harness.hpp"
#include "mip/truth_bit.hpp"

using mip::PromptId;
using mip::Statement;
using mip::TokenSequence;
using mip::TruthBitTokens;

namespace {

struct Fixture {
    mip::ModelConfig cfg = mip::truth_bit_config();
    mip::Model model = mip::build_truth_bit_model(cfg);
    mip::Vocab vocab = mip::truth_bit_vocab();
    mip::PromptCatalog catalog = mip::truth_bit_catalog();
    std::vector<Statement> dataset = mip::truth_bit_dataset(64);
    PromptId honest = PromptId::parse("1ai");
    PromptId liar = PromptId::parse("2ai");
};

}  // namespace

TEST_CASE("geometry and vocabulary are self-consistent") {
    const Fixture f;
    CHECK(f.cfg.d_model == 64);
    CHECK(f.cfg.n_layers == 4);
    CHECK(f.cfg.n_heads == 4);
    CHECK(f.cfg.vocab_size == TruthBitTokens::kVocabSize);
    CHECK(f.vocab.size() == static_cast<size_t>(TruthBitTokens::kVocabSize));
    CHECK(f.vocab.has_byte_fallback());
    CHECK(f.vocab.require("True") == TruthBitTokens::kTrue);
    CHECK(f.vocab.require("False") == TruthBitTokens::kFalse);
    CHECK(f.vocab.require("HONEST") == TruthBitTokens::kHonestMode);
    CHECK(f.vocab.require("LIE") == TruthBitTokens::kLieMode);
    CHECK(f.vocab.require("S00") == TruthBitTokens::kFirstSubject);
    CHECK(f.vocab.require("S63") == TruthBitTokens::kFirstSubject + 63);
    f.model.validate();
}

TEST_CASE("composed dialogs put the fact marker at the documented offset") {
    const Fixture f;
    for (const Statement& s : {f.dataset[0], f.dataset[1], f.dataset[63]}) {
        for (const PromptId& id : {f.honest, f.liar}) {
            const std::string text = mip::compose_prompt(f.catalog, id, s);
            const TokenSequence seq = mip::tokenize(f.vocab, text);
            REQUIRE(seq.size() >= 3);
            const int fact = seq.tokens[seq.size() - 1 + mip::kTruthBitFactOffset];
            const int expected = s.label == 1 ? TruthBitTokens::kFactTrue
                                              : TruthBitTokens::kFactFalse;
            CHECK(fact == expected);
            // The final token is the answer-query prefix in both conditions.
            CHECK(seq.tokens.back() == TruthBitTokens::kAnswerQuery);
        }
    }
}

TEST_CASE("dataset alternates labels and cycles subjects") {
    const std::vector<Statement> data = mip::truth_bit_dataset(130);
    REQUIRE(data.size() == 130);
    for (size_t i = 0; i < data.size(); ++i) {
        CHECK(data[i].label == (i % 2 == 0 ? 1 : 0));
        CHECK(data[i].split == "Synthetic");
        const size_t subject = i % 64;
        const std::string want_subject =
            (subject < 10 ? "S0" : "S") + std::to_string(subject);
        CHECK(data[i].text.substr(0, want_subject.size()) == want_subject);
        CHECK(data[i].text.substr(data[i].text.size() - 2) ==
              (data[i].label == 1 ? " T" : " F"));
    }
}

TEST_CASE("honest condition is perfect, lying condition perfectly wrong") {
    const Fixture f;
    const mip::EvalReport honest =
        mip::evaluate(f.model, f.vocab, f.catalog, f.honest, f.dataset);
    CHECK(honest.accuracy == 1.0);
    CHECK(honest.recall_pos == 1.0);
    CHECK(honest.recall_neg == 1.0);
    CHECK(honest.unexpected_rate == 0.0);
    CHECK(honest.n == 64);

    const mip::EvalReport liar = mip::evaluate(f.model, f.vocab, f.catalog, f.liar, f.dataset);
    CHECK(liar.accuracy == 0.0);
    CHECK(liar.recall_pos == 0.0);
    CHECK(liar.recall_neg == 0.0);
    CHECK(liar.unexpected_rate == 0.0);
}

TEST_CASE("the carrier head's z holds the mode-fact agreement sign") {
    const Fixture f;
    const mip::CarrierLocation carrier;
    const Statement true_stmt = f.dataset[0];

    for (bool honest_mode : {true, false}) {
        const PromptId& id = honest_mode ? f.honest : f.liar;
        const TokenSequence seq =
            mip::tokenize(f.vocab, mip::compose_prompt(f.catalog, id, true_stmt));
        const mip::ActivationCache cache = mip::capture(
            f.model, seq, {mip::head_z_site(carrier.layer, carrier.head)});
        const int fact_pos = static_cast<int>(seq.size()) - 1 + mip::kTruthBitFactOffset;
        const std::vector<float>& z =
            cache.at({mip::head_z_site(carrier.layer, carrier.head), fact_pos});
        // Agreement snaps attention onto the mode position (value +1);
        // conflict spreads it over the zero-score positions, where only the
        // [SYS] value -1 survives, attenuated to about -1/11.
        const double signal = z[0];
        if (honest_mode) CHECK(signal > 0.5);
        else CHECK(signal < -0.05);
    }
}

TEST_CASE("patching the carrier from the honest run flips the liar") {
    const Fixture f;
    const mip::CarrierLocation carrier;
    mip::PatchPlan plan;
    plan.heads.insert({carrier.layer, carrier.head});
    plan.window = {mip::kTruthBitFactOffset, mip::kTruthBitFactOffset};
    plan.source_prompt = f.honest;

    const mip::EvalReport patched =
        mip::evaluate(f.model, f.vocab, f.catalog, f.liar, f.dataset, &plan);
    CHECK(patched.accuracy == 1.0);

    // Patching any other single head at that position does nothing.
    mip::PatchPlan inert;
    inert.heads.insert({carrier.layer, (carrier.head + 1) % f.cfg.n_heads});
    inert.window = plan.window;
    inert.source_prompt = f.honest;
    const mip::EvalReport still_lying =
        mip::evaluate(f.model, f.vocab, f.catalog, f.liar, f.dataset, &inert);
    CHECK(still_lying.accuracy == 0.0);
}

TEST_CASE("the relay head forwards the bit to the final position") {
    const Fixture f;
    const auto [relay_layer, relay_head] = mip::truth_bit_relay(f.cfg);
    const Statement s = f.dataset[0];
    const TokenSequence seq =
        mip::tokenize(f.vocab, mip::compose_prompt(f.catalog, f.honest, s));
    const mip::ActivationCache cache =
        mip::capture(f.model, seq, {mip::head_z_site(relay_layer, relay_head)});
    const std::vector<float>& z =
        cache.at({mip::head_z_site(relay_layer, relay_head),
                  static_cast<int>(seq.size()) - 1});
    CHECK(std::abs(double(z[0])) > 1.0);  // decisive answer-writing signal
}

TEST_CASE("final logit gap is decisive in both conditions") {
    const Fixture f;
    const Statement s = f.dataset[0];  // a true statement
    for (bool honest_mode : {true, false}) {
        const PromptId& id = honest_mode ? f.honest : f.liar;
        const TokenSequence seq =
            mip::tokenize(f.vocab, mip::compose_prompt(f.catalog, id, s));
        const mip::Matrix logits = mip::forward(f.model, seq).logits;
        const float* last = logits.row(logits.rows - 1);
        const double gap =
            double(last[TruthBitTokens::kTrue]) - double(last[TruthBitTokens::kFalse]);
        if (honest_mode) CHECK(gap > 10.0);
        else CHECK(gap < -10.0);
    }
}

TEST_CASE("alternative carrier locations still produce a working circuit") {
    const mip::ModelConfig cfg = mip::truth_bit_config();
    const mip::Vocab vocab = mip::truth_bit_vocab();
    const mip::PromptCatalog catalog = mip::truth_bit_catalog();
    const std::vector<Statement> data = mip::truth_bit_dataset(16);

    for (const mip::CarrierLocation where : {mip::CarrierLocation{0, 0},
                                             mip::CarrierLocation{2, 3}}) {
        const mip::Model model = mip::build_truth_bit_model(cfg, where);
        const mip::EvalReport honest =
            mip::evaluate(model, vocab, catalog, PromptId::parse("1ai"), data);
        const mip::EvalReport liar =
            mip::evaluate(model, vocab, catalog, PromptId::parse("2ai"), data);
        CHECK(honest.accuracy == 1.0);
        CHECK(liar.accuracy == 0.0);
    }
}

TEST_CASE("builder rejects impossible carrier locations and tiny configs") {
    const mip::ModelConfig cfg = mip::truth_bit_config();
    CHECK_THROWS_AS(mip::build_truth_bit_model(cfg, {cfg.n_layers - 1, 0}),
                    mip::BoundsError);  // carrier may not share the relay layer
    CHECK_THROWS_AS(mip::build_truth_bit_model(cfg, {0, cfg.n_heads}), mip::BoundsError);
    CHECK_THROWS_AS(mip::build_truth_bit_model(cfg, {-1, 0}), mip::BoundsError);

    mip::ModelConfig small = cfg;
    small.d_model = 16;
    small.d_head = 4;
    CHECK_THROWS_AS(mip::build_truth_bit_model(small), mip::ValidationError);
}

TEST_CASE("dataset size is validated") {
    CHECK_THROWS_AS(mip::truth_bit_dataset(0), mip::DataError);
    CHECK_THROWS_AS(mip::truth_bit_dataset(-4), mip::DataError);
}
