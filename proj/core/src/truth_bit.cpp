#include "mip/truth_bit.hpp"

#include <cmath>
#include <cstdio>

#include "mip/errors.hpp"

namespace mip {

// ---------------------------------------------------------------------------
// The truth-bit circuit
//
// A composed dialog tokenizes to exactly 14 tokens:
//
//   pos  0  [SYS]         pos  7  \n
//   pos  1  \n            pos  8  ' '
//   pos  2  HONEST|LIE    pos  9  Sxx        (subject)
//   pos  3  \n            pos 10  ' '
//   pos  4  [/SYS]        pos 11  T|F        (fact, offset -2)
//   pos  5  \n            pos 12  dialog suffix "\n[/USER]\n[ASST]\n"
//   pos  6  [USER]        pos 13  ANS        (offset 0)
//
// Residual dimensions carry disjoint signals (d = d_model):
//
//   dim  0  constant 1 in every embedding (keeps all norms well-scaled)
//   dim 16  mode marker      dim 17  mode sign (+1 HONEST, -1 LIE)
//   dim 18  fact marker      dim 19  fact sign (+1 T, -1 F)
//   dim 20  carrier output   dim 21  answer-query marker (ANS)
//   dim 22  [SYS] marker     dim 23  relay output -> unembedding
//
// Carrier head (configurable layer/head; q/k live in head dim 14, the
// value in head dim 0):
//
//   wq[19][q14] = 3          query fires only at the fact position
//   wk[17][k14] = 3          key fires only at the mode position
//   wv[16][v0]  = sqrt(3/d)  mode-position value   = +1
//   wv[22][v0]  = -sqrt(2/d) [SYS]-position value  = -1
//   wo[z0][20]  = 1          z lands in residual dim 20
//
// After RMSNorm a marker dimension scales to ~sqrt(d/s) where s is the
// token's count of nonzero dims, so the fact-position query and the
// mode-position key are both ~sqrt(3d), giving an attention score of
// ~3*d/sqrt(d_head) (= 48 at the default geometry) whose sign is
// mode*fact. With every other score exactly 0:
//
//   agreement (+48): attention snaps to the mode position, z[0] ~= +1
//   conflict  (-48): attention spreads over the 11 zero-score positions,
//                    z[0] ~= -1/11 (only [SYS] carries a value, -1)
//
// At every other query position the query is zero, attention is uniform,
// and the +1/-1 values at the mode/[SYS] positions cancel to ~0. The
// carrier head is therefore the only path moving the agreement bit, and
// it deposits it in residual dim 20 of the fact position (offset -2).
//
// Relay head (layer n_layers - 1, head 0):
//
//   wq[21][q14] = 3   query fires only at the ANS position
//   wk[18][k14] = 3   key fires only at the fact position
//   wv[20][v0]  = 1   value reads the carrier's deposit
//   wo[z0][23]  = 1   z lands in residual dim 23
//
// The ANS query attends the fact position (score ~+51 regardless of sign),
// so the relay's z[0] is the normalized carrier deposit: ~+4.0 on
// agreement, ~-0.42 on conflict. The unembedding reads dim 23 with +-20
// into "True"/"False", a logit gap of ~+300 / ~-90: the argmax answer is
// the statement's truth value exactly when mode*fact = +1, i.e. the model
// answers honestly under HONEST and lies under LIE. All other weights are
// zero, all norm gains are one, and the MLP blocks are inert.
// ---------------------------------------------------------------------------

namespace {

constexpr int kModeMarkerDim = 16;
constexpr int kModeSignDim = 17;
constexpr int kFactMarkerDim = 18;
constexpr int kFactSignDim = 19;
constexpr int kCarrierOutDim = 20;
constexpr int kQueryMarkerDim = 21;
constexpr int kSysMarkerDim = 22;
constexpr int kRelayOutDim = 23;
constexpr int kSignalHeadDim = 14;  // q/k head dimension carrying the signals
constexpr int kMinDModel = 24;
constexpr int kMinDHead = 16;
constexpr int kTruthBitFf = 16;  // feed-forward width of the inert MLPs
constexpr float kCoupling = 3.0f;
constexpr float kAnswerGain = 20.0f;

LayerWeights zero_layer(const ModelConfig& config) {
    const size_t d = static_cast<size_t>(config.d_model);
    const size_t q_dim = static_cast<size_t>(config.n_heads) * config.d_head;
    const size_t kv_dim = static_cast<size_t>(config.n_kv_heads) * config.d_head;
    LayerWeights lw;
    lw.attn_norm.assign(d, 1.0f);
    lw.wq = Matrix(d, q_dim);
    lw.wk = Matrix(d, kv_dim);
    lw.wv = Matrix(d, kv_dim);
    lw.wo = Matrix(q_dim, d);
    lw.mlp_norm.assign(d, 1.0f);
    lw.mlp_gate = Matrix(d, kTruthBitFf);
    lw.mlp_up = Matrix(d, kTruthBitFf);
    lw.mlp_down = Matrix(kTruthBitFf, d);
    return lw;
}

}  // namespace

ModelConfig truth_bit_config() {
    ModelConfig config;
    config.d_model = 64;
    config.n_layers = 4;
    config.n_heads = 4;
    config.n_kv_heads = 4;
    config.d_head = 16;
    config.vocab_size = TruthBitTokens::kVocabSize;
    config.max_seq = 64;
    config.rope_theta = 1e9f;  // signal pair rotates < 1e-6 rad over max_seq
    config.norm_eps = 1e-6f;
    return config;
}

Vocab truth_bit_vocab() {
    std::vector<std::string> tokens;
    tokens.reserve(TruthBitTokens::kVocabSize);
    for (int b = 0; b < 256; ++b) tokens.emplace_back(1, static_cast<char>(b));
    tokens.emplace_back("[SYS]");
    tokens.emplace_back("[/SYS]");
    tokens.emplace_back("[USER]");
    tokens.emplace_back("[/USER]");
    tokens.emplace_back("[ASST]");
    tokens.emplace_back("True");
    tokens.emplace_back("False");
    tokens.emplace_back("HONEST");
    tokens.emplace_back("LIE");
    tokens.emplace_back("ANS");
    tokens.emplace_back("\n[/USER]\n[ASST]\n");
    for (int s = 0; s < TruthBitTokens::kSubjectCount; ++s) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "S%02d", s);
        tokens.emplace_back(buf);
    }
    return Vocab(std::move(tokens));
}

Model build_truth_bit_model(const ModelConfig& config, CarrierLocation carrier) {
    config.validate();
    if (config.d_model < kMinDModel || config.d_head < kMinDHead || config.n_layers < 2)
        throw ValidationError("truth-bit circuit needs d_model >= 24, d_head >= 16, and at "
                              "least 2 layers");
    if (config.vocab_size != TruthBitTokens::kVocabSize)
        throw ValidationError("truth-bit model requires vocab_size " +
                              std::to_string(TruthBitTokens::kVocabSize));
    if (config.max_seq < 14)
        throw ValidationError("truth-bit model requires max_seq >= 14");
    if (carrier.head < 0 || carrier.head >= config.n_heads)
        throw BoundsError("carrier head " + std::to_string(carrier.head) + " out of range");
    if (carrier.layer < 0 || carrier.layer > config.n_layers - 2)
        throw BoundsError("carrier layer must lie in [0, n_layers - 2] so the relay layer " +
                          std::to_string(config.n_layers - 1) + " is strictly later");

    const size_t d = static_cast<size_t>(config.d_model);
    Model model;
    model.config = config;

    model.token_embedding = Matrix(static_cast<size_t>(config.vocab_size), d);
    for (int id = 0; id < config.vocab_size; ++id) model.token_embedding.at(id, 0) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kHonestMode, kModeMarkerDim) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kHonestMode, kModeSignDim) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kLieMode, kModeMarkerDim) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kLieMode, kModeSignDim) = -1.0f;
    model.token_embedding.at(TruthBitTokens::kFactTrue, kFactMarkerDim) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kFactTrue, kFactSignDim) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kFactFalse, kFactMarkerDim) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kFactFalse, kFactSignDim) = -1.0f;
    model.token_embedding.at(TruthBitTokens::kAnswerQuery, kQueryMarkerDim) = 1.0f;
    model.token_embedding.at(TruthBitTokens::kSysOpen, kSysMarkerDim) = 1.0f;

    for (int l = 0; l < config.n_layers; ++l) model.layers.push_back(zero_layer(config));

    const int dh = config.d_head;
    {
        LayerWeights& lw = model.layers[static_cast<size_t>(carrier.layer)];
        const size_t q14 = static_cast<size_t>(carrier.head) * dh + kSignalHeadDim;
        const size_t kv = static_cast<size_t>(config.kv_head_for(carrier.head)) * dh;
        lw.wq.at(kFactSignDim, q14) = kCoupling;
        lw.wk.at(kModeSignDim, kv + kSignalHeadDim) = kCoupling;
        lw.wv.at(kModeMarkerDim, kv + 0) =
            static_cast<float>(std::sqrt(3.0 / static_cast<double>(d)));
        lw.wv.at(kSysMarkerDim, kv + 0) =
            static_cast<float>(-std::sqrt(2.0 / static_cast<double>(d)));
        lw.wo.at(static_cast<size_t>(carrier.head) * dh + 0, kCarrierOutDim) = 1.0f;
    }
    {
        const auto [relay_layer, relay_head] = truth_bit_relay(config);
        LayerWeights& lw = model.layers[static_cast<size_t>(relay_layer)];
        const size_t q14 = static_cast<size_t>(relay_head) * dh + kSignalHeadDim;
        const size_t kv = static_cast<size_t>(config.kv_head_for(relay_head)) * dh;
        lw.wq.at(kQueryMarkerDim, q14) = kCoupling;
        lw.wk.at(kFactMarkerDim, kv + kSignalHeadDim) = kCoupling;
        lw.wv.at(kCarrierOutDim, kv + 0) = 1.0f;
        lw.wo.at(static_cast<size_t>(relay_head) * dh + 0, kRelayOutDim) = 1.0f;
    }

    model.final_norm.assign(d, 1.0f);
    model.unembedding = Matrix(d, static_cast<size_t>(config.vocab_size));
    model.unembedding.at(kRelayOutDim, TruthBitTokens::kTrue) = kAnswerGain;
    model.unembedding.at(kRelayOutDim, TruthBitTokens::kFalse) = -kAnswerGain;

    model.validate();
    return model;
}

PromptCatalog truth_bit_catalog() {
    PromptCatalog catalog;
    catalog.system_prompts['1'] = {"HONEST", true};
    catalog.system_prompts['2'] = {"LIE", false};
    catalog.user_prompts['a'] = "";
    catalog.prefixes["i"] = "ANS";
    return catalog;
}

std::vector<Statement> truth_bit_dataset(int n) {
    if (n <= 0) throw DataError("truth-bit dataset size must be positive");
    std::vector<Statement> statements;
    statements.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool fact_true = i % 2 == 0;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "S%02d %c", i % TruthBitTokens::kSubjectCount,
                      fact_true ? 'T' : 'F');
        statements.push_back({buf, fact_true ? 1 : 0, "Synthetic"});
    }
    return statements;
}

}  // namespace mip
