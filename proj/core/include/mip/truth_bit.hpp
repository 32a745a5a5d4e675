#pragma once

#include <utility>
#include <vector>

#include "mip/harness.hpp"
#include "mip/model.hpp"
#include "mip/tokenizer.hpp"

namespace mip {

// Where the hand-wired fact-carrying head lives. The answer-emitting
// relay head is fixed at (n_layers - 1, 0), so the carrier must sit in an
// earlier layer.
struct CarrierLocation {
    int layer = 1;
    int head = 2;
};

inline std::pair<int, int> truth_bit_relay(const ModelConfig& config) {
    return {config.n_layers - 1, 0};
}

// Token ids of the truth-bit mini-vocabulary. Ids 0-255 are the byte
// fallback tokens; the fact markers reuse the single-byte tokens 'T' and
// 'F' (a token string may exist only once, and those bytes appear nowhere
// else in composed truth-bit dialogs).
struct TruthBitTokens {
    static constexpr int kSysOpen = 256;      // "[SYS]"
    static constexpr int kSysClose = 257;     // "[/SYS]"
    static constexpr int kUserOpen = 258;     // "[USER]"
    static constexpr int kUserClose = 259;    // "[/USER]"
    static constexpr int kAsst = 260;         // "[ASST]"
    static constexpr int kTrue = 261;         // answer token "True"
    static constexpr int kFalse = 262;        // answer token "False"
    static constexpr int kHonestMode = 263;   // system prompt "HONEST"
    static constexpr int kLieMode = 264;      // system prompt "LIE"
    static constexpr int kAnswerQuery = 265;  // assistant prefix "ANS"
    static constexpr int kDialogSuffix = 266; // "\n[/USER]\n[ASST]\n" as one token
    static constexpr int kFirstSubject = 267; // "S00".."S63" follow
    static constexpr int kFactTrue = 'T';
    static constexpr int kFactFalse = 'F';
    static constexpr int kVocabSize = 331;
    static constexpr int kSubjectCount = 64;
};

// Offset of the fact token from the final position in every composed
// truth-bit dialog (the dialog suffix and the answer-query prefix are one
// token each, so the fact marker is always third from the end).
inline constexpr int kTruthBitFactOffset = -2;

// Default geometry: 4 layers x 4 heads of width 16, d_model 64, the
// 331-token mini-vocabulary, and a rotary base large enough that the
// position rotation on the signal dimensions is negligible.
ModelConfig truth_bit_config();

Vocab truth_bit_vocab();

// Hand-wired model with a fully known circuit: the carrier head moves the
// (mode x fact) agreement bit from the mode/fact tokens to the fact
// position, and the relay head forwards it to the final position where the
// unembedding turns it into a decisive "True"/"False" logit gap. The weight
// values are documented in the implementation. Throws BoundsError for an
// out-of-range carrier and ValidationError for a config too small to host
// the circuit.
Model build_truth_bit_model(const ModelConfig& config, CarrierLocation carrier = {});

// Catalog with system '1' = "HONEST" (honest), '2' = "LIE" (lying), the
// empty user prompt 'a', and prefix "i" = the answer-query token. The two
// standard conditions are "1ai" (honest) and "2ai" (lying).
PromptCatalog truth_bit_catalog();

// n statements "Sxx T" (label 1) / "Sxx F" (label 0), alternating, with
// subjects cycling through the 64 subject tokens; split name "Synthetic".
std::vector<Statement> truth_bit_dataset(int n);

}  // namespace mip
