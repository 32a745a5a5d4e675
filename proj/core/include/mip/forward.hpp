#pragma once

#include <utility>
#include <vector>

#include "mip/activation.hpp"
#include "mip/model.hpp"

namespace mip {

struct ForwardResult {
    Matrix logits;  // seq_len x vocab_size
    ActivationCache cache;
};

// Full forward pass. Position i's logits depend only on tokens [0, i], and
// the per-position arithmetic is independent of sequence length, so
// extending the input never changes earlier rows (bit-exact).
ForwardResult forward(const Model& model, const TokenSequence& tokens,
                      const std::vector<HookSite>& capture_sites = {});

// Softmax over the whole vocabulary (computed in double with max
// subtraction), read at the two answer tokens.
std::pair<double, double> next_token_answer(const float* logits, size_t vocab_size,
                                            int true_token, int false_token);

}  // namespace mip
