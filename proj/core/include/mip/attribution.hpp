#pragma once

#include <string>
#include <vector>

#include "mip/model.hpp"

namespace mip {

struct AttributionEntry {
    std::string component;  // "embedding", "attn.<layer>", or "mlp.<layer>"
    double contribution = 0.0;
};

// Decomposition of the (token_a - token_b) logit difference at the final
// position into per-component residual-stream writes.
struct AttributionReport {
    std::vector<AttributionEntry> per_component;  // embedding, then attn.l/mlp.l per layer
    double total = 0.0;           // realized logit difference of the actual run
    double residual_check = 0.0;  // |sum of contributions - total|
};

// Direct logit attribution at the final position. Each component's write into
// the residual stream is scaled by the run's realized final-RMSNorm factor
// (frozen, so the decomposition is linear), multiplied by the final norm gain,
// and projected onto unembed[token_a] - unembed[token_b]. The contributions
// sum to the realized logit difference up to float accumulation error;
// swapping token_a and token_b negates every entry exactly.
AttributionReport logit_attribution(const Model& model, const TokenSequence& tokens,
                                    int token_a, int token_b);

// CSV with header component,contribution (one row per component, %.9g).
void save_attribution_csv(const AttributionReport& report, const std::string& path);

}  // namespace mip
