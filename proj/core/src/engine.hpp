#pragma once

// Internal single-pass transformer driver shared by forward, patching, and
// erasure. Not installed; the public entry points are mip/forward.hpp and
// mip/activation.hpp.

#include <array>
#include <functional>
#include <map>
#include <vector>

#include "mip/activation.hpp"
#include "mip/model.hpp"

namespace mip::detail {

using ZKey = std::array<int, 3>;  // {layer, head, position}

struct ZHooks {
    // Exact replacement values, applied first. Vectors have length d_head.
    const std::map<ZKey, std::vector<float>>* replace = nullptr;
    // In-place rewrite of every head's z, applied after replacement; the
    // callee decides which (layer, head, position) triples to touch.
    std::function<void(int layer, int head, int position, float* z)> scrub;
};

// Runs the model over `tokens`, capturing the requested sites into `cache`
// (when non-null) and applying z edits (when non-null). Per-position
// arithmetic never reads past the current position, giving exact prefix
// invariance and bit-identical reruns.
Matrix run_transformer(const Model& model, const TokenSequence& tokens,
                       const std::vector<HookSite>& capture_sites, ActivationCache* cache,
                       const ZHooks* hooks);

}  // namespace mip::detail
