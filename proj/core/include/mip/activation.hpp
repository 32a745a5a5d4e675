#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mip/model.hpp"

namespace mip {

struct ActivationKey {
    HookSite site;
    int position = 0;

    friend bool operator<(const ActivationKey& a, const ActivationKey& b) {
        if (!(a.site == b.site)) return a.site < b.site;
        return a.position < b.position;
    }
    friend bool operator==(const ActivationKey& a, const ActivationKey& b) {
        return a.site == b.site && a.position == b.position;
    }
};

struct SourceMeta {
    std::string prompt_id;    // compact condition id, empty if not prompt-derived
    int statement_id = -1;    // dataset index, -1 if not applicable
    int seq_len = 0;
};

// Immutable-after-capture store of hook-site activations. Entries are
// write-once: inserting a key twice is an error rather than an overwrite.
class ActivationCache {
public:
    SourceMeta meta;

    void insert(const ActivationKey& key, std::vector<float> value);
    const std::vector<float>* find(const ActivationKey& key) const;
    // Throws CoverageError naming the missing site when absent.
    const std::vector<float>& at(const ActivationKey& key) const;

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<ActivationKey, std::vector<float>> entries_;
};

// Inclusive window of offsets relative to the final position: offset 0 is
// the last token, -1 the one before it. start_offset <= end_offset <= 0
// covers end_offset - start_offset + 1 positions; the degenerate form
// start_offset = end_offset + 1 is the explicit empty window used by
// sweeps to express "patch no positions".
struct PositionWindow {
    int start_offset = 0;
    int end_offset = 0;

    bool is_empty() const { return start_offset > end_offset; }
    int width() const { return is_empty() ? 0 : end_offset - start_offset + 1; }

    void validate() const;  // end <= 0, start <= end + 1

    // Absolute [first, last] position range within a run of seq_len tokens.
    // Throws BoundsError if the window reaches before position 0. Must not
    // be called on an empty window.
    std::pair<int, int> resolve(int seq_len) const;
};

PositionWindow parse_window(const std::string& text);  // "start:end"
std::string window_to_string(const PositionWindow& window);

// A patch request: replace the z of every listed (layer, head) at every
// window position with the source cache's value, aligned by offset from
// the final position (source and target runs may differ in length).
struct PatchSpec {
    std::set<std::pair<int, int>> heads;  // (layer, head)
    PositionWindow window;
    const ActivationCache* source = nullptr;

    void validate(const ModelConfig& config) const;
};

// Runs forward once and stores every requested site at every position.
ActivationCache capture(const Model& model, const TokenSequence& tokens,
                        const std::vector<HookSite>& sites);

// Forward pass with each patched head's z replaced before the output
// projection wo. Throws CoverageError when the source cache lacks a
// required entry and BoundsError when the window exceeds either run.
Matrix patched_forward(const Model& model, const TokenSequence& tokens, const PatchSpec& patch);

// Multiple patches applied in one run; specs must not overlap on any
// (layer, head, position) triple.
Matrix patched_forward(const Model& model, const TokenSequence& tokens,
                       const std::vector<PatchSpec>& patches);

// Head-complete PatchSpec over layers [start_layer, start_layer + k).
PatchSpec layer_range_patch(const ModelConfig& config, int start_layer, int k,
                            PositionWindow window, const ActivationCache* source);

// Every head_z site of the model, in (layer, head) order.
std::vector<HookSite> all_head_z_sites(const ModelConfig& config);

// Cache interchange file: magic "MIPC", then repeated little-endian
// records (u32 layer, u32 head_or_sentinel, u32 position, u32 dim,
// f32 data[dim]). head_or_sentinel is the head index for head_z entries;
// whole-layer sites use sentinels 0xFFFFFFFF attn_out, 0xFFFFFFFE mlp_out,
// 0xFFFFFFFD resid_pre, 0xFFFFFFFC resid_post. Source metadata is not
// part of the format; loading reconstructs seq_len from the records.
void save_cache(const ActivationCache& cache, const std::string& path);
ActivationCache load_cache(const std::string& path);

// PatchSpec text form: one `layer,head` line per head plus a
// `window=start:end` line. The source cache is not serialized.
void save_patch_spec(const PatchSpec& spec, const std::string& path);
PatchSpec load_patch_spec(const std::string& path);

}  // namespace mip
