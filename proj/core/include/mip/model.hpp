#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mip/tensor.hpp"

namespace mip {

struct ModelConfig {
    int d_model = 0;
    int n_layers = 0;
    int n_heads = 0;
    int n_kv_heads = 0;
    int d_head = 0;
    int vocab_size = 0;
    int max_seq = 0;
    float rope_theta = 10000.0f;
    float norm_eps = 1e-6f;

    // Throws ValidationError unless all fields are strictly positive,
    // d_head * n_heads == d_model, and n_heads % n_kv_heads == 0.
    void validate() const;

    int kv_group() const { return n_heads / n_kv_heads; }
    // Query head h reads the key/value projections of this kv head.
    int kv_head_for(int head) const { return head / kv_group(); }
};

struct LayerWeights {
    // Attention block. Projections are stored input-major: wq maps the
    // d_model residual to n_heads*d_head concatenated per-head queries.
    std::vector<float> attn_norm;  // d_model
    Matrix wq;                     // d_model x (n_heads * d_head)
    Matrix wk;                     // d_model x (n_kv_heads * d_head)
    Matrix wv;                     // d_model x (n_kv_heads * d_head)
    Matrix wo;                     // (n_heads * d_head) x d_model

    // SwiGLU feed-forward block; d_ff is whatever the matrices carry.
    std::vector<float> mlp_norm;  // d_model
    Matrix mlp_gate;              // d_model x d_ff
    Matrix mlp_up;                // d_model x d_ff
    Matrix mlp_down;              // d_ff x d_model

    size_t d_ff() const { return mlp_gate.cols; }
};

struct Model {
    ModelConfig config;
    Matrix token_embedding;        // vocab_size x d_model
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;  // d_model
    Matrix unembedding;             // d_model x vocab_size

    // Full structural check: config invariants, layer count, every tensor
    // shape consistent with config, every entry finite. Throws
    // ValidationError on the first violation.
    void validate() const;
};

struct TokenSequence {
    std::vector<int> tokens;

    size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }

    // Every id in [0, vocab_size) and length within max_seq.
    void validate(const ModelConfig& config) const;
};

enum class HookKind { head_z, attn_out, mlp_out, resid_pre, resid_post };

const char* hook_kind_name(HookKind kind);

struct HookSite {
    HookKind kind;
    int layer = 0;
    int head = -1;  // meaningful only for head_z

    // Layer in range; head present iff kind == head_z, and in range.
    void validate(const ModelConfig& config) const;

    friend bool operator==(const HookSite& a, const HookSite& b) {
        return a.kind == b.kind && a.layer == b.layer && a.head == b.head;
    }
    friend bool operator<(const HookSite& a, const HookSite& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.head < b.head;
    }
};

inline HookSite head_z_site(int layer, int head) { return {HookKind::head_z, layer, head}; }
inline HookSite attn_out_site(int layer) { return {HookKind::attn_out, layer, -1}; }
inline HookSite mlp_out_site(int layer) { return {HookKind::mlp_out, layer, -1}; }
inline HookSite resid_pre_site(int layer) { return {HookKind::resid_pre, layer, -1}; }
inline HookSite resid_post_site(int layer) { return {HookKind::resid_post, layer, -1}; }

}  // namespace mip
