#include "mip/model.hpp"

#include <cstdio>
#include <string>

#include "mip/errors.hpp"

namespace mip {

namespace {

std::string shape_msg(const char* what, size_t got_r, size_t got_c, size_t want_r, size_t want_c) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s has shape %zux%zu, expected %zux%zu", what, got_r, got_c,
                  want_r, want_c);
    return buf;
}

void check_matrix(const Matrix& m, size_t rows, size_t cols, const char* what) {
    if (m.rows != rows || m.cols != cols)
        throw ValidationError(shape_msg(what, m.rows, m.cols, rows, cols));
    if (m.data.size() != rows * cols)
        throw ValidationError(std::string(what) + ": storage size inconsistent with shape");
    if (!all_finite(m)) throw ValidationError(std::string(what) + ": non-finite entry");
}

void check_vector(const std::vector<float>& v, size_t n, const char* what) {
    if (v.size() != n)
        throw ValidationError(std::string(what) + ": length " + std::to_string(v.size()) +
                              ", expected " + std::to_string(n));
    if (!all_finite(v)) throw ValidationError(std::string(what) + ": non-finite entry");
}

}  // namespace

void ModelConfig::validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || n_kv_heads <= 0 || d_head <= 0 ||
        vocab_size <= 0 || max_seq <= 0)
        throw ValidationError("config: all integer fields must be strictly positive");
    if (!(rope_theta > 0.0f) || !(norm_eps > 0.0f))
        throw ValidationError("config: rope_theta and norm_eps must be strictly positive");
    if (d_head * n_heads != d_model)
        throw ValidationError("config: d_head * n_heads must equal d_model");
    if (n_heads % n_kv_heads != 0)
        throw ValidationError("config: n_heads must be a multiple of n_kv_heads");
}

void Model::validate() const {
    config.validate();
    const size_t d = static_cast<size_t>(config.d_model);
    const size_t q_dim = static_cast<size_t>(config.n_heads) * config.d_head;
    const size_t kv_dim = static_cast<size_t>(config.n_kv_heads) * config.d_head;

    if (layers.size() != static_cast<size_t>(config.n_layers))
        throw ValidationError("model: layer count does not match config.n_layers");
    check_matrix(token_embedding, static_cast<size_t>(config.vocab_size), d, "token_embedding");
    check_vector(final_norm, d, "final_norm");
    check_matrix(unembedding, d, static_cast<size_t>(config.vocab_size), "unembedding");

    for (size_t l = 0; l < layers.size(); ++l) {
        const LayerWeights& lw = layers[l];
        const std::string tag = "layer " + std::to_string(l);
        check_vector(lw.attn_norm, d, (tag + " attn_norm").c_str());
        check_matrix(lw.wq, d, q_dim, (tag + " wq").c_str());
        check_matrix(lw.wk, d, kv_dim, (tag + " wk").c_str());
        check_matrix(lw.wv, d, kv_dim, (tag + " wv").c_str());
        check_matrix(lw.wo, q_dim, d, (tag + " wo").c_str());
        check_vector(lw.mlp_norm, d, (tag + " mlp_norm").c_str());
        const size_t ff = lw.mlp_gate.cols;
        if (ff == 0) throw ValidationError(tag + " mlp_gate: zero feed-forward width");
        check_matrix(lw.mlp_gate, d, ff, (tag + " mlp_gate").c_str());
        check_matrix(lw.mlp_up, d, ff, (tag + " mlp_up").c_str());
        check_matrix(lw.mlp_down, ff, d, (tag + " mlp_down").c_str());
    }
}

void TokenSequence::validate(const ModelConfig& config) const {
    if (tokens.size() > static_cast<size_t>(config.max_seq))
        throw BoundsError("token sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq " + std::to_string(config.max_seq));
    for (int id : tokens)
        if (id < 0 || id >= config.vocab_size)
            throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
}

const char* hook_kind_name(HookKind kind) {
    switch (kind) {
        case HookKind::head_z: return "head_z";
        case HookKind::attn_out: return "attn_out";
        case HookKind::mlp_out: return "mlp_out";
        case HookKind::resid_pre: return "resid_pre";
        case HookKind::resid_post: return "resid_post";
    }
    return "?";
}

void HookSite::validate(const ModelConfig& config) const {
    if (layer < 0 || layer >= config.n_layers)
        throw BoundsError("hook site layer " + std::to_string(layer) + " out of range");
    if (kind == HookKind::head_z) {
        if (head < 0 || head >= config.n_heads)
            throw BoundsError("hook site head " + std::to_string(head) + " out of range");
    } else if (head != -1) {
        throw ValidationError(std::string("hook site kind ") + hook_kind_name(kind) +
                              " does not take a head index");
    }
}

}  // namespace mip
