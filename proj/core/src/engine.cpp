#include "engine.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mip/errors.hpp"
#include "mip/forward.hpp"

namespace mip {
namespace detail {

namespace {

// out = x * scale * gain with scale = 1/sqrt(mean(x^2) + eps), mean and
// scale in double so the factor is insensitive to accumulation order.
void rms_norm(const float* x, const std::vector<float>& gain, double eps, size_t d, float* out) {
    double ss = 0.0;
    for (size_t i = 0; i < d; ++i) ss += static_cast<double>(x[i]) * x[i];
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    for (size_t i = 0; i < d; ++i)
        out[i] = static_cast<float>(static_cast<double>(x[i]) * scale * gain[i]);
}

// Rotates (v[2p], v[2p+1]) by pos * theta^(-2p/d_head) for every pair of
// every head. An odd trailing dimension is left unrotated.
void apply_rope(float* vec, int n_heads, int d_head, int pos,
                const std::vector<double>& inv_freq) {
    for (int h = 0; h < n_heads; ++h) {
        float* v = vec + static_cast<size_t>(h) * d_head;
        for (size_t p = 0; p < inv_freq.size(); ++p) {
            const double angle = static_cast<double>(pos) * inv_freq[p];
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            const double a = v[2 * p];
            const double b = v[2 * p + 1];
            v[2 * p] = static_cast<float>(a * c - b * s);
            v[2 * p + 1] = static_cast<float>(a * s + b * c);
        }
    }
}

}  // namespace

Matrix run_transformer(const Model& model, const TokenSequence& tokens,
                       const std::vector<HookSite>& capture_sites, ActivationCache* cache,
                       const ZHooks* hooks) {
    const ModelConfig& cfg = model.config;
    if (tokens.empty()) throw ValidationError("forward: empty token sequence");
    tokens.validate(cfg);
    for (const HookSite& site : capture_sites) site.validate(cfg);

    const int n = static_cast<int>(tokens.size());
    const size_t d = static_cast<size_t>(cfg.d_model);
    const int n_heads = cfg.n_heads;
    const int n_kv = cfg.n_kv_heads;
    const int dh = cfg.d_head;
    const double eps = static_cast<double>(cfg.norm_eps);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    const std::set<HookSite> wanted(capture_sites.begin(), capture_sites.end());
    const auto grab = [&](const HookSite& site, int pos, const float* v, size_t len) {
        if (cache != nullptr && wanted.count(site) != 0)
            cache->insert({site, pos}, std::vector<float>(v, v + len));
    };

    std::vector<double> inv_freq(static_cast<size_t>(dh / 2));
    for (size_t p = 0; p < inv_freq.size(); ++p)
        inv_freq[p] = std::pow(static_cast<double>(cfg.rope_theta),
                               -2.0 * static_cast<double>(p) / static_cast<double>(dh));

    Matrix resid(static_cast<size_t>(n), d);
    for (int i = 0; i < n; ++i) {
        const float* row = model.token_embedding.row(static_cast<size_t>(tokens.tokens[i]));
        std::copy(row, row + d, resid.row(static_cast<size_t>(i)));
    }

    std::vector<float> xnorm(d);
    const size_t q_dim = static_cast<size_t>(n_heads) * dh;
    const size_t kv_dim = static_cast<size_t>(n_kv) * dh;

    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = model.layers[static_cast<size_t>(l)];

        for (int i = 0; i < n; ++i)
            grab(resid_pre_site(l), i, resid.row(static_cast<size_t>(i)), d);

        Matrix q(static_cast<size_t>(n), q_dim);
        Matrix k(static_cast<size_t>(n), kv_dim);
        Matrix v(static_cast<size_t>(n), kv_dim);
        for (int i = 0; i < n; ++i) {
            rms_norm(resid.row(static_cast<size_t>(i)), lw.attn_norm, eps, d, xnorm.data());
            vec_mat(xnorm.data(), lw.wq, q.row(static_cast<size_t>(i)));
            vec_mat(xnorm.data(), lw.wk, k.row(static_cast<size_t>(i)));
            vec_mat(xnorm.data(), lw.wv, v.row(static_cast<size_t>(i)));
            apply_rope(q.row(static_cast<size_t>(i)), n_heads, dh, i, inv_freq);
            apply_rope(k.row(static_cast<size_t>(i)), n_kv, dh, i, inv_freq);
        }

        // z[i] = per-head attention output, concatenated heads, pre-wo.
        Matrix z(static_cast<size_t>(n), q_dim);
        std::vector<double> weights(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int h = 0; h < n_heads; ++h) {
                const size_t kv_off = static_cast<size_t>(cfg.kv_head_for(h)) * dh;
                const float* qi = q.row(static_cast<size_t>(i)) + static_cast<size_t>(h) * dh;

                double max_score = -HUGE_VAL;
                for (int j = 0; j <= i; ++j) {
                    const double s =
                        dot_f64(qi, k.row(static_cast<size_t>(j)) + kv_off, static_cast<size_t>(dh)) *
                        inv_sqrt_dh;
                    weights[static_cast<size_t>(j)] = s;
                    max_score = std::max(max_score, s);
                }
                double total = 0.0;
                for (int j = 0; j <= i; ++j) {
                    weights[static_cast<size_t>(j)] =
                        std::exp(weights[static_cast<size_t>(j)] - max_score);
                    total += weights[static_cast<size_t>(j)];
                }
                float* zi = z.row(static_cast<size_t>(i)) + static_cast<size_t>(h) * dh;
                for (int t = 0; t < dh; ++t) {
                    double acc = 0.0;
                    for (int j = 0; j <= i; ++j)
                        acc += weights[static_cast<size_t>(j)] *
                               static_cast<double>(v.at(static_cast<size_t>(j), kv_off + t));
                    zi[t] = static_cast<float>(acc / total);
                }
            }
        }

        if (hooks != nullptr && hooks->replace != nullptr) {
            for (auto it = hooks->replace->lower_bound({l, 0, 0});
                 it != hooks->replace->end() && it->first[0] == l; ++it) {
                const int h = it->first[1];
                const int p = it->first[2];
                if (h < 0 || h >= n_heads || p < 0 || p >= n)
                    throw BoundsError("z replacement target out of range");
                if (it->second.size() != static_cast<size_t>(dh))
                    throw ValidationError("z replacement has wrong dimension");
                std::copy(it->second.begin(), it->second.end(),
                          z.row(static_cast<size_t>(p)) + static_cast<size_t>(h) * dh);
            }
        }
        if (hooks != nullptr && hooks->scrub) {
            for (int p = 0; p < n; ++p)
                for (int h = 0; h < n_heads; ++h)
                    hooks->scrub(l, h, p, z.row(static_cast<size_t>(p)) + static_cast<size_t>(h) * dh);
        }

        for (int i = 0; i < n; ++i)
            for (int h = 0; h < n_heads; ++h)
                grab(head_z_site(l, h), i,
                     z.row(static_cast<size_t>(i)) + static_cast<size_t>(h) * dh,
                     static_cast<size_t>(dh));

        std::vector<float> attn_out(d);
        for (int i = 0; i < n; ++i) {
            vec_mat(z.row(static_cast<size_t>(i)), lw.wo, attn_out.data());
            grab(attn_out_site(l), i, attn_out.data(), d);
            float* x = resid.row(static_cast<size_t>(i));
            for (size_t t = 0; t < d; ++t) x[t] += attn_out[t];
        }

        const size_t ff = lw.d_ff();
        std::vector<float> gate(ff);
        std::vector<float> up(ff);
        std::vector<float> act(ff);
        std::vector<float> mlp_out(d);
        for (int i = 0; i < n; ++i) {
            rms_norm(resid.row(static_cast<size_t>(i)), lw.mlp_norm, eps, d, xnorm.data());
            vec_mat(xnorm.data(), lw.mlp_gate, gate.data());
            vec_mat(xnorm.data(), lw.mlp_up, up.data());
            for (size_t t = 0; t < ff; ++t) {
                const double g = static_cast<double>(gate[t]);
                act[t] = static_cast<float>(g / (1.0 + std::exp(-g)) * up[t]);  // SiLU * up
            }
            vec_mat(act.data(), lw.mlp_down, mlp_out.data());
            grab(mlp_out_site(l), i, mlp_out.data(), d);
            float* x = resid.row(static_cast<size_t>(i));
            for (size_t t = 0; t < d; ++t) x[t] += mlp_out[t];
        }

        for (int i = 0; i < n; ++i)
            grab(resid_post_site(l), i, resid.row(static_cast<size_t>(i)), d);
    }

    Matrix logits(static_cast<size_t>(n), static_cast<size_t>(cfg.vocab_size));
    for (int i = 0; i < n; ++i) {
        rms_norm(resid.row(static_cast<size_t>(i)), model.final_norm, eps, d, xnorm.data());
        vec_mat(xnorm.data(), model.unembedding, logits.row(static_cast<size_t>(i)));
    }
    if (!all_finite(logits)) throw ValidationError("forward produced non-finite logits");
    return logits;
}

}  // namespace detail

ForwardResult forward(const Model& model, const TokenSequence& tokens,
                      const std::vector<HookSite>& capture_sites) {
    ForwardResult result;
    result.cache.meta.seq_len = static_cast<int>(tokens.size());
    result.logits = detail::run_transformer(model, tokens, capture_sites, &result.cache, nullptr);
    return result;
}

std::pair<double, double> next_token_answer(const float* logits, size_t vocab_size,
                                            int true_token, int false_token) {
    if (true_token < 0 || static_cast<size_t>(true_token) >= vocab_size || false_token < 0 ||
        static_cast<size_t>(false_token) >= vocab_size)
        throw BoundsError("answer token id outside vocabulary");
    double max_logit = -HUGE_VAL;
    for (size_t i = 0; i < vocab_size; ++i)
        max_logit = std::max(max_logit, static_cast<double>(logits[i]));
    double total = 0.0;
    for (size_t i = 0; i < vocab_size; ++i)
        total += std::exp(static_cast<double>(logits[i]) - max_logit);
    const double p_true =
        std::exp(static_cast<double>(logits[true_token]) - max_logit) / total;
    const double p_false =
        std::exp(static_cast<double>(logits[false_token]) - max_logit) / total;
    return {p_true, p_false};
}

}  // namespace mip
