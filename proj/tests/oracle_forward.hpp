#pragma once

// Independent brute-force reference for the transformer forward pass, written
// directly from the architecture definition with no shared code beyond the
// weight containers: pure double arithmetic, scalar loops, per-head attention.
// Used to cross-check the engine on tiny models.

#include <cmath>
#include <vector>

#include "mip/model.hpp"

namespace oracle {

inline std::vector<double> rms_norm_ref(const std::vector<double>& x,
                                        const std::vector<float>& gain, double eps) {
    double ms = 0.0;
    for (double v : x) ms += v * v;
    ms = ms / static_cast<double>(x.size()) + eps;
    const double inv = 1.0 / std::sqrt(ms);
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        out[i] = x[i] * inv * static_cast<double>(gain[i]);
    return out;
}

// y[c] = sum_r x[r] * w[r][c]
inline std::vector<double> project_ref(const std::vector<double>& x, const mip::Matrix& w) {
    std::vector<double> y(w.cols, 0.0);
    for (size_t c = 0; c < w.cols; ++c)
        for (size_t r = 0; r < w.rows; ++r)
            y[c] += x[r] * static_cast<double>(w.at(r, c));
    return y;
}

inline void rope_ref(std::vector<double>& vec, int heads, int d_head, int pos,
                     double theta) {
    for (int h = 0; h < heads; ++h) {
        for (int p = 0; 2 * p + 1 < d_head; ++p) {
            const double freq =
                std::pow(theta, -2.0 * static_cast<double>(p) / static_cast<double>(d_head));
            const double angle = static_cast<double>(pos) * freq;
            const size_t i0 = static_cast<size_t>(h) * d_head + 2 * p;
            const double a = vec[i0];
            const double b = vec[i0 + 1];
            vec[i0] = a * std::cos(angle) - b * std::sin(angle);
            vec[i0 + 1] = a * std::sin(angle) + b * std::cos(angle);
        }
    }
}

// Full-precision forward pass; returns seq_len x vocab logits.
inline std::vector<std::vector<double>> forward_ref(const mip::Model& model,
                                                    const std::vector<int>& tokens) {
    const mip::ModelConfig& cfg = model.config;
    const size_t d = static_cast<size_t>(cfg.d_model);
    const int n = static_cast<int>(tokens.size());
    const int dh = cfg.d_head;
    const int group = cfg.n_heads / cfg.n_kv_heads;

    std::vector<std::vector<double>> resid(tokens.size(), std::vector<double>(d));
    for (int i = 0; i < n; ++i)
        for (size_t c = 0; c < d; ++c)
            resid[i][c] = static_cast<double>(
                model.token_embedding.at(static_cast<size_t>(tokens[i]), c));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const mip::LayerWeights& lw = model.layers[static_cast<size_t>(l)];

        std::vector<std::vector<double>> q(n), k(n), v(n);
        for (int i = 0; i < n; ++i) {
            const std::vector<double> xn =
                rms_norm_ref(resid[i], lw.attn_norm, cfg.norm_eps);
            q[i] = project_ref(xn, lw.wq);
            k[i] = project_ref(xn, lw.wk);
            v[i] = project_ref(xn, lw.wv);
            rope_ref(q[i], cfg.n_heads, dh, i, cfg.rope_theta);
            rope_ref(k[i], cfg.n_kv_heads, dh, i, cfg.rope_theta);
        }

        for (int i = 0; i < n; ++i) {
            std::vector<double> z(static_cast<size_t>(cfg.n_heads) * dh, 0.0);
            for (int h = 0; h < cfg.n_heads; ++h) {
                const int kv = h / group;
                std::vector<double> score(static_cast<size_t>(i) + 1);
                double mx = -1e300;
                for (int j = 0; j <= i; ++j) {
                    double s = 0.0;
                    for (int e = 0; e < dh; ++e)
                        s += q[i][static_cast<size_t>(h) * dh + e] *
                             k[j][static_cast<size_t>(kv) * dh + e];
                    score[j] = s / std::sqrt(static_cast<double>(dh));
                    if (score[j] > mx) mx = score[j];
                }
                double denom = 0.0;
                for (int j = 0; j <= i; ++j) {
                    score[j] = std::exp(score[j] - mx);
                    denom += score[j];
                }
                for (int j = 0; j <= i; ++j)
                    for (int e = 0; e < dh; ++e)
                        z[static_cast<size_t>(h) * dh + e] +=
                            (score[j] / denom) * v[j][static_cast<size_t>(kv) * dh + e];
            }
            const std::vector<double> attn_out = project_ref(z, lw.wo);
            for (size_t c = 0; c < d; ++c) resid[i][c] += attn_out[c];
        }

        for (int i = 0; i < n; ++i) {
            const std::vector<double> xn = rms_norm_ref(resid[i], lw.mlp_norm, cfg.norm_eps);
            const std::vector<double> gate = project_ref(xn, lw.mlp_gate);
            const std::vector<double> up = project_ref(xn, lw.mlp_up);
            std::vector<double> hidden(gate.size());
            for (size_t e = 0; e < gate.size(); ++e)
                hidden[e] = gate[e] / (1.0 + std::exp(-gate[e])) * up[e];
            const std::vector<double> mlp_out = project_ref(hidden, lw.mlp_down);
            for (size_t c = 0; c < d; ++c) resid[i][c] += mlp_out[c];
        }
    }

    std::vector<std::vector<double>> logits(tokens.size());
    for (int i = 0; i < n; ++i) {
        const std::vector<double> xn = rms_norm_ref(resid[i], model.final_norm, cfg.norm_eps);
        logits[i] = project_ref(xn, model.unembedding);
    }
    return logits;
}

}  // namespace oracle
