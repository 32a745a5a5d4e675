#include "mip/attribution.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mip/activation.hpp"
#include "mip/errors.hpp"
#include "mip/forward.hpp"

namespace mip {

AttributionReport logit_attribution(const Model& model, const TokenSequence& tokens,
                                    int token_a, int token_b) {
    const ModelConfig& cfg = model.config;
    if (token_a < 0 || token_a >= cfg.vocab_size || token_b < 0 || token_b >= cfg.vocab_size)
        throw BoundsError("logit_attribution: answer token id out of range");

    std::vector<HookSite> sites;
    for (int l = 0; l < cfg.n_layers; ++l) {
        sites.push_back(attn_out_site(l));
        sites.push_back(mlp_out_site(l));
    }
    sites.push_back(resid_post_site(cfg.n_layers - 1));
    const ForwardResult run = forward(model, tokens, sites);

    const int last = static_cast<int>(tokens.tokens.size()) - 1;
    const size_t d = static_cast<size_t>(cfg.d_model);

    // Freeze the final RMSNorm at its realized scale so every component's
    // write maps linearly onto the logit difference.
    const std::vector<float>& resid_final =
        run.cache.at({resid_post_site(cfg.n_layers - 1), last});
    double ss = 0.0;
    for (size_t i = 0; i < d; ++i)
        ss += static_cast<double>(resid_final[i]) * resid_final[i];
    const double scale =
        1.0 / std::sqrt(ss / static_cast<double>(d) + static_cast<double>(cfg.norm_eps));

    // read[i] = s* * final_norm[i] * (unembed[:, a] - unembed[:, b])[i]; a
    // component writing w contributes sum_i w[i] * read[i].
    std::vector<double> read(d);
    for (size_t i = 0; i < d; ++i) {
        const double diff = static_cast<double>(model.unembedding.at(i, static_cast<size_t>(token_a))) -
                            static_cast<double>(model.unembedding.at(i, static_cast<size_t>(token_b)));
        read[i] = scale * static_cast<double>(model.final_norm[i]) * diff;
    }
    const auto project = [&](const float* write) {
        double s = 0.0;
        for (size_t i = 0; i < d; ++i) s += static_cast<double>(write[i]) * read[i];
        return s;
    };

    AttributionReport report;
    const int last_token = tokens.tokens.back();
    report.per_component.push_back(
        {"embedding", project(model.token_embedding.row(static_cast<size_t>(last_token)))});
    for (int l = 0; l < cfg.n_layers; ++l) {
        report.per_component.push_back(
            {"attn." + std::to_string(l), project(run.cache.at({attn_out_site(l), last}).data())});
        report.per_component.push_back(
            {"mlp." + std::to_string(l), project(run.cache.at({mlp_out_site(l), last}).data())});
    }

    const float* logits = run.logits.row(static_cast<size_t>(last));
    report.total = static_cast<double>(logits[token_a]) - static_cast<double>(logits[token_b]);
    double sum = 0.0;
    for (const AttributionEntry& entry : report.per_component) sum += entry.contribution;
    report.residual_check = std::fabs(sum - report.total);
    return report;
}

void save_attribution_csv(const AttributionReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "component,contribution\n";
    char buf[64];
    for (const AttributionEntry& entry : report.per_component) {
        std::snprintf(buf, sizeof(buf), "%.9g", entry.contribution);
        out << entry.component << ',' << buf << '\n';
    }
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

}  // namespace mip
