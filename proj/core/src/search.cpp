#include "mip/search.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "mip/errors.hpp"

namespace mip {

void EvalContext::validate() const {
    if (model == nullptr || vocab == nullptr || catalog == nullptr)
        throw ValidationError("eval context is missing model, vocab, or catalog");
    if (!(tau >= 0.0 && tau <= 1.0))
        throw ValidationError("eval context: tau must be in [0, 1]");
}

namespace {

// Accuracy of `target` patched from `source` on the given head set/window.
double patched_accuracy(const EvalContext& ctx, const PromptId& target,
                        const PromptId& source, const std::set<std::pair<int, int>>& heads,
                        const PositionWindow& window, const std::vector<Statement>& dataset) {
    PatchPlan plan;
    plan.heads = heads;
    plan.window = window;
    plan.source_prompt = source;
    return evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, target, dataset, &plan, ctx.tau)
        .accuracy;
}

}  // namespace

SweepResult layer_sweep(const EvalContext& ctx, int k, const PositionWindow& window,
                        const std::vector<Statement>& dataset) {
    ctx.validate();
    window.validate();
    const int n_layers = ctx.model->config.n_layers;
    if (k <= 0 || k > n_layers)
        throw ValidationError("layer sweep: k must be in [1, n_layers]");

    SweepResult sweep;
    sweep.baseline_honest =
        evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.honest_prompt, dataset, nullptr,
                 ctx.tau)
            .accuracy;
    sweep.baseline_liar =
        evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.liar_prompt, dataset, nullptr,
                 ctx.tau)
            .accuracy;
    for (int start = 0; start + k <= n_layers; ++start) {
        std::vector<int> layers(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) layers[static_cast<size_t>(i)] = start + i;
        const double accuracy =
            patched_accuracy(ctx, ctx.liar_prompt, ctx.honest_prompt,
                             all_heads_in_layers(ctx.model->config, layers), window, dataset);
        sweep.entries.push_back({std::to_string(start), accuracy});
    }
    return sweep;
}

LooResult leave_one_out_search(const EvalContext& ctx, const std::vector<int>& layers,
                               const std::vector<Statement>& subset,
                               const PositionWindow& window) {
    ctx.validate();
    window.validate();
    if (subset.empty()) throw DataError("leave-one-out search: empty dataset subset");
    const std::set<std::pair<int, int>> full = all_heads_in_layers(ctx.model->config, layers);
    if (full.empty()) throw ValidationError("leave-one-out search: no layers to search");

    LooResult result;
    result.baseline_honest =
        evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.honest_prompt, subset, nullptr,
                 ctx.tau)
            .accuracy;
    result.baseline_liar =
        evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.liar_prompt, subset, nullptr,
                 ctx.tau)
            .accuracy;
    result.full_patch_accuracy =
        patched_accuracy(ctx, ctx.liar_prompt, ctx.honest_prompt, full, window, subset);

    for (const std::pair<int, int>& head : full) {
        std::set<std::pair<int, int>> without = full;
        without.erase(head);
        HeadImpact impact;
        impact.head = head;
        impact.accuracy_without =
            without.empty()
                ? result.baseline_liar
                : patched_accuracy(ctx, ctx.liar_prompt, ctx.honest_prompt, without, window,
                                   subset);
        impact.delta = impact.accuracy_without - result.full_patch_accuracy;
        result.impacts.push_back(impact);
    }
    return result;
}

HeadSelection select_heads(const std::vector<HeadImpact>& impacts, double threshold) {
    if (threshold < 0.0) throw ValidationError("select_heads: threshold must be non-negative");
    HeadSelection selection;
    for (const HeadImpact& impact : impacts) {
        if (impact.delta < -threshold) {
            selection.kept.insert(impact.head);
        } else if (impact.delta > threshold) {
            selection.inhibitory.insert(impact.head);
        }
    }
    return selection;
}

HeadPatchEval evaluate_head_patch(const EvalContext& ctx,
                                  const std::set<std::pair<int, int>>& heads,
                                  const std::vector<Statement>& dataset,
                                  const PositionWindow& window, PatchDirection direction) {
    ctx.validate();
    window.validate();
    HeadPatchEval out;
    out.baseline_honest = evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.honest_prompt,
                                   dataset, nullptr, ctx.tau);
    out.baseline_liar = evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.liar_prompt,
                                 dataset, nullptr, ctx.tau);
    PatchPlan plan;
    plan.heads = heads;
    plan.window = window;
    const bool to_liar = direction == PatchDirection::liar_patched_with_honest;
    plan.source_prompt = to_liar ? ctx.honest_prompt : ctx.liar_prompt;
    const PromptId& target = to_liar ? ctx.liar_prompt : ctx.honest_prompt;
    out.patched = evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, target, dataset, &plan,
                           ctx.tau);
    return out;
}

SweepResult position_sweep(const EvalContext& ctx, const std::set<std::pair<int, int>>& heads,
                           const std::vector<PositionWindow>& windows,
                           const std::vector<Statement>& dataset) {
    ctx.validate();
    if (windows.empty()) throw ValidationError("position sweep: no windows given");
    SweepResult sweep;
    sweep.baseline_honest =
        evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.honest_prompt, dataset, nullptr,
                 ctx.tau)
            .accuracy;
    sweep.baseline_liar =
        evaluate(*ctx.model, *ctx.vocab, *ctx.catalog, ctx.liar_prompt, dataset, nullptr,
                 ctx.tau)
            .accuracy;
    std::set<std::string> seen;
    for (const PositionWindow& window : windows) {
        window.validate();
        const std::string coordinate = window_to_string(window);
        if (!seen.insert(coordinate).second)
            throw ValidationError("position sweep: duplicate window " + coordinate);
        sweep.entries.push_back(
            {coordinate, patched_accuracy(ctx, ctx.liar_prompt, ctx.honest_prompt, heads,
                                          window, dataset)});
    }
    return sweep;
}

std::set<std::pair<int, int>> all_heads_in_layers(const ModelConfig& config,
                                                  const std::vector<int>& layers) {
    std::set<std::pair<int, int>> heads;
    for (int layer : layers) {
        if (layer < 0 || layer >= config.n_layers)
            throw BoundsError("layer " + std::to_string(layer) + " out of range");
        for (int head = 0; head < config.n_heads; ++head) heads.insert({layer, head});
    }
    return heads;
}

void save_sweep_csv(const SweepResult& sweep, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "coordinate,accuracy\n";
    char buf[48];
    for (const SweepEntry& entry : sweep.entries) {
        if (entry.coordinate.find(',') != std::string::npos)
            throw ValidationError("sweep coordinate contains a comma: " + entry.coordinate);
        std::snprintf(buf, sizeof(buf), "%.4f", entry.accuracy);
        out << entry.coordinate << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "%.4f", sweep.baseline_honest);
    out << "baseline_honest," << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.4f", sweep.baseline_liar);
    out << "baseline_liar," << buf << '\n';
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

void save_loo_csv(const LooResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "full_patch_accuracy,baseline_honest,baseline_liar\n%.4f,%.4f,%.4f\n",
                  result.full_patch_accuracy, result.baseline_honest, result.baseline_liar);
    out << buf;
    out << "layer,head,accuracy_without,delta\n";
    for (const HeadImpact& impact : result.impacts) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.4f,%.9g\n", impact.head.first,
                      impact.head.second, impact.accuracy_without, impact.delta);
        out << buf;
    }
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

}  // namespace mip
