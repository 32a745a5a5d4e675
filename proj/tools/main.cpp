// Command-line driver for the interpretability workbench: dataset filtering,
// prompt-conditioned evaluation, probe training/transfer, activation-patching
// sweeps, head search, logit attribution, concept-erasure sweeps, and
// truth-bit fixture generation. All file outputs are byte-deterministic for
// fixed inputs and flags.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mip/activation.hpp"
#include "mip/attribution.hpp"
#include "mip/erase.hpp"
#include "mip/errors.hpp"
#include "mip/forward.hpp"
#include "mip/harness.hpp"
#include "mip/model_io.hpp"
#include "mip/probe.hpp"
#include "mip/rng.hpp"
#include "mip/search.hpp"
#include "mip/tokenizer.hpp"
#include "mip/truth_bit.hpp"

namespace {

using namespace mip;

// Everything a model-consuming subcommand needs, loaded lazily.
struct Workspace {
    std::string model_path;
    std::string tokenizer_path;
    std::string catalog_path;  // empty = built-in Table-style catalog
    std::string dataset_path;
    uint64_t seed = 0;
    int sample = 0;  // 0 = use the whole dataset
    double tau = 0.5;

    std::unique_ptr<Model> model;
    std::unique_ptr<Vocab> vocab;
    PromptCatalog catalog;
    std::vector<Statement> dataset;

    void load() {
        model = std::make_unique<Model>(load_model(model_path));
        vocab = std::make_unique<Vocab>(load_vocab(tokenizer_path));
        catalog = catalog_path.empty() ? builtin_catalog() : load_catalog(catalog_path);
        if (!dataset_path.empty()) {
            dataset = load_statements(dataset_path);
            if (sample > 0 && static_cast<size_t>(sample) < dataset.size()) {
                Rng rng(seed);
                rng.shuffle(dataset);
                dataset.resize(static_cast<size_t>(sample));
            }
        }
    }
};

void add_common(CLI::App* cmd, Workspace& ws, bool needs_dataset) {
    cmd->add_option("--model", ws.model_path, "Model weights (MIPW file)")->required();
    cmd->add_option("--tokenizer", ws.tokenizer_path, "Vocabulary file (token<TAB>id)")
        ->required();
    cmd->add_option("--catalog", ws.catalog_path,
                    "Prompt catalog file (default: built-in catalog)");
    auto* ds = cmd->add_option("--dataset", ws.dataset_path,
                               "Statements file (text<TAB>label<TAB>split)");
    if (needs_dataset) ds->required();
    cmd->add_option("--seed", ws.seed, "Seed for dataset subsampling");
    cmd->add_option("--sample", ws.sample, "Evaluate on this many sampled statements (0 = all)");
    cmd->add_option("--tau", ws.tau, "Unexpected-answer threshold on p_true + p_false");
}

PositionWindow window_opt(const std::string& text) { return parse_window(text); }

EvalContext make_ctx(const Workspace& ws, const std::string& honest, const std::string& liar) {
    EvalContext ctx;
    ctx.model = ws.model.get();
    ctx.vocab = ws.vocab.get();
    ctx.catalog = &ws.catalog;
    ctx.honest_prompt = PromptId::parse(honest);
    ctx.liar_prompt = PromptId::parse(liar);
    ctx.tau = ws.tau;
    return ctx;
}

// Capture head-z caches for every statement of the dataset under `prompt`.
std::vector<ActivationCache> capture_all(const Workspace& ws, const PromptId& prompt) {
    std::vector<HookSite> sites = all_head_z_sites(ws.model->config);
    std::vector<ActivationCache> caches;
    caches.reserve(ws.dataset.size());
    for (const Statement& s : ws.dataset) {
        const TokenSequence tokens =
            tokenize(*ws.vocab, compose_prompt(ws.catalog, prompt, s));
        caches.push_back(capture(*ws.model, tokens, sites));
    }
    return caches;
}

std::vector<int> dataset_labels(const Workspace& ws) {
    std::vector<int> labels;
    labels.reserve(ws.dataset.size());
    for (const Statement& s : ws.dataset) labels.push_back(s.label);
    return labels;
}

std::vector<int> parse_layer_list(const std::string& text) {
    std::vector<int> layers;
    std::string token;
    for (size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == ',') {
            if (!token.empty()) layers.push_back(std::stoi(token));
            token.clear();
        } else {
            token += text[i];
        }
    }
    if (layers.empty()) throw ValidationError("empty layer list");
    return layers;
}

std::vector<PositionWindow> parse_window_list(const std::string& text) {
    std::vector<PositionWindow> windows;
    std::string token;
    for (size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == ',') {
            if (!token.empty()) windows.push_back(parse_window(token));
            token.clear();
        } else {
            token += text[i];
        }
    }
    if (windows.empty()) throw ValidationError("empty window list");
    return windows;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mechanistic-interpretability workbench"};
    app.require_subcommand(1);

    // --- gen-truth-bit ---------------------------------------------------
    auto* gen = app.add_subcommand("gen-truth-bit",
                                   "Write the hand-wired truth-bit model, vocabulary, "
                                   "catalog, and a synthetic dataset");
    std::string gen_dir;
    int gen_n = 64;
    gen->add_option("--out-dir", gen_dir, "Output directory (must exist)")->required();
    gen->add_option("--n", gen_n, "Number of synthetic statements");

    // --- filter-dataset --------------------------------------------------
    Workspace filter_ws;
    auto* filter = app.add_subcommand(
        "filter-dataset", "Keep statements the reference model answers correctly "
                          "with probability strictly above the threshold");
    add_common(filter, filter_ws, true);
    std::string filter_prompt = "1ai";
    double filter_threshold = 0.85;
    std::string filter_out;
    filter->add_option("--prompt", filter_prompt, "Reference (honest) prompt id");
    filter->add_option("--threshold", filter_threshold, "Strict probability threshold");
    filter->add_option("--out", filter_out, "Filtered dataset path")->required();

    // --- eval ------------------------------------------------------------
    Workspace eval_ws;
    auto* eval_cmd =
        app.add_subcommand("eval", "Evaluate answer accuracy under one prompt condition");
    add_common(eval_cmd, eval_ws, true);
    std::string eval_prompt, eval_out, eval_format = "csv";
    eval_cmd->add_option("--prompt", eval_prompt, "Prompt id, e.g. 2fii")->required();
    eval_cmd->add_option("--out", eval_out, "Report path")->required();
    eval_cmd->add_option("--format", eval_format, "csv or table");

    // --- probes ----------------------------------------------------------
    Workspace probes_ws;
    auto* probes_cmd = app.add_subcommand(
        "probes", "Train one truth probe per attention head on cached z activations");
    add_common(probes_cmd, probes_ws, true);
    std::string probes_prompt, probes_out, probes_heatmap;
    int probes_offset = 0;
    probes_cmd->add_option("--prompt", probes_prompt, "Condition to capture under")->required();
    probes_cmd->add_option("--offset", probes_offset,
                           "Position offset from the final token (<= 0)");
    probes_cmd->add_option("--out", probes_out, "Probe grid output (MIPP file)")->required();
    probes_cmd->add_option("--heatmap", probes_heatmap,
                           "Also write accuracy heatmap files at this base path");

    // --- transfer --------------------------------------------------------
    Workspace transfer_ws;
    auto* transfer_cmd = app.add_subcommand(
        "transfer", "Evaluate a saved probe grid on activations from another condition");
    add_common(transfer_cmd, transfer_ws, true);
    std::string transfer_probes, transfer_prompt, transfer_out, transfer_heatmap;
    transfer_cmd->add_option("--probes", transfer_probes, "Probe grid (MIPP file)")->required();
    transfer_cmd->add_option("--prompt", transfer_prompt, "Condition to capture under")
        ->required();
    transfer_cmd->add_option("--out", transfer_out, "Transfer accuracy CSV")->required();
    transfer_cmd->add_option("--heatmap", transfer_heatmap,
                             "Also write transfer heatmap files at this base path");

    // --- patch-layers ----------------------------------------------------
    Workspace sweep_ws;
    auto* sweep_cmd = app.add_subcommand(
        "patch-layers", "Sweep k-layer honest-to-liar activation patches over start layers");
    add_common(sweep_cmd, sweep_ws, true);
    std::string sweep_honest, sweep_liar, sweep_window = "-24:0", sweep_out;
    int sweep_k = 5;
    sweep_cmd->add_option("--honest", sweep_honest, "Honest prompt id")->required();
    sweep_cmd->add_option("--liar", sweep_liar, "Liar prompt id")->required();
    sweep_cmd->add_option("--k", sweep_k, "Layers per patch");
    sweep_cmd->add_option("--window", sweep_window, "Patch window start:end");
    sweep_cmd->add_option("--out", sweep_out, "Sweep CSV path")->required();

    // --- head-search -----------------------------------------------------
    Workspace loo_ws;
    auto* loo_cmd = app.add_subcommand(
        "head-search", "Leave-one-out head search over the given layers");
    add_common(loo_cmd, loo_ws, true);
    std::string loo_honest, loo_liar, loo_layers, loo_window = "-24:0", loo_out, loo_heads_out;
    double loo_threshold = 1e-9;
    loo_cmd->add_option("--honest", loo_honest, "Honest prompt id")->required();
    loo_cmd->add_option("--liar", loo_liar, "Liar prompt id")->required();
    loo_cmd->add_option("--layers", loo_layers, "Comma-separated layer list")->required();
    loo_cmd->add_option("--window", loo_window, "Patch window start:end");
    loo_cmd->add_option("--threshold", loo_threshold, "No-impact tolerance on delta");
    loo_cmd->add_option("--out", loo_out, "Per-head impact CSV")->required();
    loo_cmd->add_option("--heads-out", loo_heads_out,
                        "Write selected (impactful) heads as a patch-spec file");

    // --- patch-heads -----------------------------------------------------
    Workspace ph_ws;
    auto* ph_cmd = app.add_subcommand(
        "patch-heads", "Evaluate a saved head-set patch in either direction");
    add_common(ph_cmd, ph_ws, true);
    std::string ph_honest, ph_liar, ph_heads, ph_window, ph_out, ph_direction = "liar";
    ph_cmd->add_option("--honest", ph_honest, "Honest prompt id")->required();
    ph_cmd->add_option("--liar", ph_liar, "Liar prompt id")->required();
    ph_cmd->add_option("--heads", ph_heads, "Patch-spec file (heads + window)")->required();
    ph_cmd->add_option("--window", ph_window, "Override the file's window (start:end)");
    ph_cmd->add_option("--direction", ph_direction,
                       "liar (patch liar with honest) or honest (patch honest with liar)");
    ph_cmd->add_option("--out", ph_out, "Report CSV path")->required();

    // --- logit-attr ------------------------------------------------------
    Workspace attr_ws;
    auto* attr_cmd = app.add_subcommand(
        "logit-attr", "Mean correct-minus-incorrect logit attribution per component");
    add_common(attr_cmd, attr_ws, true);
    std::string attr_prompt, attr_out;
    attr_cmd->add_option("--prompt", attr_prompt, "Prompt id")->required();
    attr_cmd->add_option("--out", attr_out, "Attribution CSV path")->required();

    // --- leace -----------------------------------------------------------
    Workspace leace_ws;
    auto* leace_cmd = app.add_subcommand(
        "leace", "Sweep oracle concept erasure over k-layer ranges");
    add_common(leace_cmd, leace_ws, true);
    std::string leace_honest, leace_liar, leace_window = "-14:0", leace_out;
    int leace_k = 5;
    leace_cmd->add_option("--honest", leace_honest, "Honest prompt id")->required();
    leace_cmd->add_option("--liar", leace_liar, "Liar prompt id")->required();
    leace_cmd->add_option("--k", leace_k, "Layers erased per range");
    leace_cmd->add_option("--window", leace_window,
                          "Erasure window start:end (clamped to short runs)");
    leace_cmd->add_option("--out", leace_out, "Sweep CSV path")->required();

    // --- pos-sweep -------------------------------------------------------
    Workspace pos_ws;
    auto* pos_cmd = app.add_subcommand(
        "pos-sweep", "Patched-liar accuracy across candidate position windows");
    add_common(pos_cmd, pos_ws, true);
    std::string pos_honest, pos_liar, pos_heads, pos_windows, pos_out;
    pos_cmd->add_option("--honest", pos_honest, "Honest prompt id")->required();
    pos_cmd->add_option("--liar", pos_liar, "Liar prompt id")->required();
    pos_cmd->add_option("--heads", pos_heads, "Patch-spec file naming the head set")
        ->required();
    pos_cmd->add_option("--windows", pos_windows,
                        "Comma-separated windows, e.g. -25:0,-5:0,-1:0")
        ->required();
    pos_cmd->add_option("--out", pos_out, "Sweep CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const ModelConfig config = truth_bit_config();
            save_model(build_truth_bit_model(config), gen_dir + "/model.mipw");
            save_vocab(truth_bit_vocab(), gen_dir + "/vocab.tsv");
            save_catalog(truth_bit_catalog(), gen_dir + "/catalog.tsv");
            save_statements(truth_bit_dataset(gen_n), gen_dir + "/dataset.tsv");
            std::printf("wrote model.mipw, vocab.tsv, catalog.tsv, dataset.tsv to %s\n",
                        gen_dir.c_str());
        } else if (filter->parsed()) {
            filter_ws.load();
            const std::vector<Statement> kept =
                filter_dataset(filter_ws.dataset, *filter_ws.model, *filter_ws.vocab,
                               filter_ws.catalog, PromptId::parse(filter_prompt),
                               filter_threshold);
            save_statements(kept, filter_out);
            std::printf("kept %zu of %zu statements\n", kept.size(),
                        filter_ws.dataset.size());
        } else if (eval_cmd->parsed()) {
            eval_ws.load();
            const EvalReport report =
                evaluate(*eval_ws.model, *eval_ws.vocab, eval_ws.catalog,
                         PromptId::parse(eval_prompt), eval_ws.dataset, nullptr, eval_ws.tau);
            const ReportFormat format =
                eval_format == "table" ? ReportFormat::text_table : ReportFormat::csv;
            emit_report({report}, eval_out, format);
            std::printf("%s: accuracy %.4f (n=%d, unexpected %.4f)\n",
                        report.condition.c_str(), report.accuracy, report.n,
                        report.unexpected_rate);
        } else if (probes_cmd->parsed()) {
            probes_ws.load();
            const PromptId prompt = PromptId::parse(probes_prompt);
            const std::vector<ActivationCache> caches = capture_all(probes_ws, prompt);
            const std::vector<int> labels = dataset_labels(probes_ws);
            const ProbeGrid grid = train_grid(probes_ws.model->config, caches, labels,
                                              probes_offset, {}, probes_prompt);
            save_probe_grid(grid, probes_offset, probes_out);
            const HeadDatasets datasets =
                build_head_datasets(probes_ws.model->config, caches, labels, probes_offset);
            const MetricGrid accuracy = accuracy_grid(grid, datasets);
            if (!probes_heatmap.empty()) emit_heatmap(accuracy, probes_heatmap);
            double best = 0.0;
            for (const auto& row : accuracy)
                for (double a : row) best = std::max(best, a);
            std::printf("trained %d x %d probes at offset %d; best accuracy %.4f\n",
                        grid.n_layers, grid.n_heads, probes_offset, best);
        } else if (transfer_cmd->parsed()) {
            transfer_ws.load();
            const ProbeGrid grid = load_probe_grid(transfer_probes);
            const int offset = grid.probes.empty() ? 0 : grid.probes.front().train_meta.position_offset;
            const PromptId prompt = PromptId::parse(transfer_prompt);
            const std::vector<ActivationCache> caches = capture_all(transfer_ws, prompt);
            const HeadDatasets datasets = build_head_datasets(
                transfer_ws.model->config, caches, dataset_labels(transfer_ws), offset);
            const MetricGrid transfer = transfer_grid(grid, datasets);
            save_metric_grid_csv(transfer, transfer_out);
            if (!transfer_heatmap.empty()) emit_heatmap(transfer, transfer_heatmap);
            std::printf("transfer grid written to %s\n", transfer_out.c_str());
        } else if (sweep_cmd->parsed()) {
            sweep_ws.load();
            const EvalContext ctx = make_ctx(sweep_ws, sweep_honest, sweep_liar);
            const SweepResult sweep =
                layer_sweep(ctx, sweep_k, window_opt(sweep_window), sweep_ws.dataset);
            save_sweep_csv(sweep, sweep_out);
            std::printf("swept %zu start layers (baselines honest %.4f, liar %.4f)\n",
                        sweep.entries.size(), sweep.baseline_honest, sweep.baseline_liar);
        } else if (loo_cmd->parsed()) {
            loo_ws.load();
            const EvalContext ctx = make_ctx(loo_ws, loo_honest, loo_liar);
            const LooResult result = leave_one_out_search(
                ctx, parse_layer_list(loo_layers), loo_ws.dataset, window_opt(loo_window));
            save_loo_csv(result, loo_out);
            const HeadSelection selection = select_heads(result.impacts, loo_threshold);
            if (!loo_heads_out.empty()) {
                PatchSpec spec;
                spec.heads = selection.kept;
                spec.window = window_opt(loo_window);
                save_patch_spec(spec, loo_heads_out);
            }
            std::printf("full patch %.4f; %zu impactful, %zu inhibitory of %zu searched\n",
                        result.full_patch_accuracy, selection.kept.size(),
                        selection.inhibitory.size(), result.impacts.size());
        } else if (ph_cmd->parsed()) {
            ph_ws.load();
            const EvalContext ctx = make_ctx(ph_ws, ph_honest, ph_liar);
            const PatchSpec spec = load_patch_spec(ph_heads);
            const PositionWindow window =
                ph_window.empty() ? spec.window : window_opt(ph_window);
            const PatchDirection direction = ph_direction == "honest"
                                                 ? PatchDirection::honest_patched_with_liar
                                                 : PatchDirection::liar_patched_with_honest;
            const HeadPatchEval result =
                evaluate_head_patch(ctx, spec.heads, ph_ws.dataset, window, direction);
            emit_report({result.patched, result.baseline_honest, result.baseline_liar},
                        ph_out, ReportFormat::csv);
            std::printf("patched %.4f (honest %.4f, liar %.4f)\n", result.patched.accuracy,
                        result.baseline_honest.accuracy, result.baseline_liar.accuracy);
        } else if (attr_cmd->parsed()) {
            attr_ws.load();
            const PromptId prompt = PromptId::parse(attr_prompt);
            const AnswerTokens answers = answer_tokens(*attr_ws.vocab);
            AttributionReport mean;
            double total = 0.0;
            for (size_t i = 0; i < attr_ws.dataset.size(); ++i) {
                const Statement& s = attr_ws.dataset[i];
                const TokenSequence tokens =
                    tokenize(*attr_ws.vocab, compose_prompt(attr_ws.catalog, prompt, s));
                const int correct = s.label == 1 ? answers.true_token : answers.false_token;
                const int incorrect = s.label == 1 ? answers.false_token : answers.true_token;
                const AttributionReport one =
                    logit_attribution(*attr_ws.model, tokens, correct, incorrect);
                if (i == 0) mean = one;
                else
                    for (size_t c = 0; c < mean.per_component.size(); ++c)
                        mean.per_component[c].contribution += one.per_component[c].contribution;
                total += one.total;
            }
            const double n = static_cast<double>(attr_ws.dataset.size());
            for (auto& entry : mean.per_component) entry.contribution /= n;
            save_attribution_csv(mean, attr_out);
            std::printf("mean correct-minus-incorrect logit difference: %.4f over %zu\n",
                        total / n, attr_ws.dataset.size());
        } else if (leace_cmd->parsed()) {
            leace_ws.load();
            const std::vector<EraseSweepRow> rows = erasure_layer_sweep(
                *leace_ws.model, *leace_ws.vocab, leace_ws.catalog,
                PromptId::parse(leace_honest), PromptId::parse(leace_liar), leace_ws.dataset,
                leace_k, window_opt(leace_window), leace_ws.tau);
            save_erase_sweep_csv(rows, leace_out);
            std::printf("erasure sweep over %zu layer ranges written to %s\n", rows.size(),
                        leace_out.c_str());
        } else if (pos_cmd->parsed()) {
            pos_ws.load();
            const EvalContext ctx = make_ctx(pos_ws, pos_honest, pos_liar);
            const PatchSpec spec = load_patch_spec(pos_heads);
            const SweepResult sweep = position_sweep(ctx, spec.heads,
                                                     parse_window_list(pos_windows),
                                                     pos_ws.dataset);
            save_sweep_csv(sweep, pos_out);
            std::printf("swept %zu windows (baselines honest %.4f, liar %.4f)\n",
                        sweep.entries.size(), sweep.baseline_honest, sweep.baseline_liar);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
