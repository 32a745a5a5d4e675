#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mip/activation.hpp"
#include "mip/harness.hpp"
#include "mip/model.hpp"
#include "mip/tokenizer.hpp"

namespace mip {

// Shared inputs for the search procedures: the model under study plus the
// honest and liar prompt conditions being compared.
struct EvalContext {
    const Model* model = nullptr;
    const Vocab* vocab = nullptr;
    const PromptCatalog* catalog = nullptr;
    PromptId honest_prompt;
    PromptId liar_prompt;
    double tau = 0.5;  // unexpected-answer probability threshold

    void validate() const;
};

struct SweepEntry {
    std::string coordinate;  // start layer ("2") or window ("-5:0")
    double accuracy = 0.0;
};

struct SweepResult {
    std::vector<SweepEntry> entries;  // unique coordinates, sweep order
    double baseline_honest = 0.0;     // unpatched honest-condition accuracy
    double baseline_liar = 0.0;       // unpatched liar-condition accuracy
};

// For each start layer i, patches every head of layers [i, i+k) in the liar
// run with honest-run activations over `window` and records the accuracy.
SweepResult layer_sweep(const EvalContext& ctx, int k, const PositionWindow& window,
                        const std::vector<Statement>& dataset);

struct HeadImpact {
    std::pair<int, int> head;        // (layer, head)
    double accuracy_without = 0.0;   // full patch minus this head
    double delta = 0.0;              // accuracy_without - full_patch_accuracy
};

struct LooResult {
    double full_patch_accuracy = 0.0;  // all heads of the searched layers patched
    double baseline_honest = 0.0;
    double baseline_liar = 0.0;
    std::vector<HeadImpact> impacts;   // ordered by (layer, head)
};

// Leave-one-out head search: patch all heads of `layers` (liar patched with
// honest over `window`), then re-evaluate with each head excluded in turn.
// Every exclusion is measured against the single full-patch baseline on the
// same dataset subset.
LooResult leave_one_out_search(const EvalContext& ctx, const std::vector<int>& layers,
                               const std::vector<Statement>& subset,
                               const PositionWindow& window);

struct HeadSelection {
    std::set<std::pair<int, int>> kept;        // removal lowers accuracy: delta < -threshold
    std::set<std::pair<int, int>> inhibitory;  // removal raises accuracy: delta > threshold
};

// Splits impacts by the sign of their delta; |delta| <= threshold counts as
// no impact. The default tolerance absorbs float noise around exact zero.
HeadSelection select_heads(const std::vector<HeadImpact>& impacts, double threshold = 1e-9);

enum class PatchDirection {
    liar_patched_with_honest,
    honest_patched_with_liar,
};

struct HeadPatchEval {
    EvalReport patched;
    EvalReport baseline_honest;
    EvalReport baseline_liar;
};

// Evaluates a head-set patch in either direction, with both unpatched
// baselines. An empty head set degenerates to the unpatched target condition.
HeadPatchEval evaluate_head_patch(const EvalContext& ctx,
                                  const std::set<std::pair<int, int>>& heads,
                                  const std::vector<Statement>& dataset,
                                  const PositionWindow& window, PatchDirection direction);

// Patched-liar accuracy for each candidate window (coordinates are the
// window strings), with unpatched baselines.
SweepResult position_sweep(const EvalContext& ctx, const std::set<std::pair<int, int>>& heads,
                           const std::vector<PositionWindow>& windows,
                           const std::vector<Statement>& dataset);

// Every head of every listed layer, as a patchable head set.
std::set<std::pair<int, int>> all_heads_in_layers(const ModelConfig& config,
                                                  const std::vector<int>& layers);

// CSV with header coordinate,accuracy; baselines appear as coordinate rows
// baseline_honest / baseline_liar after the sweep entries.
void save_sweep_csv(const SweepResult& sweep, const std::string& path);

// Two-section CSV: a summary header/row (full_patch_accuracy,
// baseline_honest, baseline_liar) followed by per-head rows with header
// layer,head,accuracy_without,delta.
void save_loo_csv(const LooResult& result, const std::string& path);

}  // namespace mip
