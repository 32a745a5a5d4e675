#pragma once

#include <string>
#include <vector>

#include "mip/activation.hpp"
#include "mip/harness.hpp"
#include "mip/model.hpp"
#include "mip/tensor.hpp"
#include "mip/tokenizer.hpp"

namespace mip {

// Oracle concept eraser: an affine-per-class map that makes the two
// class-conditional means coincide while removing as little as possible,
// measured in the covariance-whitened norm.
//
// Fit on features x with binary labels y:
//   cov      = global covariance + ridge*I   (ridge = 1e-6 * trace/dim)
//   W        = cov^(-1/2)                    (whitening)
//   u        = W * (mean1 - mean0), uhat = u/|u|
//   direction R = W^(-1) * uhat              (what gets removed)
//   detector  a = W * uhat                   (reads off the R coordinate; a.R = 1)
// Application with oracle label y:
//   x' = x - (a.(x - mean_y) + shift_y) * R,  shift_y = a.(mean_y - global_mean)
// which algebraically equals x - (a.(x - global_mean)) * R, so the map is a
// single oblique projection: idempotent, affine in x for fixed y, and both
// transformed class means land exactly on global_mean. Among single-direction
// mean-equalizing projections, removing the whitened direction minimizes the
// mean-squared perturbation in the whitened norm.
//
// Degenerate fits (single class present, or class means closer than
// ~1e-12 relative to the feature scale) yield an identity eraser.
struct Eraser {
    size_t dim = 0;
    bool identity = false;

    std::vector<double> mean0;        // class-conditional means on the fit data
    std::vector<double> mean1;
    std::vector<double> global_mean;
    std::vector<double> whitening;    // dim x dim row-major, W = cov^(-1/2)
    std::vector<double> direction;    // R: the component removed from x
    std::vector<double> detector;     // a: dual vector with a . R = 1
    double shift0 = 0.0;              // a . (mean0 - global_mean)
    double shift1 = 0.0;              // a . (mean1 - global_mean)

    // Where the eraser was fitted (metadata only; not used by apply).
    HookSite site{};
    PositionWindow window{};

    void validate() const;
};

// Fits the eraser on an n x d feature matrix with labels in {0, 1}.
// Throws DataError on an empty dataset, ValidationError on shape/label
// problems. A single-class or zero-gap fit returns an identity eraser.
Eraser fit_oracle_eraser(const Matrix& features, const std::vector<int>& labels);

// Applies the eraser using the oracle class label. Double in/out is the
// primary path; the float overload rounds the result for activation editing.
std::vector<double> apply_eraser(const Eraser& eraser, const std::vector<double>& x,
                                 int label);
std::vector<float> apply_eraser(const Eraser& eraser, const std::vector<float>& x,
                                int label);

// One erasure site inside a forward pass: a head's z output over a position
// window. Windows reaching before the first position are clamped to the
// sequence start, so "last 15 positions" on a 14-token run means the whole run.
struct ScrubTarget {
    HookSite site;                  // must be HookKind::head_z
    PositionWindow window;
    const Eraser* eraser = nullptr;
};

// Forward pass with every targeted activation replaced by its erased version
// before it is written back into the residual stream. Returns the full
// seq_len x vocab logits. Throws ValidationError for a missing eraser, a
// dimension mismatch, a non-head_z site, or two targets covering the same
// (layer, head, position).
Matrix scrubbed_forward(const Model& model, const TokenSequence& tokens,
                        const std::vector<ScrubTarget>& targets, int label);

// Fits one eraser per (layer, head) for every layer in `layers`, using head-z
// activations captured under `prompt` for each statement, pooled over the
// (clamped) position window. Labels are the statement truth labels. The
// returned erasers have site/window metadata filled in, in (layer, head)
// order matching `layers`.
std::vector<Eraser> fit_head_erasers(const Model& model, const Vocab& vocab,
                                     const PromptCatalog& catalog, const PromptId& prompt,
                                     const std::vector<Statement>& dataset,
                                     const std::vector<int>& layers,
                                     const PositionWindow& window);

// Builds scrub targets pointing at `erasers` (which must outlive the result).
std::vector<ScrubTarget> make_scrub_targets(const std::vector<Eraser>& erasers);

struct ScrubEval {
    double accuracy = 0.0;
    double unexpected_rate = 0.0;
    size_t n = 0;
};

// Evaluates answer accuracy under `prompt` with the given erasure applied,
// supplying each statement's own truth label to the erasers.
ScrubEval scrubbed_eval(const Model& model, const Vocab& vocab,
                        const PromptCatalog& catalog, const PromptId& prompt,
                        const std::vector<Statement>& dataset,
                        const std::vector<ScrubTarget>& targets, double tau = 0.5);

// One row of an erasure layer sweep: erase k consecutive layers starting at
// start_layer, then measure honest- and liar-condition accuracy.
struct EraseSweepRow {
    int start_layer = 0;
    double honest_accuracy = 0.0;
    double liar_accuracy = 0.0;
};

// Sweeps erasure over [start, start + k) layer ranges (erasers fitted on
// honest-condition activations) and reports both conditions' accuracy.
std::vector<EraseSweepRow> erasure_layer_sweep(
    const Model& model, const Vocab& vocab, const PromptCatalog& catalog,
    const PromptId& honest_prompt, const PromptId& liar_prompt,
    const std::vector<Statement>& dataset, int k, const PositionWindow& window,
    double tau = 0.5);

// CSV with header start_layer,honest_accuracy,liar_accuracy.
void save_erase_sweep_csv(const std::vector<EraseSweepRow>& rows, const std::string& path);

// Tensor-record serialization (magic MIPE). Vector data is stored as f32, so
// a loaded eraser matches the original only to float precision.
void save_eraser(const Eraser& eraser, const std::string& path);
Eraser load_eraser(const std::string& path);

}  // namespace mip
