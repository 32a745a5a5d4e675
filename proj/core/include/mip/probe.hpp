#pragma once

#include <string>
#include <vector>

#include "mip/activation.hpp"
#include "mip/model.hpp"
#include "mip/tensor.hpp"

namespace mip {

// Features are z activations of one (layer, head) at one position offset;
// labels are statement truth values.
struct ProbeDataset {
    Matrix features;          // n_examples x d_head
    std::vector<int> labels;  // 0/1, one per row

    void validate() const;  // shape agreement, finite features
};

struct ProbeMeta {
    std::string condition;  // prompt id the activations came from
    int layer = -1;
    int head = -1;
    int position_offset = 0;
};

struct Probe {
    std::vector<float> weights;
    float bias = 0.0f;
    ProbeMeta train_meta;
};

struct ProbeHyperparams {
    int steps = 2000;
    double lr = 0.1;
    double l2 = 1e-3;  // applied to weights only, not the bias
};

// Full-batch logistic-loss gradient descent from zero initialization, run
// for a fixed step count in double precision. Deterministic; training on
// flipped labels yields the exactly negated parameters (every operation
// involved is sign-symmetric in IEEE arithmetic). Throws DataError when a
// class is missing.
Probe train_probe(const ProbeDataset& data, const ProbeHyperparams& hyper = {});

// Fraction of examples whose prediction matches the label. Prediction is
// 1 iff w.x + b > 0; the p = 0.5 boundary (margin exactly zero) goes to
// class 0.
double probe_accuracy(const Probe& probe, const ProbeDataset& data);

// One probe (or metric value) per (layer, head).
struct ProbeGrid {
    int n_layers = 0;
    int n_heads = 0;
    std::vector<Probe> probes;  // row-major layer x head

    Probe& at(int layer, int head);
    const Probe& at(int layer, int head) const;
};

using MetricGrid = std::vector<std::vector<double>>;  // [layer][head]

// Per-(layer, head) feature matrices extracted from per-example caches at
// a fixed position offset from each run's final position.
struct HeadDatasets {
    int n_layers = 0;
    int n_heads = 0;
    std::vector<ProbeDataset> data;  // row-major layer x head

    ProbeDataset& at(int layer, int head);
    const ProbeDataset& at(int layer, int head) const;
};

// Gathers one feature row per cache. Every cache must hold all head_z
// sites at the resolved position (offset from that run's final position);
// a missing entry raises CoverageError.
HeadDatasets build_head_datasets(const ModelConfig& config,
                                 const std::vector<ActivationCache>& caches,
                                 const std::vector<int>& labels, int position_offset);

// Trains every head's probe independently with identical hyperparameters.
ProbeGrid train_grid(const ModelConfig& config, const std::vector<ActivationCache>& caches,
                     const std::vector<int>& labels, int position_offset,
                     const ProbeHyperparams& hyper = {}, const std::string& condition = "");

// grid[l][h] = accuracy of probes.at(l, h) on datasets.at(l, h).
MetricGrid transfer_grid(const ProbeGrid& probes, const HeadDatasets& datasets);

// In-distribution accuracy: each probe scored on its own training data.
MetricGrid accuracy_grid(const ProbeGrid& probes, const HeadDatasets& datasets);

// grid[l][h] = cosine of the two probes' weight vectors (bias excluded);
// pairs involving a zero vector map to 0.
MetricGrid cosine_grid(const ProbeGrid& a, const ProbeGrid& b);

// Binary probe-grid file, magic "MIPP": a key=value header (n_layers,
// n_heads, position_offset, condition) followed by per-probe tensor
// records probe.<layer>.<head>.weights and probe.<layer>.<head>.bias.
void save_probe_grid(const ProbeGrid& grid, int position_offset, const std::string& path);
ProbeGrid load_probe_grid(const std::string& path);

// Metric grid as CSV: one row per layer, one column per head.
void save_metric_grid_csv(const MetricGrid& grid, const std::string& path);

}  // namespace mip
