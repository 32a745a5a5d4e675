// Microbenchmarks for the hot paths: plain and patched forward passes,
// activation capture, probe training, eraser fitting, and tokenization.
// All fixtures are deterministic so runs are comparable across machines.

#include <benchmark/benchmark.h>

#include <utility>
#include <vector>

#include "mip/activation.hpp"
#include "mip/erase.hpp"
#include "mip/forward.hpp"
#include "mip/harness.hpp"
#include "mip/probe.hpp"
#include "mip/rng.hpp"
#include "mip/tokenizer.hpp"
#include "mip/truth_bit.hpp"

namespace {

struct Fixture {
    mip::ModelConfig cfg = mip::truth_bit_config();
    mip::Model model = mip::build_truth_bit_model(cfg);
    mip::Vocab vocab = mip::truth_bit_vocab();
    mip::PromptCatalog catalog = mip::truth_bit_catalog();
    mip::Statement statement = mip::truth_bit_dataset(1).front();
    std::string dialog =
        mip::compose_prompt(catalog, mip::PromptId::parse("1ai"), statement);
    mip::TokenSequence tokens = mip::tokenize(vocab, dialog);
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void bm_forward(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        const mip::Matrix logits = mip::forward(f.model, f.tokens).logits;
        benchmark::DoNotOptimize(logits.data.data());
    }
}
BENCHMARK(bm_forward);

void bm_capture_all_head_z(benchmark::State& state) {
    const Fixture& f = fixture();
    const std::vector<mip::HookSite> sites = mip::all_head_z_sites(f.cfg);
    for (auto _ : state) {
        const mip::ActivationCache cache = mip::capture(f.model, f.tokens, sites);
        benchmark::DoNotOptimize(cache.size());
    }
}
BENCHMARK(bm_capture_all_head_z);

void bm_patched_forward(benchmark::State& state) {
    const Fixture& f = fixture();
    const mip::CarrierLocation carrier;
    const mip::ActivationCache cache =
        mip::capture(f.model, f.tokens, {mip::head_z_site(carrier.layer, carrier.head)});
    mip::PatchSpec spec;
    spec.heads = {{carrier.layer, carrier.head}};
    spec.window = {mip::kTruthBitFactOffset, mip::kTruthBitFactOffset};
    spec.source = &cache;
    for (auto _ : state) {
        const mip::Matrix logits = mip::patched_forward(f.model, f.tokens, spec);
        benchmark::DoNotOptimize(logits.data.data());
    }
}
BENCHMARK(bm_patched_forward);

void bm_tokenize_dialog(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) {
        const mip::TokenSequence tokens = mip::tokenize(f.vocab, f.dialog);
        benchmark::DoNotOptimize(tokens.tokens.data());
    }
}
BENCHMARK(bm_tokenize_dialog);

mip::ProbeDataset blob_dataset(int n, int d) {
    mip::Rng rng(42);
    mip::ProbeDataset data;
    data.features = mip::Matrix(static_cast<size_t>(n), static_cast<size_t>(d));
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        data.labels.push_back(label);
        for (int j = 0; j < d; ++j)
            data.features.at(static_cast<size_t>(i), static_cast<size_t>(j)) =
                static_cast<float>((label == 1 ? 1.0 : -1.0) * (j == 0 ? 2.0 : 0.0) +
                                   0.5 * rng.normal());
    }
    return data;
}

void bm_train_probe(benchmark::State& state) {
    const mip::ProbeDataset data = blob_dataset(256, 16);
    for (auto _ : state) {
        const mip::Probe probe = mip::train_probe(data);
        benchmark::DoNotOptimize(probe.weights.data());
    }
}
BENCHMARK(bm_train_probe);

void bm_fit_eraser(benchmark::State& state) {
    const mip::ProbeDataset data = blob_dataset(1000, 16);
    for (auto _ : state) {
        const mip::Eraser eraser = mip::fit_oracle_eraser(data.features, data.labels);
        benchmark::DoNotOptimize(eraser.direction.data());
    }
}
BENCHMARK(bm_fit_eraser);

void bm_evaluate_condition(benchmark::State& state) {
    const Fixture& f = fixture();
    const std::vector<mip::Statement> dataset = mip::truth_bit_dataset(16);
    for (auto _ : state) {
        const mip::EvalReport report = mip::evaluate(
            f.model, f.vocab, f.catalog, mip::PromptId::parse("1ai"), dataset);
        benchmark::DoNotOptimize(report.accuracy);
    }
}
BENCHMARK(bm_evaluate_condition);

}  // namespace

BENCHMARK_MAIN();
