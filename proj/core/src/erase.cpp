#include "mip/erase.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "mip/errors.hpp"
#include "mip/forward.hpp"
#include "mip/linalg.hpp"
#include "mip/model_io.hpp"
#include "mip/parallel.hpp"
#include "engine.hpp"

namespace mip {

namespace {

bool finite_vec(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double dot_d(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

void Eraser::validate() const {
    if (dim == 0) throw ValidationError("eraser has zero dimension");
    if (mean0.size() != dim || mean1.size() != dim || global_mean.size() != dim)
        throw ValidationError("eraser mean vectors do not match its dimension");
    if (!finite_vec(mean0) || !finite_vec(mean1) || !finite_vec(global_mean))
        throw ValidationError("eraser means contain non-finite values");
    if (identity) return;
    if (whitening.size() != dim * dim)
        throw ValidationError("eraser whitening matrix does not match its dimension");
    if (direction.size() != dim || detector.size() != dim)
        throw ValidationError("eraser direction/detector do not match its dimension");
    if (!finite_vec(whitening) || !finite_vec(direction) || !finite_vec(detector) ||
        !std::isfinite(shift0) || !std::isfinite(shift1))
        throw ValidationError("eraser parameters contain non-finite values");
}

Eraser fit_oracle_eraser(const Matrix& features, const std::vector<int>& labels) {
    const size_t n = features.rows;
    const size_t d = features.cols;
    if (n == 0 || d == 0) throw DataError("eraser fit: empty feature matrix");
    if (labels.size() != n) throw ValidationError("eraser fit: label count mismatch");
    if (!all_finite(features)) throw ValidationError("eraser fit: non-finite feature");
    size_t n1 = 0;
    for (int label : labels) {
        if (label != 0 && label != 1) throw ValidationError("eraser fit: labels must be 0 or 1");
        n1 += static_cast<size_t>(label);
    }
    const size_t n0 = n - n1;

    Eraser eraser;
    eraser.dim = d;
    eraser.mean0.assign(d, 0.0);
    eraser.mean1.assign(d, 0.0);
    eraser.global_mean.assign(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const float* x = features.row(i);
        std::vector<double>& m = labels[i] == 1 ? eraser.mean1 : eraser.mean0;
        for (size_t j = 0; j < d; ++j) m[j] += static_cast<double>(x[j]);
    }
    for (size_t j = 0; j < d; ++j) {
        eraser.global_mean[j] = (eraser.mean0[j] + eraser.mean1[j]) / static_cast<double>(n);
        if (n0 > 0) eraser.mean0[j] /= static_cast<double>(n0);
        if (n1 > 0) eraser.mean1[j] /= static_cast<double>(n1);
    }
    if (n0 == 0) eraser.mean0 = eraser.global_mean;
    if (n1 == 0) eraser.mean1 = eraser.global_mean;

    // Nothing to erase when only one class is present or the class means
    // already coincide (relative to the feature scale).
    double scale = 1.0;
    double gap_sq = 0.0;
    for (size_t j = 0; j < d; ++j) {
        scale = std::max({scale, std::fabs(eraser.mean0[j]), std::fabs(eraser.mean1[j])});
        const double g = eraser.mean1[j] - eraser.mean0[j];
        gap_sq += g * g;
    }
    if (n0 == 0 || n1 == 0 || std::sqrt(gap_sq) <= 1e-12 * scale) {
        eraser.identity = true;
        return eraser;
    }

    // Global covariance with a small ridge so rank-deficient toy data still
    // whitens; then W = cov^(-1/2) and its inverse from one eigendecomposition.
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    std::vector<double> centered(d);
    for (size_t i = 0; i < n; ++i) {
        const float* x = features.row(i);
        for (size_t j = 0; j < d; ++j)
            centered[j] = static_cast<double>(x[j]) - eraser.global_mean[j];
        for (size_t r = 0; r < d; ++r)
            for (size_t c = r; c < d; ++c) cov[r][c] += centered[r] * centered[c];
    }
    double trace = 0.0;
    for (size_t r = 0; r < d; ++r) {
        for (size_t c = r; c < d; ++c) {
            cov[r][c] /= static_cast<double>(n);
            cov[c][r] = cov[r][c];
        }
        trace += cov[r][r];
    }
    const double ridge = trace > 0.0 ? 1e-6 * trace / static_cast<double>(d) : 1e-12;
    for (size_t r = 0; r < d; ++r) cov[r][r] += ridge;

    const EigenDecomposition eig = eigen_symmetric(cov);
    for (double value : eig.values)
        if (!(value > 0.0))
            throw ValidationError("eraser fit: covariance not positive definite after ridge");

    eraser.whitening.assign(d * d, 0.0);
    std::vector<double> inv_sqrt(d * d, 0.0);  // W^(-1) = cov^(1/2)
    for (size_t k = 0; k < d; ++k) {
        const double wk = 1.0 / std::sqrt(eig.values[k]);
        const double ik = std::sqrt(eig.values[k]);
        const std::vector<double>& v = eig.vectors[k];
        for (size_t r = 0; r < d; ++r) {
            for (size_t c = 0; c < d; ++c) {
                eraser.whitening[r * d + c] += wk * v[r] * v[c];
                inv_sqrt[r * d + c] += ik * v[r] * v[c];
            }
        }
    }

    std::vector<double> delta(d);
    for (size_t j = 0; j < d; ++j) delta[j] = eraser.mean1[j] - eraser.mean0[j];
    std::vector<double> u(d, 0.0);
    for (size_t r = 0; r < d; ++r)
        for (size_t c = 0; c < d; ++c) u[r] += eraser.whitening[r * d + c] * delta[c];
    const double u_norm = std::sqrt(dot_d(u, u));
    if (!(u_norm > 0.0)) {
        eraser.identity = true;
        eraser.whitening.clear();
        return eraser;
    }
    for (size_t j = 0; j < d; ++j) u[j] /= u_norm;

    eraser.direction.assign(d, 0.0);
    eraser.detector.assign(d, 0.0);
    for (size_t r = 0; r < d; ++r) {
        for (size_t c = 0; c < d; ++c) {
            eraser.direction[r] += inv_sqrt[r * d + c] * u[c];
            eraser.detector[r] += eraser.whitening[r * d + c] * u[c];
        }
    }
    std::vector<double> offset0(d), offset1(d);
    for (size_t j = 0; j < d; ++j) {
        offset0[j] = eraser.mean0[j] - eraser.global_mean[j];
        offset1[j] = eraser.mean1[j] - eraser.global_mean[j];
    }
    eraser.shift0 = dot_d(eraser.detector, offset0);
    eraser.shift1 = dot_d(eraser.detector, offset1);
    eraser.validate();
    return eraser;
}

std::vector<double> apply_eraser(const Eraser& eraser, const std::vector<double>& x,
                                 int label) {
    eraser.validate();
    if (x.size() != eraser.dim) throw ValidationError("apply_eraser: dimension mismatch");
    if (label != 0 && label != 1) throw ValidationError("apply_eraser: label must be 0 or 1");
    if (eraser.identity) return x;
    const std::vector<double>& mean_y = label == 1 ? eraser.mean1 : eraser.mean0;
    const double shift_y = label == 1 ? eraser.shift1 : eraser.shift0;
    double proj = shift_y;
    for (size_t j = 0; j < eraser.dim; ++j)
        proj += eraser.detector[j] * (x[j] - mean_y[j]);
    std::vector<double> out(eraser.dim);
    for (size_t j = 0; j < eraser.dim; ++j) out[j] = x[j] - proj * eraser.direction[j];
    return out;
}

std::vector<float> apply_eraser(const Eraser& eraser, const std::vector<float>& x,
                                int label) {
    std::vector<double> xd(x.begin(), x.end());
    const std::vector<double> yd = apply_eraser(eraser, xd, label);
    std::vector<float> out(yd.size());
    for (size_t j = 0; j < yd.size(); ++j) out[j] = static_cast<float>(yd[j]);
    return out;
}

namespace {

// Raises the window start so the first covered position exists. Returns an
// empty window when the whole window precedes the sequence.
PositionWindow clamp_window(PositionWindow window, int seq_len) {
    window.validate();
    if (window.is_empty()) return window;
    const int min_offset = 1 - seq_len;
    if (window.end_offset < min_offset) return {window.end_offset + 1, window.end_offset};
    window.start_offset = std::max(window.start_offset, min_offset);
    return window;
}

}  // namespace

Matrix scrubbed_forward(const Model& model, const TokenSequence& tokens,
                        const std::vector<ScrubTarget>& targets, int label) {
    tokens.validate(model.config);
    if (label != 0 && label != 1) throw ValidationError("scrubbed_forward: label must be 0 or 1");
    const int seq_len = static_cast<int>(tokens.tokens.size());

    std::map<detail::ZKey, const Eraser*> plan;
    for (const ScrubTarget& target : targets) {
        if (target.eraser == nullptr)
            throw ValidationError("scrubbed_forward: target without a fitted eraser");
        target.eraser->validate();
        if (target.site.kind != HookKind::head_z)
            throw ValidationError("scrubbed_forward: erasure targets head_z sites only");
        target.site.validate(model.config);
        if (target.eraser->dim != static_cast<size_t>(model.config.d_head))
            throw ValidationError("scrubbed_forward: eraser dimension does not match d_head");
        const PositionWindow window = clamp_window(target.window, seq_len);
        if (window.is_empty()) continue;
        const auto [first, last] = window.resolve(seq_len);
        for (int pos = first; pos <= last; ++pos) {
            const detail::ZKey key{target.site.layer, target.site.head, pos};
            if (!plan.emplace(key, target.eraser).second)
                throw ValidationError("scrubbed_forward: two erasers target layer " +
                                      std::to_string(target.site.layer) + ", head " +
                                      std::to_string(target.site.head) + ", position " +
                                      std::to_string(pos));
        }
    }

    detail::ZHooks hooks;
    std::vector<double> buf(static_cast<size_t>(model.config.d_head));
    hooks.scrub = [&](int layer, int head, int position, float* z) {
        const auto it = plan.find(detail::ZKey{layer, head, position});
        if (it == plan.end()) return;
        const Eraser& eraser = *it->second;
        for (size_t j = 0; j < eraser.dim; ++j) buf[j] = static_cast<double>(z[j]);
        const std::vector<double> out = apply_eraser(eraser, buf, label);
        for (size_t j = 0; j < eraser.dim; ++j) z[j] = static_cast<float>(out[j]);
    };
    return detail::run_transformer(model, tokens, {}, nullptr, &hooks);
}

std::vector<Eraser> fit_head_erasers(const Model& model, const Vocab& vocab,
                                     const PromptCatalog& catalog, const PromptId& prompt,
                                     const std::vector<Statement>& dataset,
                                     const std::vector<int>& layers,
                                     const PositionWindow& window) {
    if (dataset.empty()) throw DataError("eraser fit: empty dataset");
    window.validate();
    if (window.is_empty()) throw ValidationError("eraser fit: empty position window");
    for (int layer : layers)
        if (layer < 0 || layer >= model.config.n_layers)
            throw BoundsError("eraser fit: layer " + std::to_string(layer) + " out of range");

    std::vector<HookSite> sites;
    for (int layer : layers)
        for (int head = 0; head < model.config.n_heads; ++head)
            sites.push_back(head_z_site(layer, head));

    // Capture every statement's run once, then pool windowed z rows per head.
    std::vector<ActivationCache> caches(dataset.size());
    std::vector<std::string> errors(dataset.size());
    parallel_for(dataset.size(), [&](size_t i) {
        try {
            const TokenSequence tokens =
                tokenize(vocab, compose_prompt(catalog, prompt, dataset[i]));
            caches[i] = capture(model, tokens, sites);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (size_t i = 0; i < dataset.size(); ++i)
        if (!errors[i].empty())
            throw DataError("eraser fit: statement " + std::to_string(i) + " failed: " +
                            errors[i]);

    size_t total_rows = 0;
    for (const ActivationCache& cache : caches) {
        const PositionWindow w = clamp_window(window, cache.meta.seq_len);
        if (!w.is_empty()) {
            const auto [first, last] = w.resolve(cache.meta.seq_len);
            total_rows += static_cast<size_t>(last - first + 1);
        }
    }
    if (total_rows == 0) throw DataError("eraser fit: window covers no positions");

    std::vector<Eraser> erasers;
    erasers.reserve(sites.size());
    for (const HookSite& site : sites) {
        Matrix features(total_rows, static_cast<size_t>(model.config.d_head));
        std::vector<int> labels;
        labels.reserve(total_rows);
        size_t row = 0;
        for (size_t i = 0; i < caches.size(); ++i) {
            const PositionWindow w = clamp_window(window, caches[i].meta.seq_len);
            if (w.is_empty()) continue;
            const auto [first, last] = w.resolve(caches[i].meta.seq_len);
            for (int pos = first; pos <= last; ++pos) {
                const std::vector<float>& z = caches[i].at({site, pos});
                std::copy(z.begin(), z.end(), features.row(row));
                labels.push_back(dataset[i].label);
                ++row;
            }
        }
        Eraser eraser = fit_oracle_eraser(features, labels);
        eraser.site = site;
        eraser.window = window;
        erasers.push_back(std::move(eraser));
    }
    return erasers;
}

std::vector<ScrubTarget> make_scrub_targets(const std::vector<Eraser>& erasers) {
    std::vector<ScrubTarget> targets;
    targets.reserve(erasers.size());
    for (const Eraser& eraser : erasers)
        targets.push_back({eraser.site, eraser.window, &eraser});
    return targets;
}

ScrubEval scrubbed_eval(const Model& model, const Vocab& vocab,
                        const PromptCatalog& catalog, const PromptId& prompt,
                        const std::vector<Statement>& dataset,
                        const std::vector<ScrubTarget>& targets, double tau) {
    if (dataset.empty()) throw DataError("scrubbed_eval: empty dataset");
    const AnswerTokens answers = answer_tokens(vocab);

    struct Outcome {
        bool ok = false;
        bool correct = false;
        bool unexpected = false;
        std::string error;
    };
    std::vector<Outcome> outcomes(dataset.size());
    parallel_for(dataset.size(), [&](size_t i) {
        Outcome& out = outcomes[i];
        try {
            const TokenSequence tokens =
                tokenize(vocab, compose_prompt(catalog, prompt, dataset[i]));
            const Matrix logits = scrubbed_forward(model, tokens, targets, dataset[i].label);
            const auto [p_true, p_false] = next_token_answer(
                logits.row(logits.rows - 1), static_cast<size_t>(model.config.vocab_size),
                answers.true_token, answers.false_token);
            const int prediction = p_true > p_false ? 1 : 0;
            out.correct = prediction == dataset[i].label;
            out.unexpected = p_true + p_false < tau;
            out.ok = true;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    });

    ScrubEval eval;
    eval.n = dataset.size();
    size_t failed = 0;
    std::string first_error;
    size_t correct = 0, unexpected = 0;
    for (const Outcome& out : outcomes) {
        if (!out.ok) {
            ++failed;
            if (first_error.empty()) first_error = out.error;
            continue;
        }
        correct += out.correct ? 1 : 0;
        unexpected += out.unexpected ? 1 : 0;
    }
    if (failed > 0)
        throw DataError("scrubbed_eval: " + std::to_string(failed) +
                        " statement(s) failed; first error: " + first_error);
    eval.accuracy = static_cast<double>(correct) / static_cast<double>(eval.n);
    eval.unexpected_rate = static_cast<double>(unexpected) / static_cast<double>(eval.n);
    return eval;
}

std::vector<EraseSweepRow> erasure_layer_sweep(
    const Model& model, const Vocab& vocab, const PromptCatalog& catalog,
    const PromptId& honest_prompt, const PromptId& liar_prompt,
    const std::vector<Statement>& dataset, int k, const PositionWindow& window,
    double tau) {
    if (k <= 0) throw ValidationError("erasure sweep: k must be positive");
    k = std::min(k, model.config.n_layers);
    std::vector<EraseSweepRow> rows;
    for (int start = 0; start + k <= model.config.n_layers; ++start) {
        std::vector<int> layers(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) layers[static_cast<size_t>(i)] = start + i;
        const std::vector<Eraser> erasers =
            fit_head_erasers(model, vocab, catalog, honest_prompt, dataset, layers, window);
        const std::vector<ScrubTarget> targets = make_scrub_targets(erasers);
        EraseSweepRow row;
        row.start_layer = start;
        row.honest_accuracy =
            scrubbed_eval(model, vocab, catalog, honest_prompt, dataset, targets, tau).accuracy;
        row.liar_accuracy =
            scrubbed_eval(model, vocab, catalog, liar_prompt, dataset, targets, tau).accuracy;
        rows.push_back(row);
    }
    return rows;
}

void save_erase_sweep_csv(const std::vector<EraseSweepRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "start_layer,honest_accuracy,liar_accuracy\n";
    char buf[96];
    for (const EraseSweepRow& row : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.4f,%.4f\n", row.start_layer,
                      row.honest_accuracy, row.liar_accuracy);
        out << buf;
    }
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

namespace {
constexpr char kEraserMagic[4] = {'M', 'I', 'P', 'E'};

std::string double_line(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return key + "=" + buf + "\n";
}

std::vector<float> to_f32(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

std::vector<double> to_f64(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}
}  // namespace

void save_eraser(const Eraser& eraser, const std::string& path) {
    eraser.validate();
    std::string header;
    header += header_line("dim", static_cast<long long>(eraser.dim));
    header += header_line("identity", static_cast<long long>(eraser.identity ? 1 : 0));
    header += double_line("shift0", eraser.shift0);
    header += double_line("shift1", eraser.shift1);
    header += "site_kind=" + std::string(hook_kind_name(eraser.site.kind)) + "\n";
    header += header_line("site_layer", static_cast<long long>(eraser.site.layer));
    header += header_line("site_head", static_cast<long long>(eraser.site.head));
    header += header_line("window_start", static_cast<long long>(eraser.window.start_offset));
    header += header_line("window_end", static_cast<long long>(eraser.window.end_offset));

    std::vector<TensorRecord> records;
    const size_t d = eraser.dim;
    records.push_back({"mean0", {d}, to_f32(eraser.mean0)});
    records.push_back({"mean1", {d}, to_f32(eraser.mean1)});
    records.push_back({"global_mean", {d}, to_f32(eraser.global_mean)});
    if (!eraser.identity) {
        records.push_back({"whitening", {d, d}, to_f32(eraser.whitening)});
        records.push_back({"direction", {d}, to_f32(eraser.direction)});
        records.push_back({"detector", {d}, to_f32(eraser.detector)});
    }
    write_record_file(path, kEraserMagic, 1, header, records);
}

Eraser load_eraser(const std::string& path) {
    const RecordFile file = read_record_file(path, kEraserMagic, 1);
    Eraser eraser;
    std::string site_kind;
    for (const auto& [key, value] : parse_header(file.header)) {
        try {
            if (key == "dim") eraser.dim = static_cast<size_t>(std::stoull(value));
            else if (key == "identity") eraser.identity = std::stoi(value) != 0;
            else if (key == "shift0") eraser.shift0 = std::stod(value);
            else if (key == "shift1") eraser.shift1 = std::stod(value);
            else if (key == "site_kind") site_kind = value;
            else if (key == "site_layer") eraser.site.layer = std::stoi(value);
            else if (key == "site_head") eraser.site.head = std::stoi(value);
            else if (key == "window_start") eraser.window.start_offset = std::stoi(value);
            else if (key == "window_end") eraser.window.end_offset = std::stoi(value);
            else throw FormatError(path + ": unknown header key " + key);
        } catch (const std::invalid_argument&) {
            throw FormatError(path + ": unparsable header value for " + key);
        } catch (const std::out_of_range&) {
            throw FormatError(path + ": header value out of range for " + key);
        }
    }
    if (!site_kind.empty()) {
        bool found = false;
        for (HookKind kind : {HookKind::head_z, HookKind::attn_out, HookKind::mlp_out,
                              HookKind::resid_pre, HookKind::resid_post}) {
            if (site_kind == hook_kind_name(kind)) {
                eraser.site.kind = kind;
                found = true;
                break;
            }
        }
        if (!found) throw FormatError(path + ": unknown site kind " + site_kind);
    }
    for (const TensorRecord& rec : file.records) {
        if (rec.name == "mean0") eraser.mean0 = to_f64(rec.data);
        else if (rec.name == "mean1") eraser.mean1 = to_f64(rec.data);
        else if (rec.name == "global_mean") eraser.global_mean = to_f64(rec.data);
        else if (rec.name == "whitening") eraser.whitening = to_f64(rec.data);
        else if (rec.name == "direction") eraser.direction = to_f64(rec.data);
        else if (rec.name == "detector") eraser.detector = to_f64(rec.data);
        else throw FormatError(path + ": unknown tensor " + rec.name);
    }
    eraser.validate();
    return eraser;
}

}  // namespace mip
