#include "mip/probe.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mip/errors.hpp"
#include "mip/model_io.hpp"
#include "mip/parallel.hpp"

namespace mip {

void ProbeDataset::validate() const {
    if (features.rows != labels.size())
        throw ValidationError("probe dataset: feature rows != label count");
    if (!all_finite(features)) throw ValidationError("probe dataset: non-finite feature");
    for (int label : labels)
        if (label != 0 && label != 1)
            throw ValidationError("probe dataset: labels must be 0 or 1");
}

Probe train_probe(const ProbeDataset& data, const ProbeHyperparams& hyper) {
    data.validate();
    const size_t n = data.features.rows;
    const size_t d = data.features.cols;
    size_t n_pos = 0;
    for (int label : data.labels) n_pos += static_cast<size_t>(label);
    if (n_pos == 0 || n_pos == n)
        throw DataError("probe training needs both classes present");
    if (hyper.steps < 0 || !(hyper.lr > 0.0) || hyper.l2 < 0.0)
        throw ValidationError("probe hyperparameters out of range");

    // Labels enter as t = +-1 and the loss is sum log(1 + exp(-t m)) with
    // m = w.x + b. Every quantity below is odd or even in (t, w, b)
    // jointly, so flipping all labels negates the parameter trajectory
    // bit-for-bit (IEEE negation is exact).
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    std::vector<double> grad(d, 0.0);
    for (int step = 0; step < hyper.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const float* x = data.features.row(i);
            double m = b;
            for (size_t j = 0; j < d; ++j) m += w[j] * static_cast<double>(x[j]);
            const double t = data.labels[i] == 1 ? 1.0 : -1.0;
            const double s = 1.0 / (1.0 + std::exp(t * m));  // sigmoid(-t m)
            const double coeff = -t * s;
            for (size_t j = 0; j < d; ++j) grad[j] += coeff * static_cast<double>(x[j]);
            grad_b += coeff;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (size_t j = 0; j < d; ++j) {
            const double g = grad[j] * inv_n + hyper.l2 * w[j];
            w[j] -= hyper.lr * g;
        }
        b -= hyper.lr * (grad_b * inv_n);
    }

    Probe probe;
    probe.weights.resize(d);
    for (size_t j = 0; j < d; ++j) probe.weights[j] = static_cast<float>(w[j]);
    probe.bias = static_cast<float>(b);
    return probe;
}

double probe_accuracy(const Probe& probe, const ProbeDataset& data) {
    data.validate();
    if (probe.weights.size() != data.features.cols)
        throw ValidationError("probe dimension does not match features");
    size_t correct = 0;
    for (size_t i = 0; i < data.features.rows; ++i) {
        double m = static_cast<double>(probe.bias);
        const float* x = data.features.row(i);
        for (size_t j = 0; j < probe.weights.size(); ++j)
            m += static_cast<double>(probe.weights[j]) * static_cast<double>(x[j]);
        const int prediction = m > 0.0 ? 1 : 0;
        correct += prediction == data.labels[i] ? 1 : 0;
    }
    if (data.features.rows == 0) throw DataError("probe accuracy over empty dataset");
    return static_cast<double>(correct) / static_cast<double>(data.features.rows);
}

namespace {

size_t grid_index(int n_heads, int layer, int head) {
    return static_cast<size_t>(layer) * static_cast<size_t>(n_heads) + static_cast<size_t>(head);
}

void check_grid_coord(int n_layers, int n_heads, int layer, int head) {
    if (layer < 0 || layer >= n_layers || head < 0 || head >= n_heads)
        throw BoundsError("grid coordinate (" + std::to_string(layer) + ", " +
                          std::to_string(head) + ") out of range");
}

}  // namespace

Probe& ProbeGrid::at(int layer, int head) {
    check_grid_coord(n_layers, n_heads, layer, head);
    return probes[grid_index(n_heads, layer, head)];
}

const Probe& ProbeGrid::at(int layer, int head) const {
    check_grid_coord(n_layers, n_heads, layer, head);
    return probes[grid_index(n_heads, layer, head)];
}

ProbeDataset& HeadDatasets::at(int layer, int head) {
    check_grid_coord(n_layers, n_heads, layer, head);
    return data[grid_index(n_heads, layer, head)];
}

const ProbeDataset& HeadDatasets::at(int layer, int head) const {
    check_grid_coord(n_layers, n_heads, layer, head);
    return data[grid_index(n_heads, layer, head)];
}

HeadDatasets build_head_datasets(const ModelConfig& config,
                                 const std::vector<ActivationCache>& caches,
                                 const std::vector<int>& labels, int position_offset) {
    if (caches.size() != labels.size())
        throw ValidationError("cache count does not match label count");
    if (caches.empty()) throw DataError("no caches to build head datasets from");
    if (position_offset > 0)
        throw ValidationError("position offset counts back from the final position; must be <= 0");

    HeadDatasets out;
    out.n_layers = config.n_layers;
    out.n_heads = config.n_heads;
    out.data.assign(static_cast<size_t>(config.n_layers) * config.n_heads, ProbeDataset{});
    for (auto& ds : out.data) {
        ds.features = Matrix(caches.size(), static_cast<size_t>(config.d_head));
        ds.labels = labels;
    }

    for (size_t i = 0; i < caches.size(); ++i) {
        const int position = caches[i].meta.seq_len - 1 + position_offset;
        if (position < 0)
            throw BoundsError("position offset " + std::to_string(position_offset) +
                              " reaches before the start of a " +
                              std::to_string(caches[i].meta.seq_len) + "-token run");
        for (int layer = 0; layer < config.n_layers; ++layer) {
            for (int head = 0; head < config.n_heads; ++head) {
                const std::vector<float>& z = caches[i].at({head_z_site(layer, head), position});
                if (z.size() != static_cast<size_t>(config.d_head))
                    throw ValidationError("cached z has unexpected dimension");
                float* row = out.at(layer, head).features.row(i);
                std::copy(z.begin(), z.end(), row);
            }
        }
    }
    return out;
}

ProbeGrid train_grid(const ModelConfig& config, const std::vector<ActivationCache>& caches,
                     const std::vector<int>& labels, int position_offset,
                     const ProbeHyperparams& hyper, const std::string& condition) {
    const HeadDatasets datasets = build_head_datasets(config, caches, labels, position_offset);
    ProbeGrid grid;
    grid.n_layers = config.n_layers;
    grid.n_heads = config.n_heads;
    grid.probes.assign(datasets.data.size(), Probe{});
    parallel_for(datasets.data.size(), [&](size_t i) {
        grid.probes[i] = train_probe(datasets.data[i], hyper);
        const int layer = static_cast<int>(i) / config.n_heads;
        const int head = static_cast<int>(i) % config.n_heads;
        grid.probes[i].train_meta = {condition, layer, head, position_offset};
    });
    return grid;
}

MetricGrid transfer_grid(const ProbeGrid& probes, const HeadDatasets& datasets) {
    if (probes.n_layers != datasets.n_layers || probes.n_heads != datasets.n_heads)
        throw ValidationError("probe grid and datasets have different geometry");
    MetricGrid grid(static_cast<size_t>(probes.n_layers),
                    std::vector<double>(static_cast<size_t>(probes.n_heads), 0.0));
    for (int layer = 0; layer < probes.n_layers; ++layer)
        for (int head = 0; head < probes.n_heads; ++head)
            grid[static_cast<size_t>(layer)][static_cast<size_t>(head)] =
                probe_accuracy(probes.at(layer, head), datasets.at(layer, head));
    return grid;
}

MetricGrid accuracy_grid(const ProbeGrid& probes, const HeadDatasets& datasets) {
    return transfer_grid(probes, datasets);
}

MetricGrid cosine_grid(const ProbeGrid& a, const ProbeGrid& b) {
    if (a.n_layers != b.n_layers || a.n_heads != b.n_heads)
        throw ValidationError("probe grids have different geometry");
    MetricGrid grid(static_cast<size_t>(a.n_layers),
                    std::vector<double>(static_cast<size_t>(a.n_heads), 0.0));
    for (int layer = 0; layer < a.n_layers; ++layer) {
        for (int head = 0; head < a.n_heads; ++head) {
            const Probe& pa = a.at(layer, head);
            const Probe& pb = b.at(layer, head);
            if (pa.weights.size() != pb.weights.size())
                throw ValidationError("probe weight dimensions differ");
            const double na = l2_norm(pa.weights);
            const double nb = l2_norm(pb.weights);
            grid[static_cast<size_t>(layer)][static_cast<size_t>(head)] =
                na > 0.0 && nb > 0.0 ? dot_f64(pa.weights, pb.weights) / (na * nb) : 0.0;
        }
    }
    return grid;
}

namespace {
constexpr char kProbeMagic[4] = {'M', 'I', 'P', 'P'};
}

void save_probe_grid(const ProbeGrid& grid, int position_offset, const std::string& path) {
    std::string header;
    header += header_line("n_layers", static_cast<long long>(grid.n_layers));
    header += header_line("n_heads", static_cast<long long>(grid.n_heads));
    header += header_line("position_offset", static_cast<long long>(position_offset));
    std::string condition;
    if (!grid.probes.empty()) condition = grid.probes.front().train_meta.condition;
    header += "condition=" + condition + "\n";

    std::vector<TensorRecord> records;
    for (int layer = 0; layer < grid.n_layers; ++layer) {
        for (int head = 0; head < grid.n_heads; ++head) {
            const Probe& probe = grid.at(layer, head);
            const std::string base =
                "probe." + std::to_string(layer) + "." + std::to_string(head);
            records.push_back({base + ".weights", {probe.weights.size()}, probe.weights});
            records.push_back({base + ".bias", {1}, {probe.bias}});
        }
    }
    write_record_file(path, kProbeMagic, 1, header, records);
}

ProbeGrid load_probe_grid(const std::string& path) {
    const RecordFile file = read_record_file(path, kProbeMagic, 1);
    ProbeGrid grid;
    int position_offset = 0;
    std::string condition;
    for (const auto& [key, value] : parse_header(file.header)) {
        try {
            if (key == "n_layers") grid.n_layers = std::stoi(value);
            else if (key == "n_heads") grid.n_heads = std::stoi(value);
            else if (key == "position_offset") position_offset = std::stoi(value);
            else if (key == "condition") condition = value;
            else throw FormatError(path + ": unknown header key " + key);
        } catch (const std::invalid_argument&) {
            throw FormatError(path + ": unparsable header value for " + key);
        }
    }
    if (grid.n_layers <= 0 || grid.n_heads <= 0)
        throw FormatError(path + ": missing or invalid grid geometry");
    grid.probes.assign(static_cast<size_t>(grid.n_layers) * grid.n_heads, Probe{});

    for (const TensorRecord& rec : file.records) {
        if (rec.name.rfind("probe.", 0) != 0)
            throw FormatError(path + ": unknown tensor " + rec.name);
        const size_t dot1 = rec.name.find('.', 6);
        const size_t dot2 = dot1 == std::string::npos ? std::string::npos
                                                      : rec.name.find('.', dot1 + 1);
        if (dot2 == std::string::npos)
            throw FormatError(path + ": malformed tensor name " + rec.name);
        int layer, head;
        try {
            layer = std::stoi(rec.name.substr(6, dot1 - 6));
            head = std::stoi(rec.name.substr(dot1 + 1, dot2 - dot1 - 1));
        } catch (const std::exception&) {
            throw FormatError(path + ": malformed tensor name " + rec.name);
        }
        Probe& probe = grid.at(layer, head);
        const std::string field = rec.name.substr(dot2 + 1);
        if (field == "weights") {
            probe.weights = rec.data;
        } else if (field == "bias") {
            if (rec.data.size() != 1) throw FormatError(path + ": bias record must be scalar");
            probe.bias = rec.data.front();
        } else {
            throw FormatError(path + ": unknown probe field " + field);
        }
        probe.train_meta = {condition, layer, head, position_offset};
    }
    return grid;
}

void save_metric_grid_csv(const MetricGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    char buf[48];
    for (const auto& row : grid) {
        for (size_t c = 0; c < row.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", row[c]);
            out << buf << (c + 1 < row.size() ? "," : "\n");
        }
    }
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

}  // namespace mip
