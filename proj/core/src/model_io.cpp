#include "mip/model_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mip/errors.hpp"

namespace mip {

namespace {

// The container is defined little-endian; this code writes native-endian
// fixed-width integers and all supported targets are little-endian.
template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError(std::string("truncated file while reading ") + what);
    return value;
}

void write_record(std::ostream& out, const TensorRecord& rec) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(rec.name.size()));
    out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(rec.dims.size()));
    for (uint64_t d : rec.dims) write_pod<uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(rec.data.data()),
              static_cast<std::streamsize>(rec.data.size() * sizeof(float)));
}

}  // namespace

uint64_t TensorRecord::element_count() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
}

void write_record_file(const std::string& path, const char magic[4], uint32_t version,
                       const std::string& header, const std::vector<TensorRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write(magic, 4);
    write_pod<uint32_t>(out, version);
    write_pod<uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const TensorRecord& rec : records) write_record(out, rec);
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

RecordFile read_record_file(const std::string& path, const char magic[4],
                            uint32_t expected_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);

    char got_magic[4];
    in.read(got_magic, 4);
    if (!in || std::memcmp(got_magic, magic, 4) != 0)
        throw FormatError(path + ": bad magic, expected \"" + std::string(magic, 4) + "\"");

    RecordFile file;
    file.version = read_pod<uint32_t>(in, "version");
    if (file.version != expected_version)
        throw FormatError(path + ": unsupported version " + std::to_string(file.version));

    const uint64_t header_len = read_pod<uint64_t>(in, "header length");
    file.header.resize(header_len);
    in.read(file.header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw FormatError(path + ": truncated header");

    while (true) {
        uint32_t name_len;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (in.eof()) break;
        if (!in) throw FormatError(path + ": truncated record");

        TensorRecord rec;
        rec.name.resize(name_len);
        in.read(rec.name.data(), name_len);
        if (!in) throw FormatError(path + ": truncated tensor name");

        const uint32_t ndim = read_pod<uint32_t>(in, "record ndim");
        rec.dims.resize(ndim);
        for (uint32_t i = 0; i < ndim; ++i) rec.dims[i] = read_pod<uint64_t>(in, "record dims");

        rec.data.resize(rec.element_count());
        in.read(reinterpret_cast<char*>(rec.data.data()),
                static_cast<std::streamsize>(rec.data.size() * sizeof(float)));
        if (!in) throw FormatError(path + ": truncated tensor data for " + rec.name);
        file.records.push_back(std::move(rec));
    }
    return file;
}

std::string header_line(const std::string& key, long long value) {
    return key + "=" + std::to_string(value) + "\n";
}

std::string header_line(const std::string& key, float value) {
    char buf[48];
    // %.9g round-trips every finite f32 exactly.
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(value));
    return key + "=" + buf + "\n";
}

std::vector<std::pair<std::string, std::string>> parse_header(const std::string& header) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(header);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("header line without '=': " + line);
        out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return out;
}

namespace {

constexpr char kWeightMagic[4] = {'M', 'I', 'P', 'W'};

TensorRecord to_record(const std::string& name, const Matrix& m) {
    return {name, {m.rows, m.cols}, m.data};
}

TensorRecord to_record(const std::string& name, const std::vector<float>& v) {
    return {name, {v.size()}, v};
}

std::string layer_tensor_name(size_t layer, const char* field) {
    return "layers." + std::to_string(layer) + "." + field;
}

Matrix matrix_from(const TensorRecord& rec) {
    if (rec.dims.size() != 2)
        throw FormatError("tensor " + rec.name + " is not 2-dimensional");
    Matrix m(static_cast<size_t>(rec.dims[0]), static_cast<size_t>(rec.dims[1]));
    m.data = rec.data;
    return m;
}

std::vector<float> vector_from(const TensorRecord& rec) {
    if (rec.dims.size() != 1)
        throw FormatError("tensor " + rec.name + " is not 1-dimensional");
    return rec.data;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    model.validate();

    std::string header;
    header += header_line("d_model", static_cast<long long>(model.config.d_model));
    header += header_line("n_layers", static_cast<long long>(model.config.n_layers));
    header += header_line("n_heads", static_cast<long long>(model.config.n_heads));
    header += header_line("n_kv_heads", static_cast<long long>(model.config.n_kv_heads));
    header += header_line("d_head", static_cast<long long>(model.config.d_head));
    header += header_line("vocab_size", static_cast<long long>(model.config.vocab_size));
    header += header_line("max_seq", static_cast<long long>(model.config.max_seq));
    header += header_line("rope_theta", model.config.rope_theta);
    header += header_line("norm_eps", model.config.norm_eps);

    std::vector<TensorRecord> records;
    records.push_back(to_record("token_embedding", model.token_embedding));
    for (size_t l = 0; l < model.layers.size(); ++l) {
        const LayerWeights& lw = model.layers[l];
        records.push_back(to_record(layer_tensor_name(l, "attn_norm"), lw.attn_norm));
        records.push_back(to_record(layer_tensor_name(l, "wq"), lw.wq));
        records.push_back(to_record(layer_tensor_name(l, "wk"), lw.wk));
        records.push_back(to_record(layer_tensor_name(l, "wv"), lw.wv));
        records.push_back(to_record(layer_tensor_name(l, "wo"), lw.wo));
        records.push_back(to_record(layer_tensor_name(l, "mlp_norm"), lw.mlp_norm));
        records.push_back(to_record(layer_tensor_name(l, "mlp_gate"), lw.mlp_gate));
        records.push_back(to_record(layer_tensor_name(l, "mlp_up"), lw.mlp_up));
        records.push_back(to_record(layer_tensor_name(l, "mlp_down"), lw.mlp_down));
    }
    records.push_back(to_record("final_norm", model.final_norm));
    records.push_back(to_record("unembedding", model.unembedding));

    write_record_file(path, kWeightMagic, 1, header, records);
}

Model load_model(const std::string& path) {
    const RecordFile file = read_record_file(path, kWeightMagic, 1);

    Model model;
    for (const auto& [key, value] : parse_header(file.header)) {
        try {
            if (key == "d_model") model.config.d_model = std::stoi(value);
            else if (key == "n_layers") model.config.n_layers = std::stoi(value);
            else if (key == "n_heads") model.config.n_heads = std::stoi(value);
            else if (key == "n_kv_heads") model.config.n_kv_heads = std::stoi(value);
            else if (key == "d_head") model.config.d_head = std::stoi(value);
            else if (key == "vocab_size") model.config.vocab_size = std::stoi(value);
            else if (key == "max_seq") model.config.max_seq = std::stoi(value);
            else if (key == "rope_theta") model.config.rope_theta = std::stof(value);
            else if (key == "norm_eps") model.config.norm_eps = std::stof(value);
            else throw FormatError(path + ": unknown header key " + key);
        } catch (const std::invalid_argument&) {
            throw FormatError(path + ": unparsable header value for " + key);
        } catch (const std::out_of_range&) {
            throw FormatError(path + ": out-of-range header value for " + key);
        }
    }
    model.config.validate();

    model.layers.resize(static_cast<size_t>(model.config.n_layers));
    for (const TensorRecord& rec : file.records) {
        if (rec.name == "token_embedding") {
            model.token_embedding = matrix_from(rec);
        } else if (rec.name == "final_norm") {
            model.final_norm = vector_from(rec);
        } else if (rec.name == "unembedding") {
            model.unembedding = matrix_from(rec);
        } else if (rec.name.rfind("layers.", 0) == 0) {
            const size_t dot = rec.name.find('.', 7);
            if (dot == std::string::npos)
                throw FormatError(path + ": malformed tensor name " + rec.name);
            size_t layer;
            try {
                layer = std::stoul(rec.name.substr(7, dot - 7));
            } catch (const std::exception&) {
                throw FormatError(path + ": malformed tensor name " + rec.name);
            }
            if (layer >= model.layers.size())
                throw ValidationError(path + ": tensor " + rec.name + " beyond n_layers");
            LayerWeights& lw = model.layers[layer];
            const std::string field = rec.name.substr(dot + 1);
            if (field == "attn_norm") lw.attn_norm = vector_from(rec);
            else if (field == "wq") lw.wq = matrix_from(rec);
            else if (field == "wk") lw.wk = matrix_from(rec);
            else if (field == "wv") lw.wv = matrix_from(rec);
            else if (field == "wo") lw.wo = matrix_from(rec);
            else if (field == "mlp_norm") lw.mlp_norm = vector_from(rec);
            else if (field == "mlp_gate") lw.mlp_gate = matrix_from(rec);
            else if (field == "mlp_up") lw.mlp_up = matrix_from(rec);
            else if (field == "mlp_down") lw.mlp_down = matrix_from(rec);
            else throw FormatError(path + ": unknown layer tensor " + rec.name);
        } else {
            throw FormatError(path + ": unknown tensor " + rec.name);
        }
    }

    model.validate();
    return model;
}

}  // namespace mip
