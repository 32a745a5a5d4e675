#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mip/model.hpp"

namespace mip {

// One named tensor in the binary container: u32 name_len, name bytes,
// u32 ndim, u64 dims[ndim], f32 data row-major. Little-endian throughout.
struct TensorRecord {
    std::string name;
    std::vector<uint64_t> dims;
    std::vector<float> data;

    uint64_t element_count() const;
};

// Generic container shared by the weight, probe, and eraser files:
// 4-byte magic, u32 version, u64 header_len, UTF-8 header text, then
// tensor records until EOF. Writing is byte-deterministic.
void write_record_file(const std::string& path, const char magic[4], uint32_t version,
                       const std::string& header, const std::vector<TensorRecord>& records);

struct RecordFile {
    uint32_t version = 0;
    std::string header;
    std::vector<TensorRecord> records;
};

// Throws FormatError on wrong magic/version or truncated data.
RecordFile read_record_file(const std::string& path, const char magic[4],
                            uint32_t expected_version);

// Header helpers: `key=value` lines, '\n'-terminated. Parsing ignores blank
// lines; duplicate keys keep the last value.
std::string header_line(const std::string& key, long long value);
std::string header_line(const std::string& key, float value);
std::vector<std::pair<std::string, std::string>> parse_header(const std::string& header);

// Model weight file, magic "MIPW" version 1. Tensor names are
// token_embedding, final_norm, unembedding, and layers.<i>.<field> for
// field in {attn_norm, wq, wk, wv, wo, mlp_norm, mlp_gate, mlp_up, mlp_down}.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace mip
