#include "mip/activation.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "engine.hpp"
#include "mip/errors.hpp"

namespace mip {

namespace {

std::string key_name(const ActivationKey& key) {
    char buf[96];
    if (key.site.kind == HookKind::head_z)
        std::snprintf(buf, sizeof(buf), "head_z(layer=%d, head=%d, pos=%d)", key.site.layer,
                      key.site.head, key.position);
    else
        std::snprintf(buf, sizeof(buf), "%s(layer=%d, pos=%d)", hook_kind_name(key.site.kind),
                      key.site.layer, key.position);
    return buf;
}

}  // namespace

void ActivationCache::insert(const ActivationKey& key, std::vector<float> value) {
    if (!entries_.emplace(key, std::move(value)).second)
        throw ValidationError("cache entry written twice: " + key_name(key));
}

const std::vector<float>* ActivationCache::find(const ActivationKey& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

const std::vector<float>& ActivationCache::at(const ActivationKey& key) const {
    const auto* value = find(key);
    if (value == nullptr) throw CoverageError("cache is missing " + key_name(key));
    return *value;
}

void PositionWindow::validate() const {
    if (end_offset > 0)
        throw ValidationError("position window end offset must be <= 0 (offsets count back "
                              "from the final position)");
    if (start_offset > end_offset + 1)
        throw ValidationError("position window start offset exceeds end offset");
}

std::pair<int, int> PositionWindow::resolve(int seq_len) const {
    validate();
    if (is_empty()) throw ValidationError("cannot resolve an empty position window");
    const int first = seq_len - 1 + start_offset;
    const int last = seq_len - 1 + end_offset;
    if (first < 0)
        throw BoundsError("position window " + window_to_string(*this) +
                          " reaches before the start of a " + std::to_string(seq_len) +
                          "-token sequence");
    return {first, last};
}

PositionWindow parse_window(const std::string& text) {
    const size_t colon = text.find(':');
    if (colon == std::string::npos)
        throw FormatError("window must be start:end, got: " + text);
    PositionWindow window;
    try {
        size_t used = 0;
        window.start_offset = std::stoi(text.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("");
        window.end_offset = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw FormatError("window must be start:end, got: " + text);
    }
    window.validate();
    return window;
}

std::string window_to_string(const PositionWindow& window) {
    return std::to_string(window.start_offset) + ":" + std::to_string(window.end_offset);
}

void PatchSpec::validate(const ModelConfig& config) const {
    window.validate();
    for (const auto& [layer, head] : heads) {
        if (layer < 0 || layer >= config.n_layers)
            throw BoundsError("patch layer " + std::to_string(layer) + " out of range");
        if (head < 0 || head >= config.n_heads)
            throw BoundsError("patch head " + std::to_string(head) + " out of range");
    }
}

ActivationCache capture(const Model& model, const TokenSequence& tokens,
                        const std::vector<HookSite>& sites) {
    ActivationCache cache;
    cache.meta.seq_len = static_cast<int>(tokens.size());
    detail::run_transformer(model, tokens, sites, &cache, nullptr);
    return cache;
}

namespace {

// Expands patch specs into per-(layer, head, position) replacement values,
// aligning source and target positions by offset from the final token.
std::map<detail::ZKey, std::vector<float>> build_replacements(
    const ModelConfig& config, int target_len, const std::vector<PatchSpec>& patches) {
    std::map<detail::ZKey, std::vector<float>> replace;
    for (const PatchSpec& patch : patches) {
        patch.validate(config);
        if (patch.window.is_empty() || patch.heads.empty()) continue;
        if (patch.source == nullptr)
            throw CoverageError("patch spec has no source cache attached");

        const int source_len = patch.source->meta.seq_len;
        const auto [target_first, target_last] = patch.window.resolve(target_len);
        patch.window.resolve(source_len);  // bounds check on the source run too

        for (const auto& [layer, head] : patch.heads) {
            for (int pos = target_first; pos <= target_last; ++pos) {
                const int offset = pos - (target_len - 1);
                const int source_pos = source_len - 1 + offset;
                const std::vector<float>& value =
                    patch.source->at({head_z_site(layer, head), source_pos});
                if (value.size() != static_cast<size_t>(config.d_head))
                    throw ValidationError("cached z has wrong dimension for patching");
                if (!replace.emplace(detail::ZKey{layer, head, pos}, value).second)
                    throw CoverageError("patch specs overlap at " +
                                        key_name({head_z_site(layer, head), pos}));
            }
        }
    }
    return replace;
}

}  // namespace

Matrix patched_forward(const Model& model, const TokenSequence& tokens,
                       const std::vector<PatchSpec>& patches) {
    const auto replace = build_replacements(model.config, static_cast<int>(tokens.size()), patches);
    detail::ZHooks hooks;
    hooks.replace = &replace;
    return detail::run_transformer(model, tokens, {}, nullptr, &hooks);
}

Matrix patched_forward(const Model& model, const TokenSequence& tokens, const PatchSpec& patch) {
    return patched_forward(model, tokens, std::vector<PatchSpec>{patch});
}

PatchSpec layer_range_patch(const ModelConfig& config, int start_layer, int k,
                            PositionWindow window, const ActivationCache* source) {
    if (start_layer < 0 || k < 0 || start_layer + k > config.n_layers)
        throw BoundsError("layer range [" + std::to_string(start_layer) + ", " +
                          std::to_string(start_layer + k) + ") out of range for " +
                          std::to_string(config.n_layers) + " layers");
    PatchSpec spec;
    spec.window = window;
    spec.source = source;
    for (int layer = start_layer; layer < start_layer + k; ++layer)
        for (int head = 0; head < config.n_heads; ++head) spec.heads.emplace(layer, head);
    return spec;
}

std::vector<HookSite> all_head_z_sites(const ModelConfig& config) {
    std::vector<HookSite> sites;
    sites.reserve(static_cast<size_t>(config.n_layers) * config.n_heads);
    for (int layer = 0; layer < config.n_layers; ++layer)
        for (int head = 0; head < config.n_heads; ++head) sites.push_back(head_z_site(layer, head));
    return sites;
}

namespace {

constexpr uint32_t kSentinelAttnOut = 0xFFFFFFFFu;
constexpr uint32_t kSentinelMlpOut = 0xFFFFFFFEu;
constexpr uint32_t kSentinelResidPre = 0xFFFFFFFDu;
constexpr uint32_t kSentinelResidPost = 0xFFFFFFFCu;

uint32_t site_code(const HookSite& site) {
    switch (site.kind) {
        case HookKind::head_z: return static_cast<uint32_t>(site.head);
        case HookKind::attn_out: return kSentinelAttnOut;
        case HookKind::mlp_out: return kSentinelMlpOut;
        case HookKind::resid_pre: return kSentinelResidPre;
        case HookKind::resid_post: return kSentinelResidPost;
    }
    throw ValidationError("unknown hook site kind");
}

HookSite site_from_code(uint32_t layer, uint32_t code) {
    switch (code) {
        case kSentinelAttnOut: return attn_out_site(static_cast<int>(layer));
        case kSentinelMlpOut: return mlp_out_site(static_cast<int>(layer));
        case kSentinelResidPre: return resid_pre_site(static_cast<int>(layer));
        case kSentinelResidPost: return resid_post_site(static_cast<int>(layer));
        default: return head_z_site(static_cast<int>(layer), static_cast<int>(code));
    }
}

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

void save_cache(const ActivationCache& cache, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write("MIPC", 4);
    for (const auto& [key, value] : cache) {
        write_pod<uint32_t>(out, static_cast<uint32_t>(key.site.layer));
        write_pod<uint32_t>(out, site_code(key.site));
        write_pod<uint32_t>(out, static_cast<uint32_t>(key.position));
        write_pod<uint32_t>(out, static_cast<uint32_t>(value.size()));
        out.write(reinterpret_cast<const char*>(value.data()),
                  static_cast<std::streamsize>(value.size() * sizeof(float)));
    }
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

ActivationCache load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MIPC", 4) != 0)
        throw FormatError(path + ": bad magic, expected \"MIPC\"");

    ActivationCache cache;
    while (true) {
        uint32_t fields[4];
        in.read(reinterpret_cast<char*>(fields), sizeof(fields[0]));
        if (in.eof()) break;
        in.read(reinterpret_cast<char*>(fields + 1), 3 * sizeof(fields[0]));
        if (!in) throw FormatError(path + ": truncated record header");
        std::vector<float> value(fields[3]);
        in.read(reinterpret_cast<char*>(value.data()),
                static_cast<std::streamsize>(value.size() * sizeof(float)));
        if (!in) throw FormatError(path + ": truncated record data");
        const ActivationKey key{site_from_code(fields[0], fields[1]),
                                static_cast<int>(fields[2])};
        cache.insert(key, std::move(value));
        cache.meta.seq_len = std::max(cache.meta.seq_len, static_cast<int>(fields[2]) + 1);
    }
    return cache;
}

void save_patch_spec(const PatchSpec& spec, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    for (const auto& [layer, head] : spec.heads) out << layer << ',' << head << '\n';
    out << "window=" << window_to_string(spec.window) << '\n';
    out.flush();
    if (!out) throw FormatError("I/O failure writing " + path);
}

PatchSpec load_patch_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    PatchSpec spec;
    bool saw_window = false;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.rfind("window=", 0) == 0) {
            spec.window = parse_window(line.substr(7));
            saw_window = true;
            continue;
        }
        const size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw FormatError(path + ":" + std::to_string(line_no) +
                              ": expected `layer,head` or `window=start:end`");
        try {
            size_t used = 0;
            const int layer = std::stoi(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("");
            const int head = std::stoi(line.substr(comma + 1), &used);
            if (used != line.size() - comma - 1) throw std::invalid_argument("");
            spec.heads.emplace(layer, head);
        } catch (const std::exception&) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": unparsable head pair");
        }
    }
    if (!saw_window)
        throw FormatError(path + ": missing window=start:end line");
    return spec;
}

}  // namespace mip
